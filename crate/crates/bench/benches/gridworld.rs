use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::Rng;
use rhea_core::gridworld::Action;
use rhea_core::{rng, EnvSpec, GridState};

fn bench(c: &mut Criterion) {
    for spec in [EnvSpec::door_key(8), EnvSpec::dynamic_obstacles(8)] {
        c.bench_function(&format!("reset_{spec}"), |b| {
            let mut seed = 0u64;
            b.iter(|| {
                seed += 1;
                GridState::reset(spec, black_box(seed), spec.default_max_steps).unwrap()
            })
        });
        c.bench_function(&format!("step_{spec}"), |b| {
            let mut r = rng::seeded(3);
            let (mut env, _) = GridState::reset(spec, 0, spec.default_max_steps).unwrap();
            b.iter(|| {
                if env.is_done() {
                    env = GridState::reset(spec, r.gen(), spec.default_max_steps)
                        .unwrap()
                        .0;
                }
                env.step(Action::ALL[r.gen_range(0..7)]).unwrap()
            })
        });
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);

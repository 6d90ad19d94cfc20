use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rhea_core::ppo::network::forward_batch;
use rhea_core::ppo::{
    minibatch_loss, Collector, EnvAssignment, Minibatch, PolicyParams, PpoConfig,
};
use rhea_core::{rng, EnvSpec, StepBudgetSchedule};

fn minibatch(params: &PolicyParams, cfg: &PpoConfig) -> Minibatch {
    let schedule = StepBudgetSchedule::default();
    let mut r = rng::seeded(0);
    let mut c = Collector::new(
        EnvAssignment::RoundRobin(vec![EnvSpec::door_key(8)]),
        16,
        &schedule,
        0,
        &mut r,
    )
    .unwrap();
    let mut buf = c
        .collect(params, cfg.logit_head, 16, &schedule, 0, &mut r)
        .unwrap();
    buf.compute_advantages(cfg.discount, cfg.gae_lambda);
    let idx: Vec<usize> = (0..cfg.batch_size).collect();
    Minibatch::gather(&buf, &buf.advantages, &idx).unwrap()
}

fn bench(c: &mut Criterion) {
    let cfg = PpoConfig::default();
    let params = PolicyParams::init(&mut rng::seeded(1));
    let mb = minibatch(&params, &cfg);
    c.bench_function("forward_256", |b| {
        b.iter(|| {
            forward_batch(
                black_box(&params),
                mb.observations.data(),
                mb.len(),
                cfg.logit_head,
            )
            .unwrap()
        })
    });
    c.bench_function("loss_and_gradient_256", |b| {
        b.iter_batched(
            || params.clone(),
            |p| minibatch_loss(&p, &mb, &cfg).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench);
criterion_main!(benches);

//! Layout, dynamics and reward properties of the native gridworlds.

mod common;

use common::bfs_plan;
use proptest::prelude::*;
use rand::Rng;
use rhea_core::gridworld::{success_reward, Action, Cell, Outcome};
use rhea_core::{rng, EnvKind, EnvSpec, GridState, StepBudgetSchedule};

fn count(env: &GridState, pred: impl Fn(Cell) -> bool) -> usize {
    env.cells().iter().filter(|c| pred(**c)).count()
}

#[test]
fn door_key_layouts_are_solvable() {
    for size in [6, 8] {
        let spec = EnvSpec::door_key(size);
        for seed in 0..500 {
            let (env, _) = GridState::reset(spec, seed, spec.default_max_steps).unwrap();
            assert_eq!(count(&env, |c| c == Cell::Key), 1);
            assert_eq!(count(&env, |c| matches!(c, Cell::Door { open: false })), 1);
            assert_eq!(count(&env, |c| c == Cell::Goal), 1);
            let plan = bfs_plan(&env)
                .unwrap_or_else(|| panic!("{spec} seed {seed} unsolvable\n{}", env.render()));
            // the plan must also work in the real dynamics
            let mut live = env.clone();
            let mut last = None;
            for a in &plan {
                last = Some(live.step(*a).unwrap());
            }
            let last = last.unwrap();
            assert_eq!(last.outcome, Some(Outcome::Goal), "{spec} seed {seed}");
            assert_eq!(
                last.reward,
                success_reward(plan.len() as u32, spec.default_max_steps)
            );
        }
    }
}

#[test]
fn obstacles_never_start_on_agent_or_goal() {
    for size in [6, 8, 10, 12] {
        let spec = EnvSpec::dynamic_obstacles(size);
        for seed in 0..100 {
            let (env, _) = GridState::reset(spec, seed, spec.default_max_steps).unwrap();
            assert_eq!(env.obstacles().len(), size / 2);
            let goal = (size - 2, size - 2);
            for &o in env.obstacles() {
                assert_ne!(o, env.agent_pos());
                assert_ne!(o, goal);
                assert_eq!(env.cell(o.0, o.1), Cell::Obstacle);
            }
        }
    }
}

fn replay(spec: EnvSpec, seed: u64, actions: &[Action]) -> Vec<(String, f64, bool)> {
    let (mut env, _) = GridState::reset(spec, seed, spec.default_max_steps).unwrap();
    let mut trace = vec![(env.render(), 0.0, false)];
    for &a in actions {
        if env.is_done() {
            break;
        }
        let s = env.step(a).unwrap();
        trace.push((env.render(), s.reward, s.done));
    }
    trace
}

#[test]
fn seeded_replays_are_deterministic() {
    let mut r = rng::seeded(42);
    for kind in [EnvKind::DoorKey, EnvKind::DynamicObstacles] {
        for i in 0..100 {
            let spec = EnvSpec::new(kind, [6, 8, 10, 12][i % 4]).unwrap();
            let seed: u64 = r.gen();
            let actions: Vec<Action> = (0..60).map(|_| Action::ALL[r.gen_range(0..7)]).collect();
            assert_eq!(replay(spec, seed, &actions), replay(spec, seed, &actions));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn returns_and_obstacles_stay_in_bounds(
        seed in any::<u64>(),
        size in prop::sample::select(vec![6usize, 8, 10, 12]),
        door_key in any::<bool>(),
        actions in prop::collection::vec(0usize..7, 1..300),
    ) {
        let spec = if door_key { EnvSpec::door_key(size) } else { EnvSpec::dynamic_obstacles(size) };
        let (mut env, _) = GridState::reset(spec, seed, 40).unwrap();
        let n_obstacles = env.obstacles().len();
        let mut total = 0.0;
        for a in actions {
            if env.is_done() {
                break;
            }
            let s = env.step(Action::from_index(a).unwrap()).unwrap();
            total += s.reward;
            prop_assert_eq!(env.obstacles().len(), n_obstacles);
            match s.outcome {
                Some(Outcome::Goal) => prop_assert!(s.reward > 0.0 && s.reward <= 1.0),
                Some(Outcome::Collision) => prop_assert_eq!(s.reward, -1.0),
                _ => prop_assert_eq!(s.reward, 0.0),
            }
        }
        prop_assert!((-1.0..=1.0).contains(&total));
    }

    #[test]
    fn schedule_is_monotone(a in 0u64..4_000_000, b in 0u64..4_000_000) {
        let s = StepBudgetSchedule::default();
        let spec = EnvSpec::door_key(12);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.max_steps_for(&spec, hi) <= s.max_steps_for(&spec, lo));
    }
}

#[test]
fn success_reward_decreases_with_steps() {
    for max in [144u32, 360, 1440] {
        for t in 0..max {
            assert!(success_reward(t + 1, max) < success_reward(t, max));
        }
    }
}

#[test]
fn schedule_endpoints() {
    let s = StepBudgetSchedule::default();
    for size in [6, 8, 10, 12] {
        let spec = EnvSpec::door_key(size);
        assert_eq!(s.max_steps_for(&spec, 0), spec.default_max_steps);
        assert_eq!(s.max_steps_for(&spec, 500_000), spec.default_max_steps);
        let floor = (0.15 * spec.default_max_steps as f64).round() as u32;
        assert_eq!(s.max_steps_for(&spec, 2_200_000), floor);
        assert_eq!(s.max_steps_for(&spec, 9_000_000), floor);
    }
}

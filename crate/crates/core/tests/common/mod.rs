//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use rand::Rng as _;
use rhea_core::curriculum::RosterEval;
use rhea_core::gridworld::{Action, Cell};
use rhea_core::ppo::EnvAssignment;
use rhea_core::rng::Rng;
use rhea_core::{EnvSpec, GridState, Learner, PpoConfig, Result};

/// Learner whose evaluation is a fixed function of the environments it
/// trained on last: every roster entry scores the mean table value of
/// those environments. Training never fails and rounds frames up to
/// `quantum`.
#[derive(Clone, Debug)]
pub struct StubLearner {
    pub table: HashMap<EnvSpec, f64>,
    pub quantum: u64,
    pub last: Vec<EnvSpec>,
    /// Every training call: assignment, frames trained and the first draw
    /// from its rng.
    pub history: Vec<(EnvAssignment, u64, u64)>,
    pub frames: u64,
}

impl StubLearner {
    pub fn new(table: &[(EnvSpec, f64)]) -> Self {
        StubLearner {
            table: table.iter().copied().collect(),
            quantum: 1,
            last: Vec::new(),
            history: Vec::new(),
            frames: 0,
        }
    }

    pub fn score(&self) -> f64 {
        if self.last.is_empty() {
            return 0.0;
        }
        self.last
            .iter()
            .map(|e| self.table.get(e).copied().unwrap_or(0.0))
            .sum::<f64>()
            / self.last.len() as f64
    }
}

impl Learner for StubLearner {
    fn train(&mut self, assignment: &EnvAssignment, frames: u64, rng: &mut Rng) -> Result<u64> {
        let trained = frames.div_ceil(self.quantum) * self.quantum;
        self.last = assignment.pool().to_vec();
        self.history.push((assignment.clone(), trained, rng.gen()));
        self.frames += trained;
        Ok(trained)
    }

    fn evaluate(&self, roster: &[EnvSpec], _rng: &mut Rng) -> Result<RosterEval> {
        Ok(RosterEval::from_per_env(vec![self.score(); roster.len()]))
    }
}

pub fn door_keys(sizes: &[usize]) -> Vec<EnvSpec> {
    sizes.iter().map(|&s| EnvSpec::door_key(s)).collect()
}

/// PPO settings small enough for tests that train real networks.
pub fn tiny_ppo() -> PpoConfig {
    PpoConfig {
        num_processes: 2,
        frames_per_process: 16,
        batch_size: 16,
        update_epochs: 2,
        ..PpoConfig::default()
    }
}

/// Direct-sum form of the damped curriculum score.
pub fn score_oracle(rewards: &[f64], gamma: f64) -> f64 {
    rewards
        .iter()
        .enumerate()
        .map(|(j, r)| r * gamma.powi(j as i32))
        .sum()
}

/// Deterministic fitness: damped mean of a per-environment table.
pub fn table_fitness(c: &rhea_core::Curriculum, table: &HashMap<EnvSpec, f64>) -> f64 {
    let per_step: Vec<f64> = c
        .steps()
        .iter()
        .map(|s| s.envs().iter().map(|e| table[e]).sum::<f64>() / s.envs().len() as f64)
        .collect();
    score_oracle(&per_step, 0.9)
}

type State = (usize, usize, usize, bool, bool);

/// Shortest action plan to the goal found by breadth-first search over
/// (position, direction, carrying key, door open), using only the grid
/// rules: walls block, keys block until picked up, a locked door opens
/// with the key.
pub fn bfs_plan(env: &GridState) -> Option<Vec<Action>> {
    let n = env.size();
    let (ax, ay) = env.agent_pos();
    let key_cell = (0..n * n)
        .find(|&i| env.cells()[i] == Cell::Key)
        .map(|i| (i % n, i / n));
    let start: State = (ax, ay, env.agent_dir().index(), env.carrying_key(), false);
    let dirs = [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)];
    let mut prev: HashMap<State, (State, Action)> = HashMap::new();
    let mut queue = VecDeque::from([start]);
    prev.insert(start, (start, Action::Done));
    while let Some(s) = queue.pop_front() {
        let (x, y, d, key, open) = s;
        let (fx, fy) = (x as i64 + dirs[d].0, y as i64 + dirs[d].1);
        if fx < 0 || fy < 0 || fx >= n as i64 || fy >= n as i64 {
            continue;
        }
        let (fx, fy) = (fx as usize, fy as usize);
        let front = match env.cell(fx, fy) {
            Cell::Key if key => Cell::Empty,
            Cell::Door { .. } => Cell::Door { open },
            c => c,
        };
        let mut moves: Vec<(State, Action)> = vec![
            ((x, y, (d + 3) % 4, key, open), Action::Left),
            ((x, y, (d + 1) % 4, key, open), Action::Right),
        ];
        match front {
            Cell::Goal => {
                let mut plan = vec![Action::Forward];
                let mut cur = s;
                while cur != start {
                    let (p, a) = prev[&cur];
                    plan.push(a);
                    cur = p;
                }
                plan.reverse();
                return Some(plan);
            }
            Cell::Empty | Cell::Door { open: true } => {
                moves.push(((fx, fy, d, key, open), Action::Forward))
            }
            Cell::Key if Some((fx, fy)) == key_cell => {
                moves.push(((x, y, d, true, open), Action::Pickup))
            }
            Cell::Door { open: false } if key => moves.push(((x, y, d, key, true), Action::Toggle)),
            _ => {}
        }
        for (next, a) in moves {
            if let std::collections::hash_map::Entry::Vacant(e) = prev.entry(next) {
                e.insert((s, a));
                queue.push_back(next);
            }
        }
    }
    None
}

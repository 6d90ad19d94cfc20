//! Experience collection across parallel workers and GAE.

use rand::Rng as _;

use super::network::{forward_batch, sample_action, softmax, LogitHead, PolicyParams};
use crate::error::{Error, Result};
use crate::gridworld::{
    Action, EnvSpec, EpisodeResult, GridState, Observation, StepBudgetSchedule, NUM_ACTIONS,
};
use crate::rng::Rng;

/// How workers are mapped onto environments.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvAssignment {
    /// Worker `w` always plays `pool[w % pool.len()]`.
    RoundRobin(Vec<EnvSpec>),
    /// Worker `w` starts on `pool[w % pool.len()]` and moves to the next
    /// pool entry after every finished episode.
    CycleEpisodes(Vec<EnvSpec>),
}

impl EnvAssignment {
    pub fn pool(&self) -> &[EnvSpec] {
        match self {
            EnvAssignment::RoundRobin(p) | EnvAssignment::CycleEpisodes(p) => p,
        }
    }
}

#[derive(Clone, Debug)]
struct Worker {
    pool_index: usize,
    env: GridState,
    obs: Observation,
    episode_return: f64,
}

/// A finished episode seen during collection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub worker: usize,
    pub spec: EnvSpec,
    pub result: EpisodeResult,
}

/// Frames gathered by one [`Collector::collect`] call.
///
/// Per-frame vectors are time-major: frame `t` of worker `w` lives at
/// `t * num_workers + w`.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBuffer {
    pub num_workers: usize,
    pub frames_per_worker: usize,
    /// Normalized observations, `len() * 75` values.
    pub observations: Vec<f64>,
    pub actions: Vec<usize>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// Critic value of each worker's observation after the last frame.
    pub bootstrap: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episodes: Vec<EpisodeRecord>,
    /// Environment each frame was played in.
    pub frame_envs: Vec<EnvSpec>,
}

impl RolloutBuffer {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    /// Fill `advantages` and `returns` by GAE, worker by worker.
    pub fn compute_advantages(&mut self, discount: f64, lambda: f64) {
        let (w, t) = (self.num_workers, self.frames_per_worker);
        self.advantages = vec![0.0; w * t];
        self.returns = vec![0.0; w * t];
        for worker in 0..w {
            let col = |v: &[f64]| (0..t).map(|i| v[i * w + worker]).collect::<Vec<_>>();
            let rewards = col(&self.rewards);
            let values = col(&self.values);
            let dones: Vec<bool> = (0..t).map(|i| self.dones[i * w + worker]).collect();
            let (adv, ret) = gae(
                &rewards,
                &values,
                &dones,
                self.bootstrap[worker],
                discount,
                lambda,
            );
            for i in 0..t {
                self.advantages[i * w + worker] = adv[i];
                self.returns[i * w + worker] = ret[i];
            }
        }
    }
}

/// Generalized advantage estimation over one worker's trajectory.
///
/// `dones[t]` marks that the episode ended after frame `t`, which cuts
/// both the bootstrap and the advantage recursion. `bootstrap` is the
/// value of the state following the last frame. Returns
/// `(advantages, returns)` with `returns = advantages + values`.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    discount: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert!(
        values.len() == n && dones.len() == n,
        "trajectory lengths differ"
    );
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let mask = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + discount * next_value * mask - values[t];
        adv[t] = delta + discount * lambda * mask * next_adv;
        next_value = values[t];
        next_adv = adv[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// A set of workers, each owning one live environment.
#[derive(Clone, Debug)]
pub struct Collector {
    assignment: EnvAssignment,
    workers: Vec<Worker>,
}

impl Collector {
    pub fn new(
        assignment: EnvAssignment,
        num_workers: usize,
        schedule: &StepBudgetSchedule,
        iterations_done: u64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if assignment.pool().is_empty() {
            return Err(Error::config("environment pool is empty"));
        }
        if num_workers == 0 {
            return Err(Error::config("need at least one worker"));
        }
        let n = assignment.pool().len();
        let mut workers = Vec::with_capacity(num_workers);
        for w in 0..num_workers {
            let pool_index = w % n;
            let spec = assignment.pool()[pool_index];
            let max_steps = schedule.max_steps_for(&spec, iterations_done);
            let (env, obs) = GridState::reset(spec, rng.gen(), max_steps)?;
            workers.push(Worker {
                pool_index,
                env,
                obs,
                episode_return: 0.0,
            });
        }
        Ok(Collector {
            assignment,
            workers,
        })
    }

    pub fn assignment(&self) -> &EnvAssignment {
        &self.assignment
    }

    pub fn num_workers(&self) -> usize {
        self.workers.len()
    }

    /// Environment each worker is currently playing.
    pub fn current_envs(&self) -> Vec<EnvSpec> {
        self.workers.iter().map(|w| w.env.spec()).collect()
    }

    /// Step every worker `frames_per_worker` times with actions sampled
    /// from the policy. Finished episodes reset immediately with the step
    /// budget the schedule gives at `iterations_done`.
    pub fn collect(
        &mut self,
        params: &PolicyParams,
        head: LogitHead,
        frames_per_worker: usize,
        schedule: &StepBudgetSchedule,
        iterations_done: u64,
        rng: &mut Rng,
    ) -> Result<RolloutBuffer> {
        let nw = self.workers.len();
        let total = nw * frames_per_worker;
        let obs_len = self.workers[0].obs.grid.len();
        let mut buf = RolloutBuffer {
            num_workers: nw,
            frames_per_worker,
            observations: Vec::with_capacity(total * obs_len),
            actions: Vec::with_capacity(total),
            log_probs: Vec::with_capacity(total),
            values: Vec::with_capacity(total),
            rewards: Vec::with_capacity(total),
            dones: Vec::with_capacity(total),
            bootstrap: Vec::new(),
            advantages: Vec::new(),
            returns: Vec::new(),
            episodes: Vec::new(),
            frame_envs: Vec::with_capacity(total),
        };
        let mut batch = Vec::with_capacity(nw * obs_len);
        for _ in 0..frames_per_worker {
            batch.clear();
            for w in &self.workers {
                w.obs.write_normalized(&mut batch);
            }
            let (logits, values) = forward_batch(params, &batch, nw, head)?;
            buf.observations.extend_from_slice(&batch);
            for (i, worker) in self.workers.iter_mut().enumerate() {
                let probs = softmax(&logits[i * NUM_ACTIONS..(i + 1) * NUM_ACTIONS]);
                let a = sample_action(&probs, rng);
                let step = worker.env.step(Action::from_index(a)?)?;
                worker.episode_return += step.reward;
                buf.actions.push(a);
                buf.log_probs.push(probs[a].ln());
                buf.values.push(values[i]);
                buf.rewards.push(step.reward);
                buf.dones.push(step.done);
                buf.frame_envs.push(worker.env.spec());
                if step.done {
                    buf.episodes.push(EpisodeRecord {
                        worker: i,
                        spec: worker.env.spec(),
                        result: EpisodeResult {
                            episode_return: worker.episode_return,
                            taken_steps: worker.env.steps_taken(),
                            outcome: step.outcome.expect("done implies outcome"),
                        },
                    });
                    if let EnvAssignment::CycleEpisodes(pool) = &self.assignment {
                        worker.pool_index = (worker.pool_index + 1) % pool.len();
                    }
                    let spec = self.assignment.pool()[worker.pool_index];
                    let max_steps = schedule.max_steps_for(&spec, iterations_done);
                    let (env, obs) = GridState::reset(spec, rng.gen(), max_steps)?;
                    worker.env = env;
                    worker.obs = obs;
                    worker.episode_return = 0.0;
                } else {
                    worker.obs = step.observation;
                }
            }
        }
        batch.clear();
        for w in &self.workers {
            w.obs.write_normalized(&mut batch);
        }
        let (_, bootstrap) = forward_batch(params, &batch, nw, head)?;
        buf.bootstrap = bootstrap;
        Ok(buf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn one_step_done_advantage_is_reward_minus_value() {
        let (adv, ret) = gae(&[0.7], &[0.2], &[true], 123.0, 0.99, 0.95);
        assert!((adv[0] - 0.5).abs() < 1e-15);
        assert!((ret[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_gives_td_errors() {
        let r = [0.0, 0.5, 0.0, 1.0];
        let v = [0.1, 0.2, 0.3, 0.4];
        let d = [false, false, true, false];
        let (adv, _) = gae(&r, &v, &d, 0.6, 0.9, 0.0);
        let expected = [
            0.0 + 0.9 * 0.2 - 0.1,
            0.5 + 0.9 * 0.3 - 0.2,
            0.0 - 0.3,
            1.0 + 0.9 * 0.6 - 0.4,
        ];
        for (a, e) in adv.iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn five_step_hand_trace() {
        // Hand-unrolled recursion, gamma=0.9, lambda=0.8, episode ends after t=2.
        let r = [0.0, 0.0, 1.0, 0.0, 0.5];
        let v = [0.5, 0.6, 0.7, 0.1, 0.2];
        let d = [false, false, true, false, false];
        let boot = 0.3;
        let (g, l) = (0.9, 0.8);
        let d4 = 0.5 + g * boot - 0.2;
        let a4 = d4;
        let d3 = 0.0 + g * 0.2 - 0.1;
        let a3 = d3 + g * l * a4;
        let d2 = 1.0 - 0.7;
        let a2 = d2;
        let d1 = 0.0 + g * 0.7 - 0.6;
        let a1 = d1 + g * l * a2;
        let d0 = 0.0 + g * 0.6 - 0.5;
        let a0 = d0 + g * l * a1;
        let (adv, ret) = gae(&r, &v, &d, boot, g, l);
        for (x, y) in adv.iter().zip([a0, a1, a2, a3, a4]) {
            assert!((x - y).abs() < 1e-12);
        }
        for i in 0..5 {
            assert!((ret[i] - (adv[i] + v[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn single_worker_collects_requested_frames() {
        let schedule = StepBudgetSchedule::default();
        let mut r = rng::seeded(1);
        let mut c = Collector::new(
            EnvAssignment::RoundRobin(vec![EnvSpec::door_key(6)]),
            1,
            &schedule,
            0,
            &mut r,
        )
        .unwrap();
        let buf = c
            .collect(
                &PolicyParams::zeros(),
                LogitHead::Tanh,
                128,
                &schedule,
                0,
                &mut r,
            )
            .unwrap();
        assert_eq!(buf.len(), 128);
        assert_eq!(buf.observations.len(), 128 * 75);
    }

    #[test]
    fn round_robin_partitions_workers() {
        let schedule = StepBudgetSchedule::default();
        let pool = vec![EnvSpec::door_key(6), EnvSpec::door_key(8)];
        let c = Collector::new(
            EnvAssignment::RoundRobin(pool.clone()),
            4,
            &schedule,
            0,
            &mut rng::seeded(0),
        )
        .unwrap();
        assert_eq!(c.current_envs(), vec![pool[0], pool[1], pool[0], pool[1]]);
    }

    #[test]
    fn identical_seeds_identical_buffers() {
        let schedule = StepBudgetSchedule::default();
        let params = PolicyParams::init(&mut rng::seeded(5));
        let run = || {
            let mut r = rng::seeded(9);
            let pool = vec![EnvSpec::door_key(6), EnvSpec::dynamic_obstacles(6)];
            let mut c =
                Collector::new(EnvAssignment::RoundRobin(pool), 4, &schedule, 0, &mut r).unwrap();
            c.collect(&params, LogitHead::Tanh, 64, &schedule, 0, &mut r)
                .unwrap()
        };
        assert_eq!(run(), run());
    }
}

use rand::Rng as _;

use super::network::{forward_batch, sample_action, softmax, LogitHead, PolicyParams};
use crate::error::{Error, Result};
use crate::gridworld::{Action, EnvSpec, GridState, Observation, StepBudgetSchedule, NUM_ACTIONS};
use crate::rng::Rng;

/// Mean episode return of the stochastic policy over `episodes` fresh
/// episodes of `spec`, at the step budget the schedule gives for
/// `iterations_done`. Episodes run in lockstep so the network sees one
/// batch per step.
pub fn evaluate(
    params: &PolicyParams,
    head: LogitHead,
    spec: EnvSpec,
    episodes: usize,
    schedule: &StepBudgetSchedule,
    iterations_done: u64,
    rng: &mut Rng,
) -> Result<f64> {
    if episodes == 0 {
        return Err(Error::config("evaluation needs at least one episode"));
    }
    let max_steps = schedule.max_steps_for(&spec, iterations_done);
    let mut envs: Vec<(GridState, Observation)> = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        envs.push(GridState::reset(spec, rng.gen(), max_steps)?);
    }
    let mut returns = vec![0.0; episodes];
    let mut live: Vec<usize> = (0..episodes).collect();
    let mut batch = Vec::new();
    while !live.is_empty() {
        batch.clear();
        for &i in &live {
            envs[i].1.write_normalized(&mut batch);
        }
        let (logits, _) = forward_batch(params, &batch, live.len(), head)?;
        let mut still = Vec::with_capacity(live.len());
        for (k, &i) in live.iter().enumerate() {
            let probs = softmax(&logits[k * NUM_ACTIONS..(k + 1) * NUM_ACTIONS]);
            let a = sample_action(&probs, rng);
            let step = envs[i].0.step(Action::from_index(a)?)?;
            returns[i] += step.reward;
            envs[i].1 = step.observation;
            if !step.done {
                still.push(i);
            }
        }
        live = still;
    }
    Ok(returns.iter().sum::<f64>() / episodes as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn same_seed_same_mean_and_bounded() {
        let params = PolicyParams::init(&mut rng::seeded(2));
        let s = StepBudgetSchedule::default();
        for spec in [EnvSpec::door_key(6), EnvSpec::dynamic_obstacles(6)] {
            let a = evaluate(
                &params,
                LogitHead::Tanh,
                spec,
                5,
                &s,
                0,
                &mut rng::seeded(4),
            )
            .unwrap();
            let b = evaluate(
                &params,
                LogitHead::Tanh,
                spec,
                5,
                &s,
                0,
                &mut rng::seeded(4),
            )
            .unwrap();
            assert_eq!(a, b);
            assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn zero_episodes_rejected() {
        let s = StepBudgetSchedule::default();
        assert!(evaluate(
            &PolicyParams::zeros(),
            LogitHead::Tanh,
            EnvSpec::door_key(6),
            0,
            &s,
            0,
            &mut rng::seeded(0)
        )
        .is_err());
    }
}

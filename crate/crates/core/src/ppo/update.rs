use rand::seq::SliceRandom;

use super::network::{forward_tape, PolicyParams};
use super::rollout::RolloutBuffer;
use super::PpoConfig;
use crate::error::{Error, Result};
use crate::gridworld::DEFAULT_VIEW_SIZE;
use crate::rng::Rng;
use crate::tensor::{AdamState, Tape, Tensor, Var};

const OBS_LEN: usize = DEFAULT_VIEW_SIZE * DEFAULT_VIEW_SIZE * 3;

/// One minibatch of frames prepared for a loss evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Minibatch {
    /// `B x 5 x 5 x 3` normalized observations.
    pub observations: Tensor,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Minibatch {
    /// Gather frames `indices` of `buffer`, using `advantages` in place of
    /// the buffer's own (typically their normalized version).
    pub fn gather(buffer: &RolloutBuffer, advantages: &[f64], indices: &[usize]) -> Result<Self> {
        let mut obs = Vec::with_capacity(indices.len() * OBS_LEN);
        for &i in indices {
            obs.extend_from_slice(&buffer.observations[i * OBS_LEN..(i + 1) * OBS_LEN]);
        }
        Ok(Minibatch {
            observations: Tensor::new(
                vec![indices.len(), DEFAULT_VIEW_SIZE, DEFAULT_VIEW_SIZE, 3],
                obs,
            )?,
            actions: indices.iter().map(|&i| buffer.actions[i]).collect(),
            old_log_probs: indices.iter().map(|&i| buffer.log_probs[i]).collect(),
            advantages: indices.iter().map(|&i| advantages[i]).collect(),
            returns: indices.iter().map(|&i| buffer.returns[i]).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Components of the PPO loss on one minibatch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    /// Clipped surrogate, negated (lower is better).
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total: f64,
}

struct LossVars {
    total: Var,
    policy: Var,
    value: Var,
    entropy: Var,
}

fn record_loss(
    tape: &mut Tape,
    params: &PolicyParams,
    batch: &Minibatch,
    cfg: &PpoConfig,
) -> Result<LossVars> {
    let net = params.register(tape);
    let x = tape.leaf(batch.observations.clone());
    let out = forward_tape(tape, net, x, cfg.logit_head)?;

    let logp_all = tape.log_softmax(out.logits);
    let logp = tape.pick_columns(logp_all, &batch.actions)?;
    let old = tape.leaf(Tensor::from_vec(batch.old_log_probs.clone()));
    let diff = tape.sub(logp, old)?;
    let ratio = tape.exp(diff);
    let adv = tape.leaf(Tensor::from_vec(batch.advantages.clone()));
    let surr1 = tape.mul(ratio, adv)?;
    let clipped = tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps);
    let surr2 = tape.mul(clipped, adv)?;
    let surr = tape.minimum(surr1, surr2)?;
    let surr = tape.mean(surr);
    let policy = tape.scale(surr, -1.0);

    let probs = tape.exp(logp_all);
    let plogp = tape.mul(probs, logp_all)?;
    let row_sums = tape.sum_last(plogp);
    let neg_entropy = tape.mean(row_sums);
    let entropy = tape.scale(neg_entropy, -1.0);

    let ret = tape.leaf(Tensor::from_vec(batch.returns.clone()));
    let err = tape.sub(out.values, ret)?;
    let sq = tape.square(err);
    let value = tape.mean(sq);

    let ent_term = tape.scale(entropy, -cfg.entropy_coef);
    let val_term = tape.scale(value, cfg.value_loss_coef);
    let total = tape.add(policy, ent_term)?;
    let total = tape.add(total, val_term)?;
    Ok(LossVars {
        total,
        policy,
        value,
        entropy,
    })
}

fn parts(tape: &Tape, v: &LossVars) -> Result<LossParts> {
    let p = LossParts {
        policy_loss: tape.value(v.policy).data()[0],
        value_loss: tape.value(v.value).data()[0],
        entropy: tape.value(v.entropy).data()[0],
        total: tape.value(v.total).data()[0],
    };
    if !p.total.is_finite() {
        return Err(Error::NonFinite(format!("ppo loss {p:?}")));
    }
    Ok(p)
}

/// Loss components without gradients.
pub fn minibatch_loss_value(
    params: &PolicyParams,
    batch: &Minibatch,
    cfg: &PpoConfig,
) -> Result<LossParts> {
    let mut tape = Tape::new();
    let vars = record_loss(&mut tape, params, batch, cfg)?;
    parts(&tape, &vars)
}

/// Loss components and the gradient of the total loss with respect to
/// every parameter (flat, in storage order).
pub fn minibatch_loss(
    params: &PolicyParams,
    batch: &Minibatch,
    cfg: &PpoConfig,
) -> Result<(LossParts, Vec<f64>)> {
    let mut tape = Tape::new();
    let vars = record_loss(&mut tape, params, batch, cfg)?;
    let p = parts(&tape, &vars)?;
    let grads = tape.backward(vars.total)?;
    Ok((p, grads.param_grads()))
}

/// Shift to zero mean and scale to unit (population) standard deviation.
/// A constant vector is only centred.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < 1e-12 {
        return adv.iter().map(|a| a - mean).collect();
    }
    adv.iter().map(|a| (a - mean) / std).collect()
}

/// Rescale `grads` so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / (norm + 1e-6);
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Run `update_epochs` passes of shuffled minibatches over `buffer`,
/// taking one clipped Adam step per minibatch.
pub fn update(
    params: &mut PolicyParams,
    adam: &mut AdamState,
    buffer: &RolloutBuffer,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<UpdateStats> {
    if buffer.advantages.len() != buffer.len() {
        return Err(Error::contract(
            "advantages must be computed before the update",
        ));
    }
    if !buffer.len().is_multiple_of(cfg.batch_size) {
        return Err(Error::config(format!(
            "batch size {} does not divide {} frames",
            cfg.batch_size,
            buffer.len()
        )));
    }
    let advantages = normalize_advantages(&buffer.advantages);
    let mut indices: Vec<usize> = (0..buffer.len()).collect();
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.update_epochs {
        indices.shuffle(rng);
        for chunk in indices.chunks(cfg.batch_size) {
            let batch = Minibatch::gather(buffer, &advantages, chunk)?;
            let (p, mut grads) = minibatch_loss(params, &batch, cfg)?;
            let norm = clip_grad_norm(&mut grads, cfg.max_grad_norm);
            adam.step(params.as_mut_slice(), &grads)?;
            stats.policy_loss += p.policy_loss;
            stats.value_loss += p.value_loss;
            stats.entropy += p.entropy;
            stats.grad_norm += norm;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_contract() {
        let adv: Vec<f64> = (0..100)
            .map(|i| (i as f64 * 0.37).sin() * 3.0 + 1.0)
            .collect();
        let n = normalize_advantages(&adv);
        let mean = n.iter().sum::<f64>() / 100.0;
        let std = (n.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 100.0).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((std - 1.0).abs() < 1e-9);
        assert_eq!(normalize_advantages(&[2.0, 2.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        let n = clip_grad_norm(&mut g, 0.5);
        assert_eq!(n, 5.0);
        let after = (g[0] * g[0] + g[1] * g[1]).sqrt();
        assert!(after <= 0.5 && after > 0.4999);
    }
}

//! PPO loss, update and checkpoint properties.

mod common;

use rand::seq::index::sample;
use rand::Rng;
use rhea_core::gridworld::NUM_ACTIONS;
use rhea_core::ppo::network::{forward_batch, softmax, NUM_PARAMS};
use rhea_core::ppo::{
    evaluate, gae, minibatch_loss, minibatch_loss_value, normalize_advantages, update, Agent,
    Collector, EnvAssignment, LogitHead, Minibatch, PolicyParams, PpoConfig, RolloutBuffer,
};
use rhea_core::tensor::AdamState;
use rhea_core::{rng, EnvSpec, StepBudgetSchedule};

fn rollout(seed: u64, params: &PolicyParams, workers: usize, frames: usize) -> RolloutBuffer {
    let cfg = PpoConfig::default();
    let schedule = StepBudgetSchedule::default();
    let mut r = rng::seeded(seed);
    let pool = vec![EnvSpec::door_key(6), EnvSpec::dynamic_obstacles(6)];
    let mut c = Collector::new(
        EnvAssignment::RoundRobin(pool),
        workers,
        &schedule,
        0,
        &mut r,
    )
    .unwrap();
    let mut buf = c
        .collect(params, cfg.logit_head, frames, &schedule, 0, &mut r)
        .unwrap();
    buf.compute_advantages(cfg.discount, cfg.gae_lambda);
    buf
}

fn log_softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    z.iter().map(|v| v - lse).collect()
}

/// (policy loss, value loss, entropy) written out sample by sample.
fn oracle_loss(
    params: &PolicyParams,
    mb: &Minibatch,
    clip: f64,
    head: LogitHead,
) -> (f64, f64, f64) {
    let n = mb.len();
    let (logits, values) = forward_batch(params, mb.observations.data(), n, head).unwrap();
    let (mut pol, mut val, mut ent) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let lp = log_softmax(&logits[i * NUM_ACTIONS..(i + 1) * NUM_ACTIONS]);
        let ratio = (lp[mb.actions[i]] - mb.old_log_probs[i]).exp();
        let a = mb.advantages[i];
        pol += (ratio * a).min(ratio.clamp(1.0 - clip, 1.0 + clip) * a);
        val += (values[i] - mb.returns[i]).powi(2);
        ent -= lp.iter().map(|l| l.exp() * l).sum::<f64>();
    }
    let n = n as f64;
    (-pol / n, val / n, ent / n)
}

fn perturbed_minibatch(seed: u64, params: &PolicyParams) -> Minibatch {
    let buf = rollout(seed, params, 4, 32);
    let mut r = rng::seeded(seed + 7);
    let idx = sample(&mut r, buf.len(), 48).into_vec();
    let mut mb = Minibatch::gather(&buf, &buf.advantages, &idx).unwrap();
    for lp in &mut mb.old_log_probs {
        *lp += r.gen_range(-0.5..0.5);
    }
    mb
}

#[test]
fn loss_parts_match_direct_formula() {
    for seed in 0..5 {
        for head in [LogitHead::Tanh, LogitHead::Linear] {
            let cfg = PpoConfig {
                logit_head: head,
                ..PpoConfig::default()
            };
            let params = PolicyParams::init(&mut rng::seeded(seed));
            let mb = perturbed_minibatch(seed, &params);
            let p = minibatch_loss_value(&params, &mb, &cfg).unwrap();
            let (pol, val, ent) = oracle_loss(&params, &mb, cfg.clip_eps, head);
            assert!((p.policy_loss - pol).abs() < 1e-10);
            assert!((p.value_loss - val).abs() < 1e-10);
            assert!((p.entropy - ent).abs() < 1e-10);
            let total = pol - cfg.entropy_coef * ent + cfg.value_loss_coef * val;
            assert!((p.total - total).abs() < 1e-10);
        }
    }
}

#[test]
fn unbounded_clip_is_importance_weighted_policy_gradient() {
    let cfg = PpoConfig {
        clip_eps: 1e12,
        entropy_coef: 0.0,
        value_loss_coef: 0.0,
        ..PpoConfig::default()
    };
    let params = PolicyParams::init(&mut rng::seeded(3));
    let mb = perturbed_minibatch(3, &params);
    // surrogate value: plain mean of ratio * advantage
    let (logits, _) =
        forward_batch(&params, mb.observations.data(), mb.len(), cfg.logit_head).unwrap();
    let ratios: Vec<f64> = (0..mb.len())
        .map(|i| {
            (log_softmax(&logits[i * NUM_ACTIONS..(i + 1) * NUM_ACTIONS])[mb.actions[i]]
                - mb.old_log_probs[i])
                .exp()
        })
        .collect();
    let pg = -ratios
        .iter()
        .zip(&mb.advantages)
        .map(|(r, a)| r * a)
        .sum::<f64>()
        / mb.len() as f64;
    let (parts, grad) = minibatch_loss(&params, &mb, &cfg).unwrap();
    assert!((parts.total - pg).abs() < 1e-10);

    // its gradient against finite differences of the same direct sum
    let pg_at = |p: &PolicyParams| {
        let (z, _) = forward_batch(p, mb.observations.data(), mb.len(), cfg.logit_head).unwrap();
        -(0..mb.len())
            .map(|i| {
                let lp = log_softmax(&z[i * NUM_ACTIONS..(i + 1) * NUM_ACTIONS])[mb.actions[i]];
                (lp - mb.old_log_probs[i]).exp() * mb.advantages[i]
            })
            .sum::<f64>()
            / mb.len() as f64
    };
    let h = 1e-5;
    for k in sample(&mut rng::seeded(9), NUM_PARAMS, 30) {
        let (mut a, mut b) = (params.clone(), params.clone());
        a.as_mut_slice()[k] += h;
        b.as_mut_slice()[k] -= h;
        let numeric = (pg_at(&a) - pg_at(&b)) / (2.0 * h);
        let diff = (grad[k] - numeric).abs();
        assert!(
            diff <= 1e-7 || diff <= 1e-4 * grad[k].abs().max(numeric.abs()),
            "coord {k}: {} vs {numeric}",
            grad[k]
        );
    }
}

#[test]
fn update_lowers_the_surrogate_on_a_frozen_buffer() {
    let cfg = PpoConfig {
        batch_size: 64,
        ..PpoConfig::default()
    };
    let mut improved = 0;
    for seed in 0..20 {
        let mut params = PolicyParams::init(&mut rng::seeded(seed));
        let buf = rollout(seed, &params, 4, 64);
        let adv = normalize_advantages(&buf.advantages);
        let all: Vec<usize> = (0..buf.len()).collect();
        let mb = Minibatch::gather(&buf, &adv, &all).unwrap();
        let before = minibatch_loss_value(&params, &mb, &cfg)
            .unwrap()
            .policy_loss;
        let mut adam = AdamState::new(cfg.adam(), NUM_PARAMS).unwrap();
        update(&mut params, &mut adam, &buf, &cfg, &mut rng::seeded(seed)).unwrap();
        let after = minibatch_loss_value(&params, &mb, &cfg)
            .unwrap()
            .policy_loss;
        improved += usize::from(after < before);
    }
    assert!(
        improved >= 18,
        "surrogate improved on {improved} of 20 buffers"
    );
}

#[test]
fn zero_network_is_uniform() {
    let params = PolicyParams::zeros();
    let mb = perturbed_minibatch(0, &params);
    for head in [LogitHead::Tanh, LogitHead::Linear] {
        let cfg = PpoConfig {
            logit_head: head,
            ..PpoConfig::default()
        };
        let p = minibatch_loss_value(&params, &mb, &cfg).unwrap();
        assert!((p.entropy - (NUM_ACTIONS as f64).ln()).abs() < 1e-12);
    }
    // a uniform random walk practically never opens the door on 12x12
    let r = evaluate(
        &params,
        LogitHead::Tanh,
        EnvSpec::door_key(12),
        10,
        &StepBudgetSchedule::default(),
        0,
        &mut rng::seeded(1),
    )
    .unwrap();
    assert!(r < 0.05, "uniform policy returned {r}");
}

#[test]
fn softmax_is_a_distribution() {
    let mut r = rng::seeded(11);
    for _ in 0..1000 {
        let params = PolicyParams::init(&mut r);
        let z: Vec<f64> = (0..NUM_ACTIONS).map(|_| r.gen_range(-30.0..30.0)).collect();
        let p = softmax(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let obs: Vec<f64> = (0..75).map(|_| r.gen()).collect();
        let (logits, value) = forward_batch(&params, &obs, 1, LogitHead::Tanh).unwrap();
        assert!(logits.iter().all(|l| l.abs() <= 1.0) && value[0].is_finite());
    }
}

#[test]
fn gae_matches_direct_sum() {
    let mut r = rng::seeded(2);
    for _ in 0..200 {
        let n = r.gen_range(1..40);
        let rewards: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| r.gen_bool(0.1)).collect();
        let boot: f64 = r.gen_range(-1.0..1.0);
        let (g, l) = (0.99, 0.95);
        let (adv, ret) = gae(&rewards, &values, &dones, boot, g, l);
        for t in 0..n {
            // A_t = sum_k (g l)^k delta_{t+k}, stopping after the first done
            let mut direct = 0.0;
            for k in t..n {
                let next = if dones[k] {
                    0.0
                } else if k + 1 < n {
                    values[k + 1]
                } else {
                    boot
                };
                let delta = rewards[k] + g * next - values[k];
                direct += (g * l).powi((k - t) as i32) * delta;
                if dones[k] {
                    break;
                }
            }
            assert!((adv[t] - direct).abs() < 1e-10);
            assert!((ret[t] - adv[t] - values[t]).abs() < 1e-15);
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let cfg = common::tiny_ppo();
    let mut agent = Agent::new(&cfg, &mut rng::seeded(4)).unwrap();
    let schedule = StepBudgetSchedule::default();
    let mut r = rng::seeded(5);
    let mut c = Collector::new(
        EnvAssignment::RoundRobin(vec![EnvSpec::door_key(6)]),
        2,
        &schedule,
        0,
        &mut r,
    )
    .unwrap();
    agent.train(&mut c, 64, &cfg, &schedule, &mut r).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.bin");
    agent.save(&path).unwrap();
    let back = Agent::load(&path).unwrap();
    assert_eq!(back.params, agent.params);
    assert_eq!(back.adam, agent.adam);
    assert_eq!(back.iterations, 64);

    let bytes = agent.to_bytes();
    assert!(Agent::from_bytes(&bytes[..bytes.len() - 1]).is_err());
    let mut bad = bytes.clone();
    bad[0] ^= 1;
    assert!(Agent::from_bytes(&bad).is_err());
}

#[test]
fn frames_round_up_to_whole_updates() {
    let cfg = PpoConfig::default();
    assert_eq!(cfg.frames_per_update(), 2048);
    assert_eq!(cfg.round_frames(25_000), 26_624);
    assert_eq!(cfg.round_frames(2048), 2048);
    assert_eq!(NUM_PARAMS, 4888);
}

//! Proximal policy optimization on the gridworld levels.

mod agent;
mod evaluate;
pub mod network;
mod rollout;
mod update;

pub use agent::{Agent, TrainStats, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use evaluate::evaluate;
pub use network::{forward, LogitHead, PolicyParams, NUM_PARAMS};
pub use rollout::{gae, Collector, EnvAssignment, EpisodeRecord, RolloutBuffer};
pub use update::{
    clip_grad_norm, minibatch_loss, minibatch_loss_value, normalize_advantages, update, LossParts,
    Minibatch, UpdateStats,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::AdamConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub discount: f64,
    pub lr: f64,
    pub gae_lambda: f64,
    pub entropy_coef: f64,
    pub value_loss_coef: f64,
    pub max_grad_norm: f64,
    pub clip_eps: f64,
    pub adam_eps: f64,
    pub adam_alpha: f64,
    pub frames_per_process: usize,
    pub update_epochs: usize,
    pub num_processes: usize,
    pub logit_head: LogitHead,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            batch_size: 256,
            discount: 0.99,
            lr: 0.001,
            gae_lambda: 0.95,
            entropy_coef: 0.01,
            value_loss_coef: 0.5,
            max_grad_norm: 0.5,
            clip_eps: 0.2,
            adam_eps: 1e-8,
            adam_alpha: 0.99,
            frames_per_process: 128,
            update_epochs: 4,
            num_processes: 16,
            logit_head: LogitHead::Tanh,
        }
    }
}

impl PpoConfig {
    /// Frames gathered per update (all workers).
    pub fn frames_per_update(&self) -> usize {
        self.frames_per_process * self.num_processes
    }

    /// Frames actually trained when asked for `frames`: whole updates,
    /// rounded up.
    pub fn round_frames(&self, frames: u64) -> u64 {
        let per = self.frames_per_update() as u64;
        frames.div_ceil(per) * per
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: 0.9,
            alpha: self.adam_alpha,
            eps: self.adam_eps,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::config(format!("ppo.{m}")));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return err("clip_eps must lie in (0, 1)");
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return err("discount must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return err("gae_lambda must lie in [0, 1]");
        }
        if self.num_processes == 0 || self.frames_per_process == 0 {
            return err("num_processes and frames_per_process must be positive");
        }
        if self.batch_size == 0 || !self.frames_per_update().is_multiple_of(self.batch_size) {
            return err("batch_size must divide num_processes * frames_per_process");
        }
        if self.update_epochs == 0 {
            return err("update_epochs must be positive");
        }
        // written negated so NaN is rejected too
        if !(self.lr > 0.0) || !(self.adam_eps > 0.0) || !(0.0..1.0).contains(&self.adam_alpha) {
            return err("lr and adam_eps must be positive, adam_alpha in [0, 1)");
        }
        if !(self.max_grad_norm > 0.0) {
            return err("max_grad_norm must be positive");
        }
        Ok(())
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam hyperparameters. `alpha` is the second-moment decay; the
/// first-moment decay stays at the conventional 0.9.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub alpha: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            alpha: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn new(config: AdamConfig, num_params: usize) -> Result<Self> {
        if !(config.eps > 0.0) {
            return Err(Error::config("adam eps must be positive"));
        }
        if !(0.0..1.0).contains(&config.beta1) || !(0.0..1.0).contains(&config.alpha) {
            return Err(Error::config("adam decay rates must lie in [0, 1)"));
        }
        Ok(AdamState {
            config,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        })
    }

    /// One bias-corrected Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::config(format!(
                "adam state sized for {} params, got {} params / {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient coordinate {i} is {} at adam step {}",
                grads[i],
                self.t + 1
            )));
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            alpha: beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

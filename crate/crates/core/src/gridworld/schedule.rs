use serde::{Deserialize, Serialize};

use super::EnvSpec;
use crate::error::{Error, Result};

/// Shrinks every level's step budget once training passes `decay_start`
/// frames, linearly over `decay_span` frames, down to `floor` of the
/// default.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepBudgetSchedule {
    pub decay_start: u64,
    pub decay_span: u64,
    pub floor: f64,
}

impl Default for StepBudgetSchedule {
    fn default() -> Self {
        StepBudgetSchedule {
            decay_start: 500_000,
            decay_span: 2_000_000,
            floor: 0.15,
        }
    }
}

impl StepBudgetSchedule {
    /// A schedule that never decays.
    pub fn constant() -> Self {
        StepBudgetSchedule {
            decay_start: u64::MAX,
            decay_span: 1,
            floor: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.decay_span == 0 {
            return Err(Error::config("schedule.decay_span must be positive"));
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return Err(Error::config(format!(
                "schedule.floor = {} must be in (0, 1]",
                self.floor
            )));
        }
        Ok(())
    }

    pub fn multiplier(&self, iterations_done: u64) -> f64 {
        if iterations_done <= self.decay_start {
            return 1.0;
        }
        let elapsed = iterations_done - self.decay_start;
        // Integer numerator keeps exact decimal points (0.5, 0.15) exact.
        let remaining = self.decay_span.saturating_sub(elapsed);
        (remaining as f64 / self.decay_span as f64).max(self.floor)
    }

    pub fn max_steps_for(&self, spec: &EnvSpec, iterations_done: u64) -> u32 {
        let m = self.multiplier(iterations_done);
        ((spec.default_max_steps as f64 * m).round() as u32).max(1)
    }
}

//! Step-halving learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub halve_at: Vec<u64>,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule { initial: 1e-4, halve_at: vec![50_000, 100_000, 200_000, 300_000] }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial.is_finite() && self.initial > 0.0) {
            return Err(Error::Argument("initial learning rate must be positive".into()));
        }
        if !self.halve_at.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Argument("halve_at must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// initial * 2^-(number of thresholds <= iteration).
pub fn lr_at(schedule: &LrSchedule, iteration: u64) -> f64 {
    let halvings = schedule.halve_at.iter().filter(|&&t| t <= iteration).count();
    schedule.initial * 0.5f64.powi(halvings as i32)
}

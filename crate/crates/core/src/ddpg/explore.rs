use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Exploration variance `ε_m = max(a / (a + m), ε_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExploreSchedule {
    pub a: f64,
    pub eps_min: f64,
    /// Noise size in units of the inventory half-range: the executed action
    /// is `π(G) + scale · (I_max − I_min)/2 · N(0, ε)`.
    pub scale: f64,
}

impl Default for ExploreSchedule {
    fn default() -> Self {
        ExploreSchedule { a: 100.0, eps_min: 0.01, scale: 1.0 }
    }
}

impl ExploreSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.eps_min > 0.0 && self.eps_min <= 1.0 && self.scale >= 0.0) {
            return Err(Error::Config("explore: need a > 0, 0 < eps_min <= 1 and scale >= 0".into()));
        }
        Ok(())
    }

    pub fn epsilon(&self, m: u64) -> f64 {
        (self.a / (self.a + m as f64)).max(self.eps_min)
    }
}

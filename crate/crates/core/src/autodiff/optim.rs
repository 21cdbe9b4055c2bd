use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{Gradients, ParamStore};
use super::Tensor;

/// Multiplicative step schedule: the learning rate is multiplied by
/// `factor` after every `every` optimiser steps (`every == 0` keeps it constant).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepSchedule {
    pub factor: f64,
    pub every: u64,
}

impl StepSchedule {
    pub fn constant() -> Self {
        Self {
            factor: 1.0,
            every: 0,
        }
    }

    /// Factor applied on optimiser step `step` (1-based).
    pub fn factor_at(&self, step: u64) -> f64 {
        if self.every == 0 || step == 0 {
            return 1.0;
        }
        self.factor.powi(((step - 1) / self.every) as i32)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub schedule: StepSchedule,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            schedule: StepSchedule::constant(),
        }
    }
}

impl AdamWConfig {
    /// Default hyper-parameters with the learning rate halved every quarter of `updates` steps.
    pub fn quartered(lr: f64, updates: u64) -> Self {
        Self {
            lr,
            schedule: StepSchedule {
                factor: 0.5,
                every: (updates / 4).max(1),
            },
            ..Self::default()
        }
    }
}

/// Adam with decoupled weight decay and bias correction.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    step: u64,
    moments: std::collections::BTreeMap<String, (Tensor, Tensor)>,
}

impl AdamW {
    pub fn new(config: AdamWConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: Default::default(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Learning rate the next call to [`AdamW::step`] will use.
    pub fn next_lr(&self) -> f64 {
        self.config.lr * self.config.schedule.factor_at(self.step + 1)
    }

    /// Applies one update to every trainable parameter that has a gradient.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        for (name, g) in grads {
            if let Some(i) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "gradient of {name} is non-finite at index {i}"
                )));
            }
        }
        let lr = self.next_lr();
        self.step += 1;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (name, g) in grads {
            if !params.is_trainable(name) {
                continue;
            }
            let p = params
                .get_mut(name)
                .ok_or_else(|| Error::Usage(format!("gradient for unknown parameter {name}")))?;
            if p.shape() != g.shape() {
                return Err(Error::Dimension(format!(
                    "gradient of {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(g.shape()), Tensor::zeros(g.shape())));
            for (((w, gi), mi), vi) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *w -= lr * weight_decay * *w;
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            p.ensure_finite(name)?;
        }
        Ok(())
    }
}

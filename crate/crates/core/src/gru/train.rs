use log::{debug, info};
use serde::{Deserialize, Serialize};

use super::config::HeadKind;
use super::stack::GruStack;
use crate::autodiff::{AdamW, AdamWConfig, Graph, Tensor};
use crate::markov::{BatchSampler, TrainingBatch};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    pub validation_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { iterations: 2000, batch: 256, lr: 1e-3, validation_size: 2048 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.batch == 0 || self.validation_size == 0 {
            return Err(Error::Config("training iterations, batch and validation_size must be positive".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("training lr must be positive".into()));
        }
        Ok(())
    }
}

/// Held-out metrics. Cross-entropy and accuracy are reported for classifiers,
/// MSE for forecasters; `naive_mse` is the variance of one-step increments on
/// the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub rows: usize,
    pub cross_entropy: Option<f64>,
    pub accuracy: Option<f64>,
    pub mse: Option<f64>,
    pub naive_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub losses: Vec<f64>,
    pub validation: Validation,
}

impl TrainReport {
    /// Mean of the first and of the last `k` training losses.
    pub fn leading_trailing(&self, k: usize) -> (f64, f64) {
        let k = k.min(self.losses.len()).max(1);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&self.losses[..k]), mean(&self.losses[self.losses.len() - k..]))
    }
}

fn windows(batch: &TrainingBatch) -> Vec<&[f64]> {
    (0..batch.len()).map(|i| batch.current(i)).collect()
}

fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::InvalidInput(format!("label {l} out of range for {classes} classes")));
        }
        data[i * classes + l] = 1.0;
    }
    Tensor::matrix(labels.len(), classes, data)
}

fn next_values(batch: &TrainingBatch) -> Tensor {
    Tensor::column(&(0..batch.len()).map(|i| batch.next_signal(i)).collect::<Vec<_>>())
}

/// One optimiser step on `batch`; returns the training loss before the update.
pub fn train_step(stack: &mut GruStack, opt: &mut AdamW, batch: &TrainingBatch) -> Result<f64> {
    let mut g = Graph::new();
    let x = g.constant(stack.input_tensor(&windows(batch))?)?;
    let out = stack.output(&mut g, x, false)?;
    let loss = match stack.config().head {
        HeadKind::Classifier { classes } => {
            if batch.labels.len() != batch.len() {
                return Err(Error::InvalidInput("filter training needs a regime label for every row".into()));
            }
            let target = g.constant(one_hot(&batch.labels, classes)?)?;
            g.cross_entropy(out, target)?
        }
        HeadKind::Regressor | HeadKind::Feature { .. } => {
            let target = g.constant(next_values(batch))?;
            g.mse(out, target)?
        }
    };
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    opt.step(stack.params_mut(), &grads)?;
    Ok(value)
}

/// Scores `stack` on `batch` without updating it.
pub fn validate(stack: &GruStack, batch: &TrainingBatch) -> Result<Validation> {
    let out = stack.output_batch(&windows(batch))?;
    let n = batch.len();
    let naive_mse = {
        let inc: Vec<f64> = (0..n).map(|i| batch.next_signal(i) - batch.signal(i)).collect();
        let m = inc.iter().sum::<f64>() / n as f64;
        inc.iter().map(|d| (d - m).powi(2)).sum::<f64>() / n as f64
    };
    let mut v = Validation { rows: n, cross_entropy: None, accuracy: None, mse: None, naive_mse };
    match stack.config().head {
        HeadKind::Classifier { classes } => {
            if batch.labels.len() != n {
                return Err(Error::InvalidInput("filter validation needs regime labels".into()));
            }
            let mut ce = 0.0;
            let mut hits = 0;
            for i in 0..n {
                let row = out.row_slice(i);
                let label = batch.labels[i];
                if label >= classes {
                    return Err(Error::InvalidInput(format!("label {label} out of range")));
                }
                ce -= (row[label] + crate::autodiff::CE_EPS).ln();
                let arg = (0..classes).fold(0, |best, k| if row[k] > row[best] { k } else { best });
                hits += usize::from(arg == label);
            }
            v.cross_entropy = Some(ce / n as f64);
            v.accuracy = Some(hits as f64 / n as f64);
        }
        HeadKind::Regressor | HeadKind::Feature { .. } => {
            let mse = (0..n).map(|i| (out.data()[i] - batch.next_signal(i)).powi(2)).sum::<f64>() / n as f64;
            v.mse = Some(mse);
        }
    }
    Ok(v)
}

/// Trains on fresh batches from `sampler` for `config.iterations` steps, then
/// scores the result on an independent validation batch.
pub fn train_first_step(
    stack: &mut GruStack,
    sampler: &dyn BatchSampler,
    config: &TrainConfig,
    rng: &mut SimRng,
) -> Result<TrainReport> {
    config.validate()?;
    if let HeadKind::Classifier { classes } = stack.config().head {
        if sampler.num_regimes() != classes {
            return Err(Error::InvalidInput(format!(
                "filter has {classes} classes but the data carries {} regime labels",
                sampler.num_regimes()
            )));
        }
    }
    let window = stack.config().window;
    let mut val_rng = rng::derive(rng);
    let mut opt = AdamW::new(AdamWConfig::quartered(config.lr, config.iterations as u64));
    let mut losses = Vec::with_capacity(config.iterations);
    for it in 0..config.iterations {
        let batch = sampler.sample(config.batch, window, rng)?;
        let loss = train_step(stack, &mut opt, &batch)?;
        losses.push(loss);
        if (it + 1) % 100 == 0 {
            debug!("{} step {}: loss {loss:.6}", stack.config().head.name(), it + 1);
        }
    }
    let val_batch = sampler.sample(config.validation_size, window, &mut val_rng)?;
    let validation = validate(stack, &val_batch)?;
    info!("{} training done: {validation:?}", stack.config().head.name());
    Ok(TrainReport { losses, validation })
}

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::gru::{GruStack, HeadKind};
use crate::{Error, Result};

/// Which model output joins `(S_t, I_t)` in the agent state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Hidden state of a GRU trained alongside the agent.
    Hid,
    /// Posterior regime probabilities from a pretrained filter.
    Prob,
    /// Next-value forecast from a pretrained regressor.
    Reg,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Hid => "hid",
            Pipeline::Prob => "prob",
            Pipeline::Reg => "reg",
        }
    }

    pub fn accepts(self, head: &HeadKind) -> bool {
        matches!(
            (self, head),
            (Pipeline::Hid, HeadKind::Feature { .. })
                | (Pipeline::Prob, HeadKind::Classifier { .. })
                | (Pipeline::Reg, HeadKind::Regressor)
        )
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hid" => Ok(Pipeline::Hid),
            "prob" => Ok(Pipeline::Prob),
            "reg" => Ok(Pipeline::Reg),
            other => Err(Error::InvalidInput(format!("unknown pipeline {other:?}"))),
        }
    }
}

/// Min-max bounds mapping the signal and inventory onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureScaler {
    pub signal: (f64, f64),
    pub inventory: (f64, f64),
}

fn unit(x: f64, (lo, hi): (f64, f64)) -> f64 {
    (x - lo) / (hi - lo)
}

impl FeatureScaler {
    pub fn validate(&self) -> Result<()> {
        if !(self.signal.0 < self.signal.1 && self.inventory.0 < self.inventory.1) {
            return Err(Error::Config("feature bounds must satisfy lo < hi".into()));
        }
        Ok(())
    }

    pub fn signal(&self, s: f64) -> f64 {
        unit(s, self.signal)
    }

    pub fn inventory(&self, i: f64) -> f64 {
        unit(i, self.inventory)
    }
}

/// The rows `(S_t, I_t, extras…)` for a set of windows, all on the unit scale.
/// Inventories can be swapped without recomputing the model extras.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock {
    tensor: Tensor,
}

impl FeatureBlock {
    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }

    pub fn rows(&self) -> usize {
        self.tensor.rows()
    }

    pub fn width(&self) -> usize {
        self.tensor.cols()
    }

    /// A copy with column 1 replaced by the scaled `inventories`.
    pub fn with_inventories(&self, scaler: &FeatureScaler, inventories: &[f64]) -> Result<Tensor> {
        if inventories.len() != self.rows() {
            return Err(Error::Dimension(format!(
                "{} inventories for {} feature rows",
                inventories.len(),
                self.rows()
            )));
        }
        let mut t = self.tensor.clone();
        let w = self.width();
        for (i, inv) in inventories.iter().enumerate() {
            t.data_mut()[i * w + 1] = scaler.inventory(*inv);
        }
        Ok(t)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.tensor.row_slice(i)
    }
}

/// Feature width for `pipeline` with `model`.
pub fn feature_width(model: &GruStack) -> usize {
    2 + model.config().feature_width()
}

/// Builds the agent state for each window (whose last value is `S_t`) and inventory.
pub fn build_features(
    pipeline: Pipeline,
    model: Option<&GruStack>,
    scaler: &FeatureScaler,
    windows: &[&[f64]],
    inventories: &[f64],
) -> Result<FeatureBlock> {
    let model = model.ok_or_else(|| Error::Usage(format!("{} pipeline needs its model", pipeline.name())))?;
    if !pipeline.accepts(&model.config().head) {
        return Err(Error::Usage(format!(
            "{} pipeline cannot use a {} model",
            pipeline.name(),
            model.config().head.name()
        )));
    }
    if inventories.len() != windows.len() {
        return Err(Error::Dimension("one inventory per window is required".into()));
    }
    let extras = model.feature_batch(windows)?;
    let k = extras.cols();
    let width = 2 + k;
    let mut data = Vec::with_capacity(windows.len() * width);
    for (i, w) in windows.iter().enumerate() {
        let s_t = *w.last().ok_or_else(|| Error::InvalidInput("empty window".into()))?;
        data.push(scaler.signal(s_t));
        data.push(scaler.inventory(inventories[i]));
        let row = extras.row_slice(i);
        match (pipeline, &model.config().head) {
            (Pipeline::Prob, _) => data.extend_from_slice(row),
            (Pipeline::Reg, _) | (Pipeline::Hid, HeadKind::Feature { scalar: true }) => {
                data.extend(row.iter().map(|v| scaler.signal(*v)))
            }
            (Pipeline::Hid, _) => data.extend(row.iter().map(|h| (h + 1.0) / 2.0)),
        }
    }
    Ok(FeatureBlock { tensor: Tensor::matrix(windows.len(), width, data)? })
}

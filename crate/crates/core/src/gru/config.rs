use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateActivation {
    Logistic,
    Tanh,
}

impl GateActivation {
    pub fn activation(self) -> Activation {
        match self {
            GateActivation::Logistic => Activation::Logistic,
            GateActivation::Tanh => Activation::Tanh,
        }
    }
}

/// What sits on top of the final hidden state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeadKind {
    /// Softmax posterior over `classes` regimes.
    Classifier { classes: usize },
    /// Next-value forecast with a SiLU output.
    Regressor,
    /// Hidden-state read-out with a LeakyReLU next-value prediction used for
    /// training. `scalar` exposes the prediction's pre-activation instead of
    /// the full hidden state.
    Feature { scalar: bool },
}

impl HeadKind {
    pub fn name(&self) -> &'static str {
        match self {
            HeadKind::Classifier { .. } => "classifier",
            HeadKind::Regressor => "regressor",
            HeadKind::Feature { .. } => "feature",
        }
    }
}

/// Architecture of a [`GruStack`](super::GruStack). Serialised as the model's JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GruConfig {
    pub layers: usize,
    pub hidden: usize,
    /// Look-back W; sequences hold `W + 1` values.
    pub window: usize,
    pub gate_activation: GateActivation,
    pub head: HeadKind,
    /// Fully connected hidden layers between the GRU and the output.
    pub head_layers: usize,
    pub head_width: usize,
    /// Inputs enter the GRU as `(S − input_center) / input_scale`.
    pub input_center: f64,
    pub input_scale: f64,
}

impl GruConfig {
    /// Regime filter: five GRU layers of 20 units, five dense layers of 64.
    pub fn classifier(classes: usize, window: usize) -> Self {
        GruConfig {
            layers: 5,
            hidden: 20,
            window,
            gate_activation: GateActivation::Logistic,
            head: HeadKind::Classifier { classes },
            head_layers: 5,
            head_width: 64,
            input_center: 1.0,
            input_scale: 1.0,
        }
    }

    pub fn regressor(window: usize) -> Self {
        GruConfig { head: HeadKind::Regressor, ..GruConfig::classifier(1, window) }
    }

    /// The single-layer, ten-unit encoder trained alongside the hid agent.
    pub fn feature(window: usize, layers: usize, scalar: bool) -> Self {
        GruConfig {
            layers,
            hidden: 10,
            window,
            gate_activation: GateActivation::Logistic,
            head: HeadKind::Feature { scalar },
            head_layers: 0,
            head_width: 0,
            input_center: 1.0,
            input_scale: 1.0,
        }
    }

    pub fn with_normalisation(mut self, center: f64, scale: f64) -> Self {
        self.input_center = center;
        self.input_scale = scale;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.hidden == 0 || self.window == 0 {
            return Err(Error::Config("gru: layers, hidden and window must be positive".into()));
        }
        if self.head_layers > 0 && self.head_width == 0 {
            return Err(Error::Config("gru: head_width must be positive when head_layers > 0".into()));
        }
        if let HeadKind::Classifier { classes } = self.head {
            if classes < 2 {
                return Err(Error::Config("gru: a classifier needs at least two classes".into()));
            }
        }
        if !(self.input_scale > 0.0 && self.input_center.is_finite()) {
            return Err(Error::Config("gru: input_scale must be positive".into()));
        }
        Ok(())
    }

    /// Width of [`GruStack::output`](super::GruStack::output) per row.
    pub fn output_width(&self) -> usize {
        match self.head {
            HeadKind::Classifier { classes } => classes,
            HeadKind::Regressor => 1,
            HeadKind::Feature { .. } => 1,
        }
    }

    /// Width of the read-out used as agent features.
    pub fn feature_width(&self) -> usize {
        match self.head {
            HeadKind::Feature { scalar: false } => self.hidden,
            _ => self.output_width(),
        }
    }
}

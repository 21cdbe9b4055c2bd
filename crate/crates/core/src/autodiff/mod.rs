//! Dense tensors with reverse-mode differentiation and the AdamW optimiser.

mod graph;
mod gradcheck;
mod layers;
mod optim;
mod params;
mod tensor;

pub use graph::{leaky_relu, logistic, silu, Activation, Graph, Var, CE_EPS, LEAKY_SLOPE};
pub use gradcheck::{grad_check, GradCheckReport, FD_STEP};
pub use layers::{dense, init_dense};
pub use optim::{AdamW, AdamWConfig, StepSchedule};
pub use params::{Gradients, Param, ParamStore};
pub use tensor::Tensor;


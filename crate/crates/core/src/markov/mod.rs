//! Regime-switching Ornstein–Uhlenbeck signal and training-batch generation.

mod chain;
mod env;
mod ou;

pub use chain::{matrix_exponential, sample_row, stationary_distribution, step_chain, ChainSpec, RegimeChain};
pub use env::{
    sample_training_batch, simulate_path, BatchSampler, EnvConfig, Environment, Setting, SignalPath,
    TrainingBatch,
};
pub use ou::{ou_step, ou_step_with_shock, stationary_moments, OUParams};

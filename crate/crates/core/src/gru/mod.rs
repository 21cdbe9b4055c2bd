//! Stacked gated recurrent units with classifier, regressor and feature heads.

mod config;
mod stack;
mod train;

pub use config::{GateActivation, GruConfig, HeadKind};
pub use stack::{FilterOutput, GruStack};
pub use train::{train_first_step, train_step, validate, TrainConfig, TrainReport, Validation};

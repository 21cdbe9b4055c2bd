//! Optimal trading of a regime-switching mean-reverting signal.
//!
//! The crate is organised bottom-up:
//!
//! - [`autodiff`]: dense `f64` tensors, a reverse-mode tape, parameter
//!   containers and the AdamW optimiser.
//! - [`markov`]: continuous-time Markov regime chains, the exact
//!   Ornstein–Uhlenbeck transition and training-batch sampling.
//! - [`gru`]: stacked GRU encoders with classifier, regressor and
//!   prediction heads, plus their supervised training loop.
//! - [`ddpg`]: actor/critic networks, the hid/prob/reg feature pipelines
//!   and the replay-free DDPG training loop.
//! - [`eval`]: rolling-window test episodes, reward statistics and policy grids.
//! - [`pairs`]: order-book ingestion, VAR/cointegration, Johansen,
//!   Hamilton regimes, Z-score benchmark and backtesting.
//! - [`checks`]: finite-difference checks of the training losses.

pub mod autodiff;
pub mod checks;
pub mod config;
pub mod ddpg;
pub mod error;
pub mod eval;
pub mod fmt;
pub mod gru;
pub mod markov;
pub mod pairs;
pub mod rng;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

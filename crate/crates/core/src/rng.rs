//! Seeded random streams. Everything stochastic in the crate draws from a
//! [`SimRng`] so that a seed fully determines a run.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// Splits off an independent stream from `parent`.
pub fn derive(parent: &mut impl RngCore) -> SimRng {
    SimRng::seed_from_u64(parent.next_u64())
}

pub fn normal(rng: &mut impl RngCore) -> f64 {
    rng.sample(StandardNormal)
}

pub fn uniform(rng: &mut impl RngCore, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

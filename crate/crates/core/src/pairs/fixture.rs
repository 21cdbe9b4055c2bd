//! Synthetic cointegrated price pairs with known mean-reversion structure,
//! and a writer that renders them as LOBSTER level-1 files.

use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lobster::PRICE_SCALE;
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// Discrete bivariate OU, `S_t = S_{t−1} + κ(θ_t − S_{t−1}) + ε_t`, with
/// `κ = V diag(λ) V⁻¹`. The long-run mean `θ_t` can jump between
/// `theta` and `theta + shift · v_fast`, which moves only the fast portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSpec {
    /// Eigenvalues of κ, ascending.
    pub eigenvalues: [f64; 2],
    /// Right eigenvectors as columns: `eigenvectors[i][j]` is row `i`, column `j`.
    pub eigenvectors: [[f64; 2]; 2],
    pub theta: [f64; 2],
    pub noise_sd: [f64; 2],
    pub shift: f64,
    /// Per-step probability of the mean jumping to the other level.
    pub switch_prob: f64,
}

impl Default for PairSpec {
    fn default() -> Self {
        PairSpec {
            eigenvalues: [0.05, 0.25],
            eigenvectors: [[0.8, 0.6], [0.6, -1.0]],
            theta: [100.0, 25.0],
            noise_sd: [0.05, 0.02],
            shift: 0.0,
            switch_prob: 0.0,
        }
    }
}

impl PairSpec {
    fn vectors(&self) -> Matrix2<f64> {
        let e = self.eigenvectors;
        Matrix2::new(e[0][0], e[0][1], e[1][0], e[1][1])
    }

    pub fn kappa(&self) -> Result<DMatrix<f64>> {
        let v = self.vectors();
        let v_inv = v.try_inverse().ok_or_else(|| Error::Config("eigenvectors must be independent".into()))?;
        let k = v * Matrix2::from_diagonal(&Vector2::new(self.eigenvalues[0], self.eigenvalues[1])) * v_inv;
        Ok(DMatrix::from_column_slice(2, 2, k.as_slice()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.eigenvalues.iter().any(|&l| !(l > 0.0 && l < 2.0)) {
            return Err(Error::Config("fixture eigenvalues must lie in (0, 2) for a stable recursion".into()));
        }
        if self.noise_sd.iter().any(|&s| !(s >= 0.0)) || !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(Error::Config("fixture noise must be non-negative and switch_prob a probability".into()));
        }
        self.kappa().map(|_| ())
    }
}

/// Simulates `length` steps from `θ`. Returns both price series.
pub fn simulate_pair(spec: &PairSpec, length: usize, seed: u64) -> Result<[Vec<f64>; 2]> {
    spec.validate()?;
    let k = spec.kappa()?;
    let v = spec.vectors();
    let fast = Vector2::new(v[(0, 1)], v[(1, 1)]);
    let mut root = rng::seeded(seed);
    let mut noise = rng::derive(&mut root);
    let mut switches = rng::derive(&mut root);
    let mut s = Vector2::new(spec.theta[0], spec.theta[1]);
    let mut high = false;
    let mut out = [Vec::with_capacity(length), Vec::with_capacity(length)];
    for _ in 0..length {
        out[0].push(s[0]);
        out[1].push(s[1]);
        if spec.switch_prob > 0.0 && switches.random::<f64>() < spec.switch_prob {
            high = !high;
        }
        let theta = Vector2::new(spec.theta[0], spec.theta[1]) + if high { fast * spec.shift } else { Vector2::zeros() };
        let gap = theta - s;
        let drift = Vector2::new(k[(0, 0)] * gap[0] + k[(0, 1)] * gap[1], k[(1, 0)] * gap[0] + k[(1, 1)] * gap[1]);
        let eps = Vector2::new(spec.noise_sd[0] * rng::normal(&mut noise), spec.noise_sd[1] * rng::normal(&mut noise));
        s += drift + eps;
    }
    Ok(out)
}

/// Writes `<name>_message.csv` and `<name>_orderbook.csv` for one asset whose
/// mid-price on second `k` after `start` is `mids[k]`. Each second carries a
/// limit-order submission and, most of the time, an execution.
pub fn write_lobster_asset(dir: &Path, name: &str, start: f64, mids: &[f64], rng: &mut SimRng) -> Result<()> {
    let mut msg = BufWriter::new(std::fs::File::create(dir.join(format!("{name}_message.csv")))?);
    let mut book = BufWriter::new(std::fs::File::create(dir.join(format!("{name}_orderbook.csv")))?);
    let mut order_id = 1_000_000u64;
    let spread = 100i64;
    for (k, &mid) in mids.iter().enumerate() {
        let ticks = (mid / PRICE_SCALE).round() as i64;
        let (ask, bid) = (ticks + spread / 2, ticks - spread / 2);
        let base = start + k as f64;
        let t_order = base + 0.1 * rng.random::<f64>();
        let side = if rng.random::<bool>() { 1 } else { -1 };
        order_id += 1;
        writeln!(msg, "{t_order:.9},1,{order_id},100,{},{side}", if side == 1 { bid } else { ask })?;
        writeln!(book, "{ask},200,{bid},300")?;
        if k == 0 || rng.random::<f64>() < 0.8 {
            let t_trade = base + 0.1 + 0.8 * rng.random::<f64>();
            let kind = if rng.random::<f64>() < 0.9 { 4 } else { 5 };
            writeln!(msg, "{t_trade:.9},{kind},{order_id},100,{},{side}", if side == 1 { bid } else { ask })?;
            writeln!(book, "{ask},100,{bid},300")?;
        }
    }
    msg.flush()?;
    book.flush()?;
    Ok(())
}

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Deterministic terms in the error-correction regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Deterministic {
    None,
    /// Unrestricted intercept: every regression is run on demeaned data.
    Constant,
    /// Intercept confined to the cointegrating relation.
    RestrictedConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JohansenConfig {
    pub deterministic: Deterministic,
    /// Number of lagged differences.
    pub lags: usize,
    /// 5% critical values for `H0: r = 0`.
    pub trace_critical: f64,
    pub max_eig_critical: f64,
}

impl Default for JohansenConfig {
    fn default() -> Self {
        JohansenConfig {
            deterministic: Deterministic::Constant,
            lags: 1,
            trace_critical: 18.399,
            max_eig_critical: 17.148,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JohansenResult {
    /// Squared canonical correlations, descending.
    pub eigenvalues: Vec<f64>,
    /// `trace[r] = −T Σ_{i ≥ r} ln(1 − λ̂_i)`.
    pub trace: Vec<f64>,
    /// `max_eig[r] = −T ln(1 − λ̂_r)`.
    pub max_eig: Vec<f64>,
    pub trace_critical: f64,
    pub max_eig_critical: f64,
    pub reject_trace: bool,
    pub reject_max_eig: bool,
    pub observations: usize,
}

fn demean_columns(m: &mut DMatrix<f64>) {
    for mut col in m.column_iter_mut() {
        let mu = col.mean();
        col.add_scalar_mut(-mu);
    }
}

/// `y − z (zᵀz)⁻¹ zᵀ y`; `z` may have no columns.
fn residualise(y: &DMatrix<f64>, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if z.ncols() == 0 {
        return Ok(y.clone());
    }
    let ztz = z.transpose() * z;
    let chol = ztz
        .cholesky()
        .ok_or_else(|| Error::Singular("lagged differences are collinear".into()))?;
    let beta = chol.solve(&(z.transpose() * y));
    Ok(y - z * beta)
}

/// Reduced-rank regression test on `series[j][t]` (levels).
pub fn johansen_test(series: &[Vec<f64>], config: &JohansenConfig) -> Result<JohansenResult> {
    let k = series.len();
    if k == 0 {
        return Err(Error::InvalidInput("Johansen test needs at least one series".into()));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Dimension("Johansen series must have equal length".into()));
    }
    let p = config.lags;
    let needed = p + k * (p + 1) + 10;
    if len < needed {
        return Err(Error::InsufficientData(format!("Johansen test with {p} lags needs at least {needed} observations, got {len}")));
    }
    let n = len - 1 - p;
    let diff = |j: usize, t: usize| series[j][t + 1] - series[j][t];
    // Row r is time t = r + p + 1 in level units: Δy_t, y_{t−1}, Δy_{t−1..t−p}.
    let mut dy = DMatrix::from_fn(n, k, |r, j| diff(j, r + p));
    let restricted = config.deterministic == Deterministic::RestrictedConstant;
    let level_cols = if restricted { k + 1 } else { k };
    let mut ly = DMatrix::from_fn(n, level_cols, |r, j| if j < k { series[j][r + p] } else { 1.0 });
    let mut z = DMatrix::from_fn(n, k * p, |r, c| {
        let (lag, j) = (c / k + 1, c % k);
        diff(j, r + p - lag)
    });
    if config.deterministic == Deterministic::Constant {
        demean_columns(&mut dy);
        demean_columns(&mut ly);
        demean_columns(&mut z);
    }
    let r0 = residualise(&dy, &z)?;
    let r1 = residualise(&ly, &z)?;
    let nf = n as f64;
    let s00 = r0.transpose() * &r0 / nf;
    let s11 = r1.transpose() * &r1 / nf;
    let s01 = r0.transpose() * &r1 / nf;
    let s00_inv = s00
        .cholesky()
        .ok_or_else(|| Error::Singular("residual covariance of differences is singular".into()))?
        .inverse();
    let l = s11
        .cholesky()
        .ok_or_else(|| Error::Singular("residual covariance of levels is singular".into()))?
        .l();
    let l_inv = l
        .try_inverse()
        .ok_or_else(|| Error::Singular("residual covariance of levels is singular".into()))?;
    let m = &l_inv * s01.transpose() * s00_inv * &s01 * l_inv.transpose();
    let sym = (&m + m.transpose()) * 0.5;
    let mut eigenvalues: Vec<f64> = sym.symmetric_eigenvalues().iter().map(|v| v.clamp(0.0, 1.0 - 1e-15)).collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    eigenvalues.truncate(k);

    let logs: Vec<f64> = eigenvalues.iter().map(|l| -nf * (1.0 - l).ln()).collect();
    let trace: Vec<f64> = (0..k).map(|r| logs[r..].iter().sum()).collect();
    Ok(JohansenResult {
        reject_trace: trace[0] > config.trace_critical,
        reject_max_eig: logs[0] > config.max_eig_critical,
        eigenvalues,
        trace,
        max_eig: logs,
        trace_critical: config.trace_critical,
        max_eig_critical: config.max_eig_critical,
        observations: n,
    })
}

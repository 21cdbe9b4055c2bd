use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Least-squares fit of `y_t = A + B y_{t−1} + ε_t`, one equation per series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarFit {
    pub intercept: Vec<f64>,
    /// `coefficients[i][j]`: effect of series `j` at `t−1` on series `i` at `t`.
    pub coefficients: Vec<Vec<f64>>,
    pub residual_cov: Vec<Vec<f64>>,
    pub intercept_t: Vec<f64>,
    pub coefficient_t: Vec<Vec<f64>>,
    pub r_squared: Vec<f64>,
    pub observations: usize,
}

impl VarFit {
    pub fn b_matrix(&self) -> DMatrix<f64> {
        let k = self.intercept.len();
        DMatrix::from_fn(k, k, |i, j| self.coefficients[i][j])
    }

    pub fn a_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.intercept)
    }
}

fn mean(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count() as f64;
    xs.sum::<f64>() / n
}

/// Fits the VAR(1) to `series[j][t]`. Regressors are centred before solving the
/// normal equations, so price levels far from zero stay well conditioned.
pub fn fit_var(series: &[Vec<f64>]) -> Result<VarFit> {
    let k = series.len();
    if k == 0 {
        return Err(Error::InvalidInput("VAR needs at least one series".into()));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Dimension("VAR series must have equal length".into()));
    }
    if len < 3 {
        return Err(Error::InsufficientData(format!("VAR needs at least 3 observations, got {len}")));
    }
    let n = len - 1;
    if n <= k + 1 {
        return Err(Error::InsufficientData(format!("{n} transitions cannot identify {} coefficients per equation", k + 1)));
    }
    let lag_mean: Vec<f64> = series.iter().map(|s| mean(s[..n].iter().copied())).collect();
    let x = DMatrix::from_fn(n, k, |t, j| series[j][t] - lag_mean[j]);
    let xtx = x.transpose() * &x;
    let scale = xtx.diagonal().max();
    let eig = xtx.clone().symmetric_eigen();
    if !(scale > 0.0) || eig.eigenvalues.min() <= scale * 1e-13 {
        return Err(Error::Singular("VAR design matrix is rank deficient".into()));
    }
    let inv = xtx
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("VAR design matrix is not positive definite".into()))?
        .inverse();
    let dof = (n - k - 1) as f64;

    let mut fit = VarFit {
        intercept: vec![0.0; k],
        coefficients: vec![vec![0.0; k]; k],
        residual_cov: vec![vec![0.0; k]; k],
        intercept_t: vec![0.0; k],
        coefficient_t: vec![vec![0.0; k]; k],
        r_squared: vec![0.0; k],
        observations: n,
    };
    let mut residuals = DMatrix::zeros(n, k);
    for i in 0..k {
        let y_mean = mean(series[i][1..].iter().copied());
        let y = DVector::from_fn(n, |t, _| series[i][t + 1] - y_mean);
        let beta = &inv * (x.transpose() * &y);
        let e = &y - &x * &beta;
        let ssr = e.norm_squared();
        let sst = y.norm_squared();
        let s2 = ssr / dof;
        let alpha = y_mean - beta.iter().zip(&lag_mean).map(|(b, m)| b * m).sum::<f64>();
        let lm = DVector::from_column_slice(&lag_mean);
        let var_alpha = s2 / n as f64 + s2 * (lm.transpose() * &inv * &lm)[(0, 0)];
        fit.intercept[i] = alpha;
        fit.intercept_t[i] = alpha / var_alpha.sqrt();
        for j in 0..k {
            fit.coefficients[i][j] = beta[j];
            fit.coefficient_t[i][j] = beta[j] / (s2 * inv[(j, j)]).sqrt();
        }
        fit.r_squared[i] = if sst > 0.0 { 1.0 - ssr / sst } else { 1.0 };
        residuals.set_column(i, &e);
    }
    let cov = residuals.transpose() * &residuals / dof;
    for i in 0..k {
        for j in 0..k {
            fit.residual_cov[i][j] = cov[(i, j)];
        }
    }
    Ok(fit)
}

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::var::VarFit;
use crate::{Error, Result};

/// Real eigen-decomposition `κ = V Λ V⁻¹` of a mean-reversion matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenStructure {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Unit-norm right eigenvectors as columns.
    pub vectors: DMatrix<f64>,
    /// Rows are left eigenvectors; row `i` pairs with `eigenvalues[i]`.
    pub u_inv: DMatrix<f64>,
}

impl EigenStructure {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&DVector::from_column_slice(&self.eigenvalues)) * &self.u_inv
    }
}

/// Diagonalises `kappa`, refusing complex spectra.
pub fn eigen_structure(kappa: &DMatrix<f64>) -> Result<EigenStructure> {
    let k = kappa.nrows();
    if k == 0 || kappa.ncols() != k {
        return Err(Error::Dimension("eigen-decomposition needs a non-empty square matrix".into()));
    }
    let complex = kappa.complex_eigenvalues();
    let tol = 1e-12 * kappa.norm().max(f64::MIN_POSITIVE);
    if let Some(z) = complex.iter().find(|z| z.im.abs() > tol) {
        return Err(Error::ComplexEigenvalues { re: z.re, im: z.im.abs() });
    }
    let mut eigenvalues: Vec<f64> = complex.iter().map(|z| z.re).collect();
    eigenvalues.sort_by(f64::total_cmp);

    let mut vectors = DMatrix::zeros(k, k);
    for (j, &lambda) in eigenvalues.iter().enumerate() {
        let shifted = kappa - DMatrix::identity(k, k) * lambda;
        let svd = shifted.svd(false, true);
        let v_t = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return singular vectors".into()))?;
        let (idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty spectrum");
        let mut v: DVector<f64> = v_t.row(idx).transpose();
        let pivot = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
        if pivot < 0.0 {
            v = -v;
        }
        vectors.set_column(j, &v.normalize());
    }
    let u_inv = vectors
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular("eigenvectors are linearly dependent".into()))?;
    Ok(EigenStructure { eigenvalues, vectors, u_inv })
}

/// Mean-reversion structure of a fitted VAR and the selected portfolio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CointResult {
    pub kappa: Vec<Vec<f64>>,
    pub theta_tilde: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub u_inv: Vec<Vec<f64>>,
    /// Index into `eigenvalues` of the chosen row.
    pub selected: usize,
    pub weights: Vec<f64>,
    /// Relative Frobenius error of rebuilding κ from the decomposition.
    pub reconstruction_error: f64,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// `κ = (I − B)/Δt`, `θ̃ = κ⁻¹ A Δt`, and the left eigenvector of the largest
/// eigenvalue as portfolio weights (first weight made positive).
pub fn cointegrate(fit: &VarFit, dt: f64) -> Result<CointResult> {
    if !(dt > 0.0) {
        return Err(Error::Config("cointegration dt must be positive".into()));
    }
    let b = fit.b_matrix();
    let k = b.nrows();
    let kappa = (DMatrix::identity(k, k) - b) / dt;
    let svd = kappa.clone().svd(false, false);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) || svd.singular_values.min() <= 1e-12 * smax {
        return Err(Error::Singular("κ = (I − B)/Δt is not invertible (no mean reversion)".into()));
    }
    let kappa_inv = kappa.clone().try_inverse().ok_or_else(|| Error::Singular("κ is not invertible".into()))?;
    let theta_tilde = kappa_inv * fit.a_vector() * dt;
    let eig = eigen_structure(&kappa)?;
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        warn!("κ has non-positive eigenvalues {:?}; some combinations do not mean-revert", eig.eigenvalues);
    }
    let selected = k - 1;
    let mut weights: Vec<f64> = eig.u_inv.row(selected).iter().copied().collect();
    if weights[0] < 0.0 {
        weights.iter_mut().for_each(|w| *w = -*w);
    }
    let reconstruction_error = (eig.reconstruct() - &kappa).norm() / kappa.norm();
    Ok(CointResult {
        kappa: rows(&kappa),
        theta_tilde: theta_tilde.iter().copied().collect(),
        eigenvalues: eig.eigenvalues,
        u_inv: rows(&eig.u_inv),
        selected,
        weights,
        reconstruction_error,
    })
}

/// `S̃_t = Σ_i α_i S_{i,t}`.
pub fn portfolio(weights: &[f64], series: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != series.len() || series.is_empty() {
        return Err(Error::Dimension("one weight per series is required".into()));
    }
    let len = series[0].len();
    if series.iter().any(|s| s.len() != len) {
        return Err(Error::Dimension("series must have equal length".into()));
    }
    Ok((0..len).map(|t| weights.iter().zip(series).map(|(w, s)| w * s[t]).sum()).collect())
}

//! The econometric half of the pairs workflow, from mid-prices to a
//! normalised portfolio with regime probabilities.

use serde::{Deserialize, Serialize};

use super::coint::{cointegrate, portfolio, CointResult};
use super::hamilton::{hamilton_two_regime, HamiltonFit};
use super::johansen::{johansen_test, JohansenResult};
use super::lobster::MidPriceSeries;
use super::normalize::MinMax;
use super::var::{fit_var, VarFit};
use crate::config::{PairsConfig, VarInput};
use crate::{Error, Result};

/// Rows of `mids` that belong to the training span: those stamped at or
/// before `train_end_timestamp`, or the first 80% when it is unset.
pub fn train_rows(mids: &MidPriceSeries, train_end: Option<f64>) -> Result<usize> {
    let n = mids.len();
    let rows = match train_end {
        Some(t) => (0..n).take_while(|&k| mids.time(k) <= t + 1e-9).count(),
        None => n * 4 / 5,
    };
    if rows < 3 || rows >= n {
        return Err(Error::InsufficientData(format!(
            "train/test split leaves {rows} training rows out of {n}; both spans need data"
        )));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairAnalysis {
    pub train_rows: usize,
    pub var: VarFit,
    pub coint: CointResult,
    pub johansen: JohansenResult,
    pub minmax: MinMax,
    /// Fitted on the normalised training span.
    pub hamilton: HamiltonFit,
    /// Portfolio value over the whole series.
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// Regime probabilities over the whole series under the training-span fit.
    pub probabilities: Vec<[f64; 2]>,
}

/// VAR, eigen-portfolio and Johansen test on the training span, then min-max
/// normalisation and Hamilton regimes of the portfolio.
pub fn analyse_pair(mids: &MidPriceSeries, config: &PairsConfig) -> Result<PairAnalysis> {
    let train_rows = train_rows(mids, config.train_end_timestamp)?;
    let train: Vec<Vec<f64>> = mids.prices.iter().map(|p| p[..train_rows].to_vec()).collect();
    let var_series: Vec<Vec<f64>> = match config.var_input {
        VarInput::Levels => train.clone(),
        VarInput::Differences => train.iter().map(|p| p.windows(2).map(|w| w[1] - w[0]).collect()).collect(),
    };
    let var = fit_var(&var_series)?;
    let coint = cointegrate(&var, config.dt)?;
    let johansen = johansen_test(&train, &config.johansen)?;
    let raw = portfolio(&coint.weights, &[mids.prices[0].clone(), mids.prices[1].clone()])?;
    let minmax = MinMax::fit(&raw[..train_rows])?;
    let normalized = minmax.transform_all(&raw);
    let hamilton = hamilton_two_regime(&normalized[..train_rows], &config.hamilton)?;
    let probabilities = hamilton.smooth(&normalized);
    Ok(PairAnalysis { train_rows, var, coint, johansen, minmax, hamilton, raw, normalized, probabilities })
}

/// Hamilton estimates without the per-step probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonSummary {
    pub means: [f64; 2],
    pub variance: f64,
    pub transition: [[f64; 2]; 2],
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CointReport {
    pub train_rows: usize,
    pub train_end_time: f64,
    pub var: VarFit,
    pub coint: CointResult,
    pub johansen: JohansenResult,
    pub minmax: MinMax,
    pub hamilton: HamiltonSummary,
}

impl CointReport {
    pub fn new(mids: &MidPriceSeries, a: &PairAnalysis) -> Self {
        let h = &a.hamilton;
        CointReport {
            train_rows: a.train_rows,
            train_end_time: mids.time(a.train_rows - 1),
            var: a.var.clone(),
            coint: a.coint.clone(),
            johansen: a.johansen.clone(),
            minmax: a.minmax,
            hamilton: HamiltonSummary {
                means: h.means,
                variance: h.variance,
                transition: h.transition,
                loglik: h.loglik(),
                iterations: h.loglik_trace.len().saturating_sub(1),
                converged: h.converged,
                degenerate: h.degenerate,
            },
        }
    }
}

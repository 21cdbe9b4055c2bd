//! Two-regime Gaussian mean-switching model fitted by EM over the Hamilton
//! filter and Kim smoother.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HamiltonConfig {
    pub max_iterations: usize,
    /// Stop once the log-likelihood gains less than `tolerance · (1 + |ℓ|)`.
    pub tolerance: f64,
}

impl Default for HamiltonConfig {
    fn default() -> Self {
        HamiltonConfig { max_iterations: 500, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HamiltonFit {
    /// Regime means, ascending.
    pub means: [f64; 2],
    pub variance: f64,
    /// `transition[i][j] = P(s_{t+1} = j | s_t = i)`.
    pub transition: [[f64; 2]; 2],
    pub initial: [f64; 2],
    /// Smoothed `P(s_t = j | y_1..y_T)`.
    pub smoothed: Vec<[f64; 2]>,
    /// Log-likelihood evaluated at the start of every EM iteration, then at the final parameters.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    /// The data carry no evidence of two distinct regimes.
    pub degenerate: bool,
}

impl HamiltonFit {
    pub fn loglik(&self) -> f64 {
        *self.loglik_trace.last().unwrap_or(&f64::NAN)
    }

    /// Most probable regime at every step.
    pub fn labels(&self) -> Vec<usize> {
        self.smoothed.iter().map(|p| usize::from(p[1] > p[0])).collect()
    }

    /// Smoothed regime probabilities of another series under these
    /// parameters. A degenerate fit gives 1/2 everywhere.
    pub fn smooth(&self, y: &[f64]) -> Vec<[f64; 2]> {
        if self.degenerate || y.is_empty() {
            return vec![[0.5, 0.5]; y.len()];
        }
        let p = Params { means: self.means, variance: self.variance, transition: self.transition, initial: self.initial };
        e_step(y, &p).smoothed
    }
}

#[derive(Clone, Copy)]
struct Params {
    means: [f64; 2],
    variance: f64,
    transition: [[f64; 2]; 2],
    initial: [f64; 2],
}

struct EStep {
    loglik: f64,
    smoothed: Vec<[f64; 2]>,
    /// Σ_t P(s_t = i, s_{t+1} = j | data).
    pair_counts: [[f64; 2]; 2],
}

fn log_density(y: f64, mean: f64, variance: f64) -> f64 {
    -0.5 * ((2.0 * std::f64::consts::PI * variance).ln() + (y - mean).powi(2) / variance)
}

fn e_step(y: &[f64], p: &Params) -> EStep {
    let n = y.len();
    let mut dens = Vec::with_capacity(n);
    let mut loglik = 0.0;
    for &v in y {
        let l = [log_density(v, p.means[0], p.variance), log_density(v, p.means[1], p.variance)];
        let top = l[0].max(l[1]);
        loglik += top;
        dens.push([(l[0] - top).exp(), (l[1] - top).exp()]);
    }
    let mut alpha = vec![[0.0; 2]; n];
    let mut scale = vec![0.0; n];
    for t in 0..n {
        let prior = if t == 0 {
            p.initial
        } else {
            let a = alpha[t - 1];
            [
                a[0] * p.transition[0][0] + a[1] * p.transition[1][0],
                a[0] * p.transition[0][1] + a[1] * p.transition[1][1],
            ]
        };
        let joint = [prior[0] * dens[t][0], prior[1] * dens[t][1]];
        let c = joint[0] + joint[1];
        scale[t] = c;
        loglik += c.ln();
        alpha[t] = [joint[0] / c, joint[1] / c];
    }
    let mut beta = vec![[1.0; 2]; n];
    let mut pair_counts = [[0.0; 2]; 2];
    for t in (0..n.saturating_sub(1)).rev() {
        let next = [dens[t + 1][0] * beta[t + 1][0], dens[t + 1][1] * beta[t + 1][1]];
        for i in 0..2 {
            beta[t][i] = (p.transition[i][0] * next[0] + p.transition[i][1] * next[1]) / scale[t + 1];
            for j in 0..2 {
                pair_counts[i][j] += alpha[t][i] * p.transition[i][j] * next[j] / scale[t + 1];
            }
        }
    }
    let smoothed = alpha
        .iter()
        .zip(&beta)
        .map(|(a, b)| {
            let g = [a[0] * b[0], a[1] * b[1]];
            let s = g[0] + g[1];
            [g[0] / s, g[1] / s]
        })
        .collect();
    EStep { loglik, smoothed, pair_counts }
}

fn m_step(y: &[f64], e: &EStep) -> Params {
    let n = y.len() as f64;
    let mut weight = [0.0; 2];
    let mut sum = [0.0; 2];
    for (g, &v) in e.smoothed.iter().zip(y) {
        for j in 0..2 {
            weight[j] += g[j];
            sum[j] += g[j] * v;
        }
    }
    let means = [sum[0] / weight[0], sum[1] / weight[1]];
    let variance = e
        .smoothed
        .iter()
        .zip(y)
        .map(|(g, &v)| g[0] * (v - means[0]).powi(2) + g[1] * (v - means[1]).powi(2))
        .sum::<f64>()
        / n;
    let mut transition = [[0.0; 2]; 2];
    for i in 0..2 {
        let row = e.pair_counts[i][0] + e.pair_counts[i][1];
        for j in 0..2 {
            transition[i][j] = if row > 0.0 { e.pair_counts[i][j] / row } else { 0.5 };
        }
    }
    Params { means, variance, transition, initial: e.smoothed[0] }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    sorted[((sorted.len() - 1) as f64 * q).round() as usize]
}

/// Fits the model to `y` (normally min-max normalised). Regimes are ordered so
/// that `means[0] < means[1]`.
pub fn hamilton_two_regime(y: &[f64], config: &HamiltonConfig) -> Result<HamiltonFit> {
    if y.len() < 3 {
        return Err(Error::InsufficientData("Hamilton EM needs at least 3 observations".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("Hamilton EM input contains non-finite values".into()));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    if !(var > 1e-24) {
        warn!("constant series: regimes collapse");
        return Ok(HamiltonFit {
            means: [mean, mean],
            variance: 0.0,
            transition: [[1.0, 0.0], [0.0, 1.0]],
            initial: [0.5, 0.5],
            smoothed: vec![[0.5, 0.5]; y.len()],
            loglik_trace: Vec::new(),
            converged: true,
            degenerate: true,
        });
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let floor = var * 1e-10;
    let mut params = Params {
        means: [quantile(&sorted, 0.25), quantile(&sorted, 0.75)],
        variance: (var / 4.0).max(floor),
        transition: [[0.9, 0.1], [0.1, 0.9]],
        initial: [0.5, 0.5],
    };
    if params.means[0] == params.means[1] {
        params.means = [mean - var.sqrt() / 2.0, mean + var.sqrt() / 2.0];
    }
    let mut trace = Vec::new();
    let mut converged = false;
    let mut e = e_step(y, &params);
    for _ in 0..config.max_iterations {
        trace.push(e.loglik);
        let mut next = m_step(y, &e);
        next.variance = next.variance.max(floor);
        let e_next = e_step(y, &next);
        let gain = e_next.loglik - e.loglik;
        params = next;
        e = e_next;
        if gain.abs() < config.tolerance * (1.0 + e.loglik.abs()) {
            converged = true;
            break;
        }
    }
    trace.push(e.loglik);
    if !converged {
        warn!("Hamilton EM stopped after {} iterations without converging", config.max_iterations);
    }
    let mut smoothed = e.smoothed;
    if params.means[0] > params.means[1] {
        params.means.swap(0, 1);
        params.initial.swap(0, 1);
        let t = params.transition;
        params.transition = [[t[1][1], t[1][0]], [t[0][1], t[0][0]]];
        smoothed.iter_mut().for_each(|g| g.swap(0, 1));
    }
    let degenerate = (params.means[1] - params.means[0]).abs() < 1e-6 * range.max(f64::MIN_POSITIVE);
    Ok(HamiltonFit {
        means: params.means,
        variance: params.variance,
        transition: params.transition,
        initial: params.initial,
        smoothed,
        loglik_trace: trace,
        converged,
        degenerate,
    })
}

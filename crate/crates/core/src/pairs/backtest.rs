use std::io::Write;
use std::path::Path;

use rand::Rng;

use super::hamilton::HamiltonFit;
use super::zscore::zscore_positions;
use crate::ddpg::AgentBundle;
use crate::eval::{replay, run_bundle_on_path, EpisodeResult};
use crate::fmt::{csv_line, g12};
use crate::markov::{BatchSampler, ChainSpec, EnvConfig, TrainingBatch};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// Trading steps available on `series` after a `window` warm-up.
pub fn trading_steps(series: &[f64], window: usize) -> Result<usize> {
    if series.len() < window + 2 {
        return Err(Error::InsufficientData(format!(
            "backtest needs {} values for a {window}-step warm-up and one trade, got {}",
            window + 2,
            series.len()
        )));
    }
    Ok(series.len() - window - 1)
}

/// Scores `positions[k]`, held from `series[window + k]` to `series[window + k + 1]`.
pub fn backtest_positions(series: &[f64], window: usize, positions: &[f64], lambda: f64) -> Result<EpisodeResult> {
    let n = trading_steps(series, window)?;
    if positions.len() != n {
        return Err(Error::Dimension(format!("expected {n} positions, got {}", positions.len())));
    }
    Ok(replay(&series[window..], positions, 0.0, lambda))
}

pub fn backtest_zscore(series: &[f64], window: usize, i_max: f64, z_cap: f64, lambda: f64) -> Result<EpisodeResult> {
    let n = trading_steps(series, window)?;
    let positions = zscore_positions(series, window, i_max, z_cap);
    backtest_positions(series, window, &positions[window..window + n], lambda)
}

pub fn backtest_flat(series: &[f64], window: usize, lambda: f64) -> Result<EpisodeResult> {
    let n = trading_steps(series, window)?;
    backtest_positions(series, window, &vec![0.0; n], lambda)
}

pub fn backtest_agent(bundle: &AgentBundle, series: &[f64], lambda: f64) -> Result<EpisodeResult> {
    let n = trading_steps(series, bundle.config.window)?;
    run_bundle_on_path(bundle, series, n, lambda)
}

pub const BACKTEST_HEADER: &str = "t,I,q,r,cum_r\n";

/// One row per trade; `t` is the series index at which the position is taken.
pub fn write_backtest_csv(path: &Path, result: &EpisodeResult, first_t: usize) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(BACKTEST_HEADER.as_bytes())?;
    let mut cum = 0.0;
    for k in 0..result.len() {
        cum += result.rewards[k];
        out.write_all(
            csv_line([
                (first_t + k).to_string(),
                g12(result.inventories[k]),
                g12(result.trades[k]),
                g12(result.rewards[k]),
                g12(cum),
            ])
            .as_bytes(),
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Training rows cut at random from a historical series, labelled by the
/// most probable Hamilton regime at the window's last value.
#[derive(Debug, Clone)]
pub struct HistoricalSampler {
    series: Vec<f64>,
    labels: Vec<usize>,
    inventory: (f64, f64),
    signal: (f64, f64),
}

impl HistoricalSampler {
    pub fn new(series: Vec<f64>, labels: Vec<usize>, inventory: (f64, f64)) -> Result<Self> {
        if series.len() != labels.len() {
            return Err(Error::Dimension("one label per observation is required".into()));
        }
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(lo < hi) {
            return Err(Error::InvalidInput("historical series is constant".into()));
        }
        Ok(HistoricalSampler { series, labels, inventory, signal: (lo, hi) })
    }
}

impl BatchSampler for HistoricalSampler {
    fn sample(&self, b: usize, window: usize, rng: &mut SimRng) -> Result<TrainingBatch> {
        let width = window + 2;
        if b == 0 || window == 0 {
            return Err(Error::InvalidInput("batch size and window must be positive".into()));
        }
        if self.series.len() < width {
            return Err(Error::InsufficientData(format!(
                "series of {} values is shorter than one training row of {width}",
                self.series.len()
            )));
        }
        let mut start_rng = rng::derive(rng);
        let mut inv_rng = rng::derive(rng);
        let mut batch = TrainingBatch {
            window,
            signals: Vec::with_capacity(b * width),
            inventories: Vec::with_capacity(b),
            labels: Vec::with_capacity(b),
        };
        let last_start = self.series.len() - width;
        for _ in 0..b {
            let u = start_rng.random_range(0..=last_start);
            batch.signals.extend_from_slice(&self.series[u..u + width]);
            batch.labels.push(self.labels[u + window]);
            batch.inventories.push(rng::uniform(&mut inv_rng, self.inventory.0, self.inventory.1));
        }
        Ok(batch)
    }

    fn num_regimes(&self) -> usize {
        2
    }

    fn inventory_bounds(&self) -> (f64, f64) {
        self.inventory
    }

    fn signal_bounds(&self) -> (f64, f64) {
        self.signal
    }
}

/// Environment description of a historical series for agents: the Hamilton
/// regimes as θ levels with their switching intensities, and a single κ and σ
/// from the lag-1 regression of the series on itself.
pub fn historical_env(series: &[f64], fit: &HamiltonFit, template: &EnvConfig) -> Result<EnvConfig> {
    if series.len() < 3 {
        return Err(Error::InsufficientData("historical series is too short".into()));
    }
    let n = (series.len() - 1) as f64;
    let mx = series[..series.len() - 1].iter().sum::<f64>() / n;
    let my = series[1..].iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for w in series.windows(2) {
        sxy += (w[0] - mx) * (w[1] - my);
        sxx += (w[0] - mx).powi(2);
    }
    if !(sxx > 0.0) {
        return Err(Error::InvalidInput("historical series is constant".into()));
    }
    let rho = (sxy / sxx).clamp(1e-6, 1.0 - 1e-6);
    let resid = series
        .windows(2)
        .map(|w| (w[1] - my - rho * (w[0] - mx)).powi(2))
        .sum::<f64>()
        / n;
    let dt = 1.0;
    let kappa = (1.0 - rho) / dt;
    let p = fit.transition;
    let theta = ChainSpec {
        levels: fit.means.to_vec(),
        rates: vec![vec![-p[0][1] / dt, p[0][1] / dt], vec![p[1][0] / dt, -p[1][0] / dt]],
    };
    let env = EnvConfig {
        theta,
        kappa: ChainSpec::constant(kappa),
        sigma: ChainSpec::constant((resid / dt).sqrt()),
        dt,
        mu_inv: series.iter().sum::<f64>() / series.len() as f64,
        ..template.clone()
    };
    env.validate()?;
    Ok(env)
}

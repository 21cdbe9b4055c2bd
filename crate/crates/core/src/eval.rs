//! Test episodes, cumulative-reward statistics and policy-grid export.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::ddpg::{compute_reward, AgentBundle, Pipeline};
use crate::fmt::{csv_line, g12};
use crate::markov::{simulate_path, Environment};
use crate::{rng, Error, Result};

/// Signal at each decision time plus the final value, and what the agent did.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    /// `S_t` for the `n` decision times followed by `S_{t+n}`.
    pub signals: Vec<f64>,
    /// Inventory held after each decision.
    pub inventories: Vec<f64>,
    pub trades: Vec<f64>,
    pub rewards: Vec<f64>,
    pub cumulative: f64,
}

impl EpisodeResult {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Rewards of the same actions under a different cost `lambda`.
    pub fn rescored(&self, lambda: f64) -> EpisodeResult {
        replay(&self.signals, &self.inventories, 0.0, lambda)
    }

    pub fn write_csv(&self, episode: usize, out: &mut impl Write) -> Result<()> {
        for t in 0..self.len() {
            out.write_all(
                csv_line([
                    episode.to_string(),
                    (t + 1).to_string(),
                    g12(self.signals[t]),
                    g12(self.inventories[t]),
                    g12(self.trades[t]),
                    g12(self.rewards[t]),
                ])
                .as_bytes(),
            )?;
        }
        Ok(())
    }
}

pub const EPISODE_HEADER: &str = "episode,t,S,I,q,r\n";

/// Scores holding `inventories[t]` over `signals[t] → signals[t+1]`, starting flat at `start`.
pub fn replay(signals: &[f64], inventories: &[f64], start: f64, lambda: f64) -> EpisodeResult {
    let n = inventories.len();
    let mut trades = Vec::with_capacity(n);
    let mut rewards = Vec::with_capacity(n);
    let mut held = start;
    let mut cumulative = 0.0;
    for t in 0..n {
        let q = inventories[t] - held;
        let r = compute_reward(inventories[t], signals[t], signals[t + 1], q, lambda);
        trades.push(q);
        rewards.push(r);
        cumulative += r;
        held = inventories[t];
    }
    EpisodeResult { signals: signals[..=n].to_vec(), inventories: inventories.to_vec(), trades, rewards, cumulative }
}

/// Trades `n` steps on `path`, whose first `window` values are warm-up. At
/// decision `k` the agent sees `path[k..=k+window]` and its inventory, and
/// `decide` returns the inventory to hold next.
pub fn run_on_path(
    path: &[f64],
    window: usize,
    n: usize,
    lambda: f64,
    mut decide: impl FnMut(usize, f64) -> Result<f64>,
) -> Result<EpisodeResult> {
    if n == 0 {
        return Err(Error::InvalidInput("episodes need at least one trading step".into()));
    }
    if path.len() < window + n + 1 {
        return Err(Error::InsufficientData(format!(
            "path of {} values cannot cover {window} warm-up and {n} trading steps",
            path.len()
        )));
    }
    let mut held = 0.0;
    let mut inventories = Vec::with_capacity(n);
    for k in 0..n {
        held = decide(k, held)?;
        inventories.push(held);
    }
    Ok(replay(&path[window..window + n + 1], &inventories, 0.0, lambda))
}

/// Deterministic agent decisions along `path`.
pub fn run_bundle_on_path(bundle: &AgentBundle, path: &[f64], n: usize, lambda: f64) -> Result<EpisodeResult> {
    let w = bundle.config.window;
    if path.len() < w + n + 1 {
        return Err(Error::InsufficientData("path too short for the episode".into()));
    }
    let windows: Vec<&[f64]> = (0..n).map(|k| &path[k..=k + w]).collect();
    let block = bundle.features(&windows, &vec![0.0; n])?;
    let scaler = bundle.scaler;
    let mut row = block.row(0).to_vec();
    run_on_path(path, w, n, lambda, |k, held| {
        row.copy_from_slice(block.row(k));
        row[1] = scaler.inventory(held);
        let t = Tensor::matrix(1, row.len(), row.clone())?;
        Ok(bundle.act(&t)?[0])
    })
}

/// One test episode: a fresh path from `S_0 = 1` with `W` warm-up steps, then `n` trades from flat.
pub fn run_test_episode(bundle: &AgentBundle, env: &Environment, n: usize, seed: u64) -> Result<EpisodeResult> {
    let w = bundle.config.window;
    let path = simulate_path(env, 1.0, w + n + 1, &mut rng::seeded(seed))?;
    run_bundle_on_path(bundle, &path.values, n, env.config().lambda)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStats {
    pub pipeline: Pipeline,
    pub setting: String,
    pub n: usize,
    pub rewards: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation; 0 when only one episode ran.
    pub std: f64,
    pub std_defined: bool,
}

impl ExperimentStats {
    pub fn from_rewards(pipeline: Pipeline, setting: &str, n: usize, rewards: Vec<f64>) -> Self {
        let m = rewards.len();
        let mean = rewards.iter().sum::<f64>() / m.max(1) as f64;
        let std_defined = m > 1;
        let std = if std_defined {
            (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1) as f64).sqrt()
        } else {
            0.0
        };
        ExperimentStats { pipeline, setting: setting.to_string(), n, rewards, mean, std, std_defined }
    }

    pub const SUMMARY_HEADER: &'static str = "pipeline,setting,M,n,mean,std\n";

    pub fn summary_line(&self) -> String {
        csv_line([
            self.pipeline.name().to_string(),
            self.setting.clone(),
            self.rewards.len().to_string(),
            self.n.to_string(),
            g12(self.mean),
            g12(self.std),
        ])
    }
}

/// `m` episodes with seeds `seed, seed + 1, …`, run in parallel and merged in order.
pub fn evaluate_agent(
    bundle: &AgentBundle,
    env: &Environment,
    setting: &str,
    m: usize,
    n: usize,
    seed: u64,
) -> Result<(ExperimentStats, Vec<EpisodeResult>)> {
    if m == 0 {
        return Err(Error::InvalidInput("at least one test episode is required".into()));
    }
    let episodes: Vec<EpisodeResult> = (0..m)
        .into_par_iter()
        .map(|i| run_test_episode(bundle, env, n, seed.wrapping_add(i as u64)))
        .collect::<Result<_>>()?;
    let rewards = episodes.iter().map(|e| e.cumulative).collect();
    Ok((ExperimentStats::from_rewards(bundle.pipeline(), setting, n, rewards), episodes))
}

pub fn write_episodes_csv(path: &Path, episodes: &[EpisodeResult]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(EPISODE_HEADER.as_bytes())?;
    for (i, e) in episodes.iter().enumerate() {
        e.write_csv(i, &mut out)?;
    }
    out.flush()?;
    Ok(())
}

/// What fills the model columns of a policy grid.
#[derive(Debug, Clone, PartialEq)]
pub enum GridContext {
    /// Unit-scale model features used verbatim, e.g. fixed posterior vectors.
    Extras(Vec<Vec<f64>>),
    /// Exemplar windows passed through the agent's model.
    Windows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub context: usize,
    pub signal: f64,
    pub inventory: f64,
    pub extras: Vec<f64>,
    pub target: f64,
    pub trade: f64,
}

/// Evaluates the policy over `signals × inventories` for each context entry.
pub fn export_policy_grid(
    bundle: &AgentBundle,
    signals: &[f64],
    inventories: &[f64],
    context: &GridContext,
) -> Result<Vec<GridRow>> {
    if signals.is_empty() || inventories.is_empty() {
        return Err(Error::InvalidInput("policy grids need non-empty axes".into()));
    }
    let extras: Vec<Vec<f64>> = match context {
        GridContext::Extras(rows) => rows.clone(),
        GridContext::Windows(ws) => {
            let refs: Vec<&[f64]> = ws.iter().map(|w| w.as_slice()).collect();
            let block = bundle.features(&refs, &vec![0.0; refs.len()])?;
            (0..block.rows()).map(|i| block.row(i)[2..].to_vec()).collect()
        }
    };
    let width = bundle.feature_width();
    let mut rows = Vec::new();
    for (c, ex) in extras.iter().enumerate() {
        if ex.len() + 2 != width {
            return Err(Error::Dimension(format!(
                "context {c} supplies {} model features, the agent expects {}",
                ex.len(),
                width - 2
            )));
        }
        let mut data = Vec::with_capacity(signals.len() * inventories.len() * width);
        for &s in signals {
            for &i in inventories {
                data.push(bundle.scaler.signal(s));
                data.push(bundle.scaler.inventory(i));
                data.extend_from_slice(ex);
            }
        }
        let targets = bundle.act(&Tensor::matrix(signals.len() * inventories.len(), width, data)?)?;
        let mut k = 0;
        for &s in signals {
            for &i in inventories {
                rows.push(GridRow {
                    context: c,
                    signal: s,
                    inventory: i,
                    extras: ex.clone(),
                    target: targets[k],
                    trade: targets[k] - i,
                });
                k += 1;
            }
        }
    }
    Ok(rows)
}

pub fn write_grid_csv(path: &Path, rows: &[GridRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let k = rows.first().map(|r| r.extras.len()).unwrap_or(0);
    let mut header = vec!["context".to_string(), "S".into(), "I".into()];
    header.extend((1..=k).map(|j| format!("x{j}")));
    header.extend(["I_next".to_string(), "q".into()]);
    out.write_all(csv_line(header).as_bytes())?;
    for r in rows {
        let mut fields = vec![r.context.to_string(), g12(r.signal), g12(r.inventory)];
        fields.extend(r.extras.iter().map(|v| g12(*v)));
        fields.extend([g12(r.target), g12(r.trade)]);
        out.write_all(csv_line(fields).as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// `count` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

use rayon::prelude::*;
use regime_trader::config::{PairsStrategy, RunConfig};
use regime_trader::ddpg::{self, AgentBundle, FeatureScaler, Pipeline};
use regime_trader::eval::EpisodeResult;
use regime_trader::fmt::{csv_line, g12};
use regime_trader::gru::{self, GruConfig, GruStack, HeadKind};
use regime_trader::markov::{BatchSampler, EnvConfig};
use regime_trader::pairs::{
    analyse_pair, backtest_agent, backtest_flat, backtest_zscore, historical_env, ingest_pair, write_backtest_csv,
    CointReport, HistoricalSampler, MidPriceSeries, PairAnalysis,
};
use regime_trader::{rng, Error, Result};

use crate::output::Output;

pub fn ingest(config: &RunConfig, mut out: Output) -> Result<Output> {
    let assets = config.check_pairs_inputs()?;
    let mids = ingest_pair(assets, config.pairs.grid_seconds)?;
    log::info!("{} grid points from t = {}", mids.len(), mids.start);
    mids.save_csv(&out.file("mids.csv"))?;
    Ok(out)
}

fn load_mids(config: &RunConfig) -> Result<MidPriceSeries> {
    let path = config.output_dir.join("pairs-ingest").join("mids.csv");
    if !path.is_file() {
        return Err(Error::Usage(format!("{} not found; run pairs-ingest first", path.display())));
    }
    MidPriceSeries::load_csv(&path)
}

pub fn coint(config: &RunConfig, mut out: Output) -> Result<Output> {
    let mids = load_mids(config)?;
    let a = analyse_pair(&mids, &config.pairs)?;
    let mut text = csv_line(["t", "S_raw", "S_norm", "p1", "p2"]);
    for k in 0..mids.len() {
        text.push_str(&csv_line([
            g12(mids.time(k)),
            g12(a.raw[k]),
            g12(a.normalized[k]),
            g12(a.probabilities[k][0]),
            g12(a.probabilities[k][1]),
        ]));
    }
    out.write("portfolio.csv", text)?;
    out.write_json("coint_report.json", &CointReport::new(&mids, &a))?;
    Ok(out)
}

#[derive(Clone, Copy)]
enum Job {
    Agent(Pipeline, u64),
    Zscore,
    Flat,
}

impl Job {
    fn strategy(self) -> &'static str {
        match self {
            Job::Agent(p, _) => p.name(),
            Job::Zscore => PairsStrategy::Zscore.name(),
            Job::Flat => PairsStrategy::Flat.name(),
        }
    }

    fn label(self) -> String {
        match self {
            Job::Agent(p, seed) => format!("{}_seed{seed}", p.name()),
            other => other.strategy().to_string(),
        }
    }
}

/// Trains one agent on the normalised training span. Prob agents first get
/// a two-class GRU filter fitted to the Hamilton labels.
fn train_historical_agent(config: &RunConfig, a: &PairAnalysis, pipeline: Pipeline, seed: u64) -> Result<AgentBundle> {
    let p = &config.pairs;
    let train = a.normalized[..a.train_rows].to_vec();
    let sampler = HistoricalSampler::new(train.clone(), a.hamilton.labels(), (-p.i_max, p.i_max))?;
    let template = EnvConfig {
        window: p.w,
        i_min: -p.i_max,
        i_max: p.i_max,
        lambda: p.lambda,
        gamma: p.gamma,
        ..EnvConfig::default()
    };
    let env = historical_env(&train, &a.hamilton, &template)?;
    let mut r = rng::seeded(config.seed.wrapping_add(seed));
    let model = match pipeline {
        Pipeline::Prob => {
            let g = &config.gru;
            let gc = GruConfig {
                layers: g.layers,
                hidden: g.hidden,
                gate_activation: g.gate_activation,
                head: HeadKind::Classifier { classes: sampler.num_regimes() },
                head_layers: g.head_layers,
                head_width: g.head_width,
                ..GruConfig::classifier(2, p.w)
            }
            .with_normalisation(env.mu_inv, env.stationary_std());
            let mut stack = GruStack::new(gc, &mut r)?;
            let report = gru::train_first_step(&mut stack, &sampler, &p.filter, &mut r)?;
            log::info!("seed {seed}: regime filter validation {:?}", report.validation);
            Some(stack)
        }
        _ => None,
    };
    let scaler = FeatureScaler { signal: sampler.signal_bounds(), inventory: (-p.i_max, p.i_max) };
    let mut bundle = AgentBundle::new(p.agent_config(pipeline)?, env, scaler, model, &mut r)?;
    ddpg::train_agent(&mut bundle, &sampler, &mut r)?;
    Ok(bundle)
}

fn summary_row(strategy: &str, steps: usize, rewards: &[f64]) -> String {
    let m = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / m;
    let std = if rewards.len() > 1 {
        (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    csv_line([strategy.to_string(), rewards.len().to_string(), steps.to_string(), g12(mean), g12(std)])
}

/// Every strategy trades the same test steps, from the first test value to
/// the last; warm-up windows reach back into the training span.
pub fn backtest(config: &RunConfig, mut out: Output) -> Result<Output> {
    let p = &config.pairs;
    let mids = load_mids(config)?;
    let a = analyse_pair(&mids, p)?;
    let mut jobs = Vec::new();
    for &s in &p.strategies {
        match s {
            PairsStrategy::Prob => jobs.extend(p.agent_seeds.iter().map(|&k| Job::Agent(Pipeline::Prob, k))),
            PairsStrategy::Hid => jobs.extend(p.agent_seeds.iter().map(|&k| Job::Agent(Pipeline::Hid, k))),
            PairsStrategy::Zscore => jobs.push(Job::Zscore),
            PairsStrategy::Flat => jobs.push(Job::Flat),
        }
    }
    if jobs.is_empty() {
        return Err(Error::Config("pairs.strategies: nothing to backtest".into()));
    }
    let start = a.train_rows;
    let warm_up = |window: usize| -> Result<&[f64]> {
        if window > start {
            return Err(Error::InsufficientData(format!(
                "a {window}-step warm-up needs more than the {start} training rows"
            )));
        }
        Ok(&a.normalized[start - window..])
    };
    let results: Vec<(Job, EpisodeResult)> = jobs
        .par_iter()
        .map(|&job| {
            let result = match job {
                Job::Agent(pipeline, seed) => {
                    let bundle = train_historical_agent(config, &a, pipeline, seed)?;
                    backtest_agent(&bundle, warm_up(p.w)?, p.lambda)?
                }
                Job::Zscore => backtest_zscore(warm_up(p.zscore_window)?, p.zscore_window, p.i_max, p.z_cap, p.lambda)?,
                Job::Flat => backtest_flat(warm_up(1)?, 1, p.lambda)?,
            };
            Ok((job, result))
        })
        .collect::<Result<_>>()?;

    let steps = mids.len() - start - 1;
    let mut summary = csv_line(["strategy", "runs", "steps", "mean", "std"]);
    let mut seen: Vec<&str> = Vec::new();
    for (job, result) in &results {
        write_backtest_csv(&out.file(&format!("backtest_{}.csv", job.label())), result, start)?;
        if !seen.contains(&job.strategy()) {
            seen.push(job.strategy());
        }
    }
    for strategy in seen {
        let rewards: Vec<f64> =
            results.iter().filter(|(j, _)| j.strategy() == strategy).map(|(_, r)| r.cumulative).collect();
        summary.push_str(&summary_row(strategy, steps, &rewards));
    }
    out.write("backtest_summary.csv", summary)?;
    Ok(out)
}

use std::io::Write;
use std::path::PathBuf;

use regime_trader::checks;
use regime_trader::config::RunConfig;
use regime_trader::ddpg::{self, AgentBundle, FeatureScaler, Pipeline, TrainingDiagnostics};
use regime_trader::eval::{self, GridContext};
use regime_trader::fmt::{csv_line, g12};
use regime_trader::gru::{self, GruStack};
use regime_trader::markov::{simulate_path, Environment};
use regime_trader::{rng, Error, Result};

use crate::output::Output;

const MODEL_STEM: &str = "model";

pub fn simulate(config: &RunConfig, mut out: Output) -> Result<Output> {
    let env = Environment::new(config.env.clone())?;
    let path = simulate_path(&env, config.simulate.s0, config.simulate.length, &mut rng::seeded(config.seed))?;
    path.save_csv(&out.file("path.csv"))?;
    Ok(out)
}

fn losses_csv(losses: &[f64]) -> String {
    let mut text = csv_line(["iteration", "loss"]);
    for (i, l) in losses.iter().enumerate() {
        text.push_str(&csv_line([(i + 1).to_string(), g12(*l)]));
    }
    text
}

pub fn train_filter(config: &RunConfig, mut out: Output) -> Result<Output> {
    let env = Environment::new(config.env.clone())?;
    let mut r = rng::seeded(config.seed);
    let mut stack = GruStack::new(config.gru_config()?, &mut r)?;
    let report = gru::train_first_step(&mut stack, &env, &config.gru.train, &mut r)?;
    out.file("model.rtps");
    out.file("model.json");
    stack.save(&out.dir().join(MODEL_STEM))?;
    out.write("losses.csv", losses_csv(&report.losses))?;
    out.write_json("validation.json", &report.validation)?;
    Ok(out)
}

fn diagnostics_csv(d: &TrainingDiagnostics, critic_repeats: usize, actor_repeats: usize) -> String {
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let mut text = csv_line(["iteration", "epsilon", "policy_magnitude", "critic_loss", "actor_loss", "model_loss"]);
    for i in 0..d.epsilons.len() {
        text.push_str(&csv_line([
            (i + 1).to_string(),
            g12(d.epsilons[i]),
            g12(d.policy_magnitude[i]),
            g12(mean(&d.critic_losses[i * critic_repeats..(i + 1) * critic_repeats])),
            g12(mean(&d.actor_losses[i * actor_repeats..(i + 1) * actor_repeats])),
            d.model_losses.get(i).map(|v| g12(*v)).unwrap_or_default(),
        ]));
    }
    text
}

pub fn train_agent(config: &RunConfig, mut out: Output) -> Result<Output> {
    let env = Environment::new(config.env.clone())?;
    let model = match config.agent.pipeline {
        Pipeline::Hid => None,
        _ => {
            let stem = config.output_dir.join("train-filter").join(MODEL_STEM);
            if !stem.with_extension("rtps").is_file() {
                return Err(Error::Usage(format!(
                    "{} agents need a first-step model; run train-filter first (looked for {})",
                    config.agent.pipeline.name(),
                    stem.with_extension("rtps").display()
                )));
            }
            Some(GruStack::load(&stem)?)
        }
    };
    let cfg = &config.env;
    let scaler = FeatureScaler { signal: cfg.signal_bounds(), inventory: (cfg.i_min, cfg.i_max) };
    let mut r = rng::seeded(config.seed);
    let mut bundle = AgentBundle::new(config.agent.clone(), cfg.clone(), scaler, model, &mut r)?;
    let diagnostics = ddpg::train_agent(&mut bundle, &env, &mut r)?;
    out.file("agent.rtps");
    out.file("agent.json");
    bundle.save(out.dir())?;
    out.write(
        "diagnostics.csv",
        diagnostics_csv(&diagnostics, config.agent.critic_repeats, config.agent.actor_repeats),
    )?;
    Ok(out)
}

fn bundle_dir(config: &RunConfig) -> PathBuf {
    config.eval.bundle.clone().unwrap_or_else(|| config.output_dir.join("train-agent"))
}

fn load_bundle(config: &RunConfig) -> Result<AgentBundle> {
    let dir = bundle_dir(config);
    if !dir.join("agent.json").is_file() {
        return Err(Error::Usage(format!(
            "no agent bundle in {}; run train-agent or set eval.bundle",
            dir.display()
        )));
    }
    AgentBundle::load(&dir)
}

pub fn evaluate(config: &RunConfig, mut out: Output) -> Result<Output> {
    let bundle = load_bundle(config)?;
    let env = Environment::new(config.env.clone())?;
    let seed = config.eval.seed.unwrap_or(config.seed);
    let (stats, episodes) =
        eval::evaluate_agent(&bundle, &env, config.setting.name(), config.eval.episodes, config.eval.steps, seed)?;
    eval::write_episodes_csv(&out.file("episodes.csv"), &episodes)?;
    let mut summary = eval::ExperimentStats::SUMMARY_HEADER.to_string();
    summary.push_str(&stats.summary_line());
    out.write("summary.csv", summary)?;
    if !stats.std_defined {
        log::warn!("a single episode has no sample standard deviation; reported as 0");
    }
    Ok(out)
}

pub fn policy_grid(config: &RunConfig, mut out: Output) -> Result<Output> {
    let bundle = load_bundle(config)?;
    let grid = &config.eval.grid;
    let signals = eval::linspace(grid.signal_min, grid.signal_max, grid.signal_points);
    let inventories = eval::linspace(bundle.env.i_min, bundle.env.i_max, grid.inventory_points);
    let context = if grid.extras.is_empty() {
        let w = bundle.config.window;
        GridContext::Windows(grid.context_levels.iter().map(|&l| vec![l; w + 1]).collect())
    } else {
        GridContext::Extras(grid.extras.clone())
    };
    let rows = eval::export_policy_grid(&bundle, &signals, &inventories, &context)?;
    eval::write_grid_csv(&out.file("policy_grid.csv"), &rows)?;
    Ok(out)
}

/// Prints one line per composite; `Ok(false)` when any exceeds the tolerance.
pub fn gradcheck(config: &RunConfig, mut out: Output) -> Result<(Output, bool)> {
    let reports = checks::run_all(config.seed)?;
    let mut text = csv_line(["check", "max_rel_error", "entries", "pass"]);
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let mut ok = true;
    for r in &reports {
        let pass = r.report.passes(checks::TOLERANCE);
        ok &= pass;
        writeln!(
            lock,
            "{:<16} max_rel_error={:.3e} entries={} {}",
            r.name,
            r.report.max_rel_error,
            r.report.entries_checked,
            if pass { "ok" } else { "FAIL" }
        )?;
        text.push_str(&csv_line([
            r.name.to_string(),
            g12(r.report.max_rel_error),
            r.report.entries_checked.to_string(),
            pass.to_string(),
        ]));
    }
    out.write("gradcheck.csv", text)?;
    Ok((out, ok))
}

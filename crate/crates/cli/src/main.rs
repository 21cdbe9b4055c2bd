//! `regime-trader`: simulate, train and evaluate regime-aware trading agents,
//! and run the pair-trading workflow on order-book data.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use regime_trader::config::RunConfig;
use regime_trader::{Error, Result};

mod commands;
mod output;
mod pairs;

#[derive(Parser)]
#[command(name = "regime-trader", version, about = "Optimal trading of regime-switching mean-reverting signals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (required except for gradcheck).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `seed` (and `eval.seed`) from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel evaluation and backtests.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Simulate one regime-switching signal path.
    Simulate,
    /// Train the first-step GRU (regime classifier or next-value regressor).
    TrainFilter,
    /// Train a DDPG agent on simulated batches.
    TrainAgent,
    /// Run test episodes with a trained agent.
    Evaluate,
    /// Tabulate an agent's policy over signal and inventory levels.
    PolicyGrid,
    /// Resample two LOBSTER assets onto a common one-second mid-price grid.
    PairsIngest,
    /// Fit the VAR, build the cointegrated portfolio and estimate regimes.
    PairsCoint,
    /// Train agents on the training span and backtest all strategies on the test span.
    PairsBacktest,
    /// Check analytic gradients of the training losses against finite differences.
    Gradcheck,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::TrainFilter => "train-filter",
            Command::TrainAgent => "train-agent",
            Command::Evaluate => "evaluate",
            Command::PolicyGrid => "policy-grid",
            Command::PairsIngest => "pairs-ingest",
            Command::PairsCoint => "pairs-coint",
            Command::PairsBacktest => "pairs-backtest",
            Command::Gradcheck => "gradcheck",
        }
    }
}

fn load_config(command: Command, common: &Common) -> Result<RunConfig> {
    let mut config = match (&common.config, command) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Command::Gradcheck) => RunConfig::default(),
        (None, _) => return Err(Error::Usage(format!("{} requires --config <path>", command.name()))),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
        config.eval.seed = None;
    }
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(threads) = cli.common.threads {
        if threads == 0 {
            return Err(Error::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot start {threads} worker threads: {e}")))?;
    }
    let config = load_config(cli.command, &cli.common)?;
    let out = output::Output::create(&config.output_dir, cli.command.name())?;
    let (out, ok) = match cli.command {
        Command::Simulate => (commands::simulate(&config, out)?, true),
        Command::TrainFilter => (commands::train_filter(&config, out)?, true),
        Command::TrainAgent => (commands::train_agent(&config, out)?, true),
        Command::Evaluate => (commands::evaluate(&config, out)?, true),
        Command::PolicyGrid => (commands::policy_grid(&config, out)?, true),
        Command::PairsIngest => (pairs::ingest(&config, out)?, true),
        Command::PairsCoint => (pairs::coint(&config, out)?, true),
        Command::PairsBacktest => (pairs::backtest(&config, out)?, true),
        Command::Gradcheck => commands::gradcheck(&config, out)?,
    };
    let manifest = out.finish(&config)?;
    info!("wrote {}", manifest.display());
    Ok(ok)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REGIME_TRADER_LOG", "info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 2 } else { 1 })
        }
    }
}

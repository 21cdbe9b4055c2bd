use std::io::Write;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::chain::{stationary_distribution, ChainSpec, RegimeChain};
use super::ou::{ou_step, OUParams};
use crate::fmt::{csv_line, g12};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

/// The three simulation settings: which OU parameters switch regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Theta,
    ThetaKappa,
    ThetaKappaSigma,
}

impl Setting {
    pub fn name(self) -> &'static str {
        match self {
            Setting::Theta => "theta",
            Setting::ThetaKappa => "theta_kappa",
            Setting::ThetaKappaSigma => "theta_kappa_sigma",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvConfig {
    pub theta: ChainSpec,
    pub kappa: ChainSpec,
    pub sigma: ChainSpec,
    pub dt: f64,
    /// Default look-back window W.
    pub window: usize,
    pub i_min: f64,
    pub i_max: f64,
    /// Transaction cost per unit traded.
    pub lambda: f64,
    pub gamma: f64,
    /// Centre of the initial-value distribution for training batches.
    pub mu_inv: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig::preset(Setting::Theta)
    }
}

impl EnvConfig {
    pub fn preset(setting: Setting) -> Self {
        let theta = ChainSpec::symmetric(vec![0.9, 1.0, 1.1], 0.1);
        let (kappa, sigma) = match setting {
            Setting::Theta => (ChainSpec::constant(5.0), ChainSpec::constant(0.2)),
            Setting::ThetaKappa => {
                (ChainSpec::symmetric(vec![3.0, 7.0], 0.1), ChainSpec::constant(0.2))
            }
            Setting::ThetaKappaSigma => (
                ChainSpec::symmetric(vec![3.0, 7.0], 0.1),
                ChainSpec::symmetric(vec![0.1, 0.3], 0.1),
            ),
        };
        EnvConfig {
            theta,
            kappa,
            sigma,
            dt: 0.2,
            window: 10,
            i_min: -10.0,
            i_max: 10.0,
            lambda: 0.05,
            gamma: 0.999,
            mu_inv: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate("env.theta")?;
        self.kappa.validate("env.kappa")?;
        self.sigma.validate("env.sigma")?;
        if self.kappa.levels.iter().any(|&k| k <= 0.0) {
            return Err(Error::Config("env.kappa: levels must be positive".into()));
        }
        if self.sigma.levels.iter().any(|&s| s < 0.0) {
            return Err(Error::Config("env.sigma: levels must be non-negative".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("env.dt must be positive".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("env.window must be at least 1".into()));
        }
        if !(self.i_min < self.i_max) {
            return Err(Error::Config("env.i_min must be below env.i_max".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config("env.lambda must be non-negative".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("env.gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Initial-value scale for training batches, `σ_min / (2 κ_min)`.
    pub fn sigma_inv(&self) -> f64 {
        self.sigma.min_level() / (2.0 * self.kappa.min_level())
    }

    /// Widest stationary standard deviation over all regime combinations.
    pub fn stationary_std(&self) -> f64 {
        self.sigma.max_level() / (2.0 * self.kappa.min_level()).sqrt()
    }

    /// Range the signal essentially never leaves: the θ levels padded by four
    /// stationary standard deviations.
    pub fn signal_bounds(&self) -> (f64, f64) {
        let pad = 4.0 * self.stationary_std();
        (self.theta.min_level() - pad, self.theta.max_level() + pad)
    }
}

/// A validated [`EnvConfig`] with the regime transition matrices precomputed.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    chains: [RegimeChain; 3],
    stationary: [Vec<f64>; 3],
}

impl Environment {
    pub fn new(config: EnvConfig) -> Result<Self> {
        config.validate()?;
        let specs = [&config.theta, &config.kappa, &config.sigma];
        let chains = [
            RegimeChain::new(specs[0], config.dt, 0)?,
            RegimeChain::new(specs[1], config.dt, 0)?,
            RegimeChain::new(specs[2], config.dt, 0)?,
        ];
        let stationary = [
            stationary_distribution(specs[0])?,
            stationary_distribution(specs[1])?,
            stationary_distribution(specs[2])?,
        ];
        Ok(Environment { config, chains, stationary })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn num_theta_regimes(&self) -> usize {
        self.config.theta.len()
    }

    fn simulator(&self, rng: &mut impl RngCore) -> Simulator<'_> {
        Simulator {
            env: self,
            chains: self.chains.clone(),
            chain_rngs: [rng::derive(rng), rng::derive(rng), rng::derive(rng)],
            noise: rng::derive(rng),
        }
    }
}

/// Independent random streams for each chain and for the signal noise.
struct Simulator<'a> {
    env: &'a Environment,
    chains: [RegimeChain; 3],
    chain_rngs: [SimRng; 3],
    noise: SimRng,
}

impl Simulator<'_> {
    fn draw_regimes(&mut self) {
        for c in 0..3 {
            let probs = &self.env.stationary[c];
            let u = rng::uniform(&mut self.chain_rngs[c], 0.0, 1.0);
            let mut acc = 0.0;
            let mut state = probs.len() - 1;
            for (i, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    state = i;
                    break;
                }
            }
            self.chains[c].set_current(state);
        }
    }

    fn params(&self) -> OUParams {
        OUParams {
            theta: self.chains[0].value(),
            kappa: self.chains[1].value(),
            sigma: self.chains[2].value(),
            dt: self.env.config.dt,
        }
    }

    fn regimes(&self) -> [usize; 3] {
        [self.chains[0].current(), self.chains[1].current(), self.chains[2].current()]
    }

    /// Pushes `len` values starting at `s0`; the regimes recorded with a value
    /// govern the step out of it.
    fn run(&mut self, s0: f64, len: usize, mut record: impl FnMut(f64, [usize; 3])) {
        let mut s = s0;
        for t in 0..len {
            record(s, self.regimes());
            if t + 1 < len {
                s = ou_step(s, &self.params(), &mut self.noise);
                for c in 0..3 {
                    self.chains[c].step(&mut self.chain_rngs[c]);
                }
            }
        }
    }
}

/// A simulated signal with the regime in force at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPath {
    pub values: Vec<f64>,
    pub theta_regime: Vec<usize>,
    pub kappa_regime: Vec<usize>,
    pub sigma_regime: Vec<usize>,
    pub dt: f64,
}

impl SignalPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,S,theta_regime,kappa_regime,sigma_regime")?;
        for t in 0..self.values.len() {
            let line = csv_line([
                t.to_string(),
                g12(self.values[t]),
                self.theta_regime[t].to_string(),
                self.kappa_regime[t].to_string(),
                self.sigma_regime[t].to_string(),
            ]);
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

/// Simulates `length` signal values starting from `s0`, with initial regimes
/// drawn from each chain's stationary law.
pub fn simulate_path(env: &Environment, s0: f64, length: usize, rng: &mut impl RngCore) -> Result<SignalPath> {
    if length == 0 {
        return Err(Error::InvalidInput("path length must be at least 1".into()));
    }
    let mut sim = env.simulator(rng);
    sim.draw_regimes();
    let mut path = SignalPath {
        values: Vec::with_capacity(length),
        theta_regime: Vec::with_capacity(length),
        kappa_regime: Vec::with_capacity(length),
        sigma_regime: Vec::with_capacity(length),
        dt: env.config.dt,
    };
    sim.run(s0, length, |s, r| {
        path.values.push(s);
        path.theta_regime.push(r[0]);
        path.kappa_regime.push(r[1]);
        path.sigma_regime.push(r[2]);
    });
    Ok(path)
}

/// `b` training rows. Each row holds the window `S_{t−W}..S_t`, the next
/// value `S_{t+1}` and an inventory; `labels[i]` is the θ regime at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch {
    pub window: usize,
    pub signals: Vec<f64>,
    pub inventories: Vec<f64>,
    pub labels: Vec<usize>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.inventories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inventories.is_empty()
    }

    /// Values per row: `W + 2`.
    pub fn width(&self) -> usize {
        self.window + 2
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let w = self.width();
        &self.signals[i * w..(i + 1) * w]
    }

    /// The observed window `S_{t−W}..S_t`.
    pub fn current(&self, i: usize) -> &[f64] {
        &self.row(i)[..self.window + 1]
    }

    /// The window one step later, `S_{t−W+1}..S_{t+1}`.
    pub fn shifted(&self, i: usize) -> &[f64] {
        &self.row(i)[1..]
    }

    pub fn signal(&self, i: usize) -> f64 {
        self.row(i)[self.window]
    }

    pub fn next_signal(&self, i: usize) -> f64 {
        self.row(i)[self.window + 1]
    }
}

/// A source of training rows for the filters and the agents.
pub trait BatchSampler: Send + Sync {
    fn sample(&self, b: usize, window: usize, rng: &mut SimRng) -> Result<TrainingBatch>;

    fn num_regimes(&self) -> usize;

    fn inventory_bounds(&self) -> (f64, f64);

    /// Range used to scale the signal into `[0, 1]`.
    fn signal_bounds(&self) -> (f64, f64);
}

/// Draws `b` independent rows: each starts at `N(μ_inv, (3σ_inv)²)` with
/// stationary initial regimes and runs `W + 1` steps.
pub fn sample_training_batch(env: &Environment, b: usize, window: usize, rng: &mut impl RngCore) -> Result<TrainingBatch> {
    if b == 0 {
        return Err(Error::InvalidInput("batch size must be at least 1".into()));
    }
    if window == 0 {
        return Err(Error::InvalidInput("window must be at least 1".into()));
    }
    let cfg = &env.config;
    let width = window + 2;
    let mut start_rng = rng::derive(rng);
    let mut inv_rng = rng::derive(rng);
    let mut sim = env.simulator(rng);
    let mut batch = TrainingBatch {
        window,
        signals: Vec::with_capacity(b * width),
        inventories: Vec::with_capacity(b),
        labels: Vec::with_capacity(b),
    };
    let spread = 3.0 * cfg.sigma_inv();
    for _ in 0..b {
        let s0 = cfg.mu_inv + spread * rng::normal(&mut start_rng);
        sim.draw_regimes();
        let mut k = 0;
        sim.run(s0, width, |s, r| {
            batch.signals.push(s);
            if k == window {
                batch.labels.push(r[0]);
            }
            k += 1;
        });
        batch.inventories.push(rng::uniform(&mut inv_rng, cfg.i_min, cfg.i_max));
    }
    Ok(batch)
}

impl BatchSampler for Environment {
    fn sample(&self, b: usize, window: usize, rng: &mut SimRng) -> Result<TrainingBatch> {
        sample_training_batch(self, b, window, rng)
    }

    fn num_regimes(&self) -> usize {
        self.num_theta_regimes()
    }

    fn inventory_bounds(&self) -> (f64, f64) {
        (self.config.i_min, self.config.i_max)
    }

    fn signal_bounds(&self) -> (f64, f64) {
        self.config.signal_bounds()
    }
}

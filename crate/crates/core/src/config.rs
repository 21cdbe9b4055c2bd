//! The JSON run configuration shared by every CLI subcommand.
//!
//! Sections left out take defaults. `env` starts from the preset of
//! `setting`, and `agent` from the defaults of its `pipeline`; any keys given
//! are laid over those defaults. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ddpg::{AgentConfig, MlpShape, Pipeline};
use crate::gru::{GateActivation, GruConfig, HeadKind, TrainConfig};
use crate::markov::{EnvConfig, Setting};
use crate::pairs::{HamiltonConfig, JohansenConfig, LobsterFiles};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub length: usize,
    pub s0: f64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig { length: 2000, s0: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Classifier,
    Regressor,
}

/// First-step model. `window` defaults to the agent's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GruSection {
    pub kind: Option<ModelKind>,
    pub layers: usize,
    pub hidden: usize,
    pub window: Option<usize>,
    pub gate_activation: GateActivation,
    pub head_layers: usize,
    pub head_width: usize,
    pub train: TrainConfig,
}

impl Default for GruSection {
    fn default() -> Self {
        let c = GruConfig::classifier(2, 1);
        GruSection {
            kind: None,
            layers: c.layers,
            hidden: c.hidden,
            window: None,
            gate_activation: c.gate_activation,
            head_layers: c.head_layers,
            head_width: c.head_width,
            train: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub signal_min: f64,
    pub signal_max: f64,
    pub signal_points: usize,
    pub inventory_points: usize,
    /// Fixed model features per context (prob: posterior vectors). When
    /// empty, windows held flat at `context_levels` are used instead.
    pub extras: Vec<Vec<f64>>,
    pub context_levels: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            signal_min: 0.8,
            signal_max: 1.2,
            signal_points: 21,
            inventory_points: 21,
            extras: Vec::new(),
            context_levels: vec![0.9, 1.0, 1.1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Test episodes M.
    pub episodes: usize,
    /// Trades per episode n.
    pub steps: usize,
    /// Agent directory; defaults to the `train-agent` output.
    pub bundle: Option<PathBuf>,
    /// First episode seed; defaults to the run seed.
    pub seed: Option<u64>,
    pub grid: GridConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { episodes: 500, steps: 2000, bundle: None, seed: None, grid: GridConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarInput {
    /// Fit the recursion to price levels.
    Levels,
    /// Fit it to first differences.
    Differences,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairsStrategy {
    Prob,
    Hid,
    Zscore,
    Flat,
}

impl PairsStrategy {
    pub fn name(self) -> &'static str {
        match self {
            PairsStrategy::Prob => "prob",
            PairsStrategy::Hid => "hid",
            PairsStrategy::Zscore => "zscore",
            PairsStrategy::Flat => "flat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairsConfig {
    pub assets: Option<[LobsterFiles; 2]>,
    pub grid_seconds: f64,
    /// Last timestamp (seconds) of the training span; defaults to 80% of the data.
    pub train_end_timestamp: Option<f64>,
    pub var_input: VarInput,
    pub dt: f64,
    pub johansen: JohansenConfig,
    pub hamilton: HamiltonConfig,
    pub zscore_window: usize,
    pub z_cap: f64,
    pub lambda: f64,
    pub i_max: f64,
    pub gamma: f64,
    /// Look-back W of the agents.
    pub w: usize,
    pub strategies: Vec<PairsStrategy>,
    /// One trained agent per seed; rewards are summarised across them.
    pub agent_seeds: Vec<u64>,
    pub filter: TrainConfig,
    pub agent: Value,
}

impl Default for PairsConfig {
    fn default() -> Self {
        PairsConfig {
            assets: None,
            grid_seconds: 1.0,
            train_end_timestamp: None,
            var_input: VarInput::Levels,
            dt: 1.0,
            johansen: JohansenConfig::default(),
            hamilton: HamiltonConfig::default(),
            zscore_window: 100,
            z_cap: 3.0,
            lambda: 0.05,
            i_max: 10.0,
            gamma: 0.999,
            w: 100,
            strategies: vec![PairsStrategy::Prob, PairsStrategy::Hid, PairsStrategy::Zscore],
            agent_seeds: vec![1, 2, 3],
            filter: TrainConfig::default(),
            agent: Value::Object(Default::default()),
        }
    }
}

impl PairsConfig {
    /// Agent settings for the historical series: six layers of 64 units,
    /// batches of 64, 10,000 iterations, overlaid with `pairs.agent`.
    pub fn agent_config(&self, pipeline: Pipeline) -> Result<AgentConfig> {
        let mut base = AgentConfig::for_pipeline(pipeline, Setting::ThetaKappaSigma);
        base.window = self.w;
        if pipeline == Pipeline::Prob {
            base.actor = MlpShape { layers: 6, width: 64 };
            base.critic = base.actor;
        }
        base.batch = 64;
        let mut cfg: AgentConfig = overlay(base, &self.agent, "pairs.agent")?;
        cfg.pipeline = pipeline;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub setting: Setting,
    pub env: EnvConfig,
    pub simulate: SimulateConfig,
    pub gru: GruSection,
    pub agent: AgentConfig,
    pub eval: EvalConfig,
    pub pairs: PairsConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    output_dir: Option<PathBuf>,
    setting: Option<Setting>,
    env: Option<Value>,
    simulate: Option<SimulateConfig>,
    gru: Option<GruSection>,
    agent: Option<Value>,
    eval: Option<EvalConfig>,
    pairs: Option<PairsConfig>,
}

fn merge(base: &mut Value, over: &Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (slot, v) => *slot = v.clone(),
    }
}

/// Lays the keys of `over` on top of `base`, then reads the result back.
fn overlay<T: Serialize + DeserializeOwned>(base: T, over: &Value, section: &str) -> Result<T> {
    if !over.is_object() {
        return Err(Error::Config(format!("{section}: expected a JSON object")));
    }
    let mut value = serde_json::to_value(base)?;
    merge(&mut value, over);
    serde_json::from_value(value).map_err(|e| Error::Config(format!("{section}: {e}")))
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::from_value(&Value::Object(Default::default())).expect("defaults are valid")
    }
}

impl RunConfig {
    pub fn from_value(value: &Value) -> Result<Self> {
        let raw: RawConfig = serde_json::from_value(value.clone()).map_err(|e| Error::Config(e.to_string()))?;
        let setting = raw.setting.unwrap_or(Setting::Theta);
        let env = match &raw.env {
            Some(v) => overlay(EnvConfig::preset(setting), v, "env")?,
            None => EnvConfig::preset(setting),
        };
        let pipeline = match raw.agent.as_ref().and_then(|a| a.get("pipeline")) {
            Some(p) => serde_json::from_value(p.clone()).map_err(|e| Error::Config(format!("agent.pipeline: {e}")))?,
            None => Pipeline::Prob,
        };
        let agent_defaults = AgentConfig::for_pipeline(pipeline, setting);
        let agent = match &raw.agent {
            Some(v) => overlay(agent_defaults, v, "agent")?,
            None => agent_defaults,
        };
        let cfg = RunConfig {
            seed: raw.seed.unwrap_or(0),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            setting,
            env,
            simulate: raw.simulate.unwrap_or_default(),
            gru: raw.gru.unwrap_or_default(),
            agent,
            eval: raw.eval.unwrap_or_default(),
            pairs: raw.pairs.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_value(&value)
    }

    /// Reads `path`. Input files named in the configuration are resolved
    /// against the configuration's directory and must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let prefix = |e: Error| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text).map_err(prefix)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(assets) = cfg.pairs.assets.as_mut() {
            for a in assets.iter_mut() {
                a.message = base.join(&a.message);
                a.orderbook = base.join(&a.orderbook);
            }
            cfg.check_pairs_inputs().map_err(prefix)?;
        }
        if let Some(bundle) = cfg.eval.bundle.as_mut() {
            *bundle = base.join(&*bundle);
            if !bundle.join("agent.json").is_file() {
                return Err(prefix(Error::Config(format!("eval.bundle: no agent.json in {}", bundle.display()))));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        self.gru.train.validate()?;
        self.gru_config()?.validate()?;
        if self.simulate.length == 0 {
            return Err(Error::Config("simulate.length must be positive".into()));
        }
        if self.eval.episodes == 0 || self.eval.steps == 0 {
            return Err(Error::Config("eval.episodes and eval.steps must be positive".into()));
        }
        let p = &self.pairs;
        if !(p.grid_seconds > 0.0 && p.dt > 0.0 && p.z_cap > 0.0 && p.i_max > 0.0 && p.lambda >= 0.0) {
            return Err(Error::Config("pairs: grid_seconds, dt, z_cap, i_max must be positive and lambda non-negative".into()));
        }
        if p.zscore_window < 2 || p.w == 0 {
            return Err(Error::Config("pairs: zscore_window must be at least 2 and w positive".into()));
        }
        if !(p.gamma > 0.0 && p.gamma < 1.0) {
            return Err(Error::Config("pairs.gamma must lie in (0, 1)".into()));
        }
        p.filter.validate()?;
        p.agent_config(Pipeline::Prob)?;
        Ok(())
    }

    /// Fails unless every input file named by the pairs section exists.
    pub fn check_pairs_inputs(&self) -> Result<&[LobsterFiles; 2]> {
        let assets = self
            .pairs
            .assets
            .as_ref()
            .ok_or_else(|| Error::Config("pairs.assets: two assets with message and orderbook files are required".into()))?;
        for a in assets {
            for (key, path) in [("message", &a.message), ("orderbook", &a.orderbook)] {
                if !path.is_file() {
                    return Err(Error::Config(format!("pairs.assets[{}].{key}: {} does not exist", a.name, path.display())));
                }
            }
        }
        Ok(assets)
    }

    pub fn model_kind(&self) -> ModelKind {
        self.gru.kind.unwrap_or(match self.agent.pipeline {
            Pipeline::Reg => ModelKind::Regressor,
            _ => ModelKind::Classifier,
        })
    }

    /// The first-step architecture, with inputs centred on `μ_inv` and scaled
    /// by the widest stationary standard deviation.
    pub fn gru_config(&self) -> Result<GruConfig> {
        let window = self.gru.window.unwrap_or(self.agent.window);
        let head = match self.model_kind() {
            ModelKind::Classifier => HeadKind::Classifier { classes: self.env.theta.len() },
            ModelKind::Regressor => HeadKind::Regressor,
        };
        let cfg = GruConfig {
            layers: self.gru.layers,
            hidden: self.gru.hidden,
            window,
            gate_activation: self.gru.gate_activation,
            head,
            head_layers: self.gru.head_layers,
            head_width: self.gru.head_width,
            input_center: 0.0,
            input_scale: 1.0,
        }
        .with_normalisation(self.env.mu_inv, self.env.stationary_std());
        Ok(cfg)
    }

    /// Canonical JSON of the fully resolved configuration.
    pub fn resolved_json(&self) -> Result<String> {
        let value = serde_json::json!({
            "seed": self.seed,
            "output_dir": self.output_dir,
            "setting": self.setting,
            "env": self.env,
            "simulate": self.simulate,
            "gru": self.gru,
            "agent": self.agent,
            "eval": self.eval,
            "pairs": self.pairs,
        });
        Ok(serde_json::to_string_pretty(&value)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_takes_table_defaults() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.env, EnvConfig::preset(Setting::Theta));
        assert_eq!(c.agent.pipeline, Pipeline::Prob);
        assert_eq!(c.agent.window, 10);
        assert_eq!(c.eval.episodes, 500);
        assert_eq!(c.pairs.w, 100);
    }

    #[test]
    fn sections_overlay_their_defaults() {
        let c = RunConfig::from_json(r#"{"setting": "theta_kappa", "env": {"lambda": 0.1}, "agent": {"pipeline": "reg", "iterations": 5}}"#).unwrap();
        assert_eq!(c.env.lambda, 0.1);
        assert_eq!(c.env.kappa.levels, vec![3.0, 7.0]);
        assert_eq!(c.agent.window, 50);
        assert_eq!(c.agent.iterations, 5);
        assert_eq!(c.model_kind(), ModelKind::Regressor);
        assert_eq!(c.gru_config().unwrap().window, 50);
    }

    #[test]
    fn unknown_keys_name_their_section() {
        let err = RunConfig::from_json(r#"{"agent": {"itterations": 5}}"#).unwrap_err().to_string();
        assert!(err.contains("agent") && err.contains("itterations"), "{err}");
        let err = RunConfig::from_json(r#"{"bogus": 1}"#).unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
        let err = RunConfig::from_json(r#"{"env": {"gamma": 2.0}}"#).unwrap_err().to_string();
        assert!(err.contains("env.gamma"), "{err}");
    }
}

use std::path::Path;

use log::{debug, info};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::explore::ExploreSchedule;
use super::features::{build_features, feature_width, FeatureBlock, FeatureScaler, Pipeline};
use super::nets::{actor_forward, actor_pre_activation, critic_forward, init_mlp, soft_update, MlpShape, ACTOR, CRITIC};
use super::reward::compute_reward;
use crate::autodiff::{AdamW, AdamWConfig, Graph, ParamStore, Tensor, Var};
use crate::gru::{train_step, GruConfig, GruStack};
use crate::markov::{BatchSampler, EnvConfig, Setting, TrainingBatch};
use crate::rng::{self, SimRng};
use crate::{Error, Result};

pub const PRE_ACTIVATION_PENALTY: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub pipeline: Pipeline,
    /// Look-back W of the feature model.
    pub window: usize,
    pub actor: MlpShape,
    pub critic: MlpShape,
    pub iterations: usize,
    pub batch: usize,
    pub lr: f64,
    /// Critic steps per iteration (ℓ).
    pub critic_repeats: usize,
    /// Actor steps per iteration (l).
    pub actor_repeats: usize,
    /// Soft-update weight of the target critic.
    pub tau: f64,
    pub explore: ExploreSchedule,
    /// GRU depth of the hid encoder.
    pub hid_layers: usize,
    /// Feed the hid encoder's scalar projection instead of its hidden state.
    pub hid_scalar: bool,
    /// Weight of `mean(z²)` added to the actor loss, `z` being the actor
    /// output before `tanh`. Keeps the squashing out of its flat tails.
    pub pre_activation_penalty: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig::for_pipeline(Pipeline::Prob, Setting::Theta)
    }
}

impl AgentConfig {
    pub fn for_pipeline(pipeline: Pipeline, setting: Setting) -> Self {
        let (window, net) = match pipeline {
            Pipeline::Hid => (10, MlpShape { layers: 4, width: 20 }),
            Pipeline::Prob if setting == Setting::ThetaKappaSigma => (20, MlpShape { layers: 5, width: 64 }),
            Pipeline::Prob => (10, MlpShape { layers: 5, width: 64 }),
            Pipeline::Reg => (50, MlpShape { layers: 5, width: 64 }),
        };
        AgentConfig {
            pipeline,
            window,
            actor: net,
            critic: net,
            iterations: 10_000,
            batch: 512,
            lr: 1e-3,
            critic_repeats: 1,
            actor_repeats: 5,
            tau: 0.001,
            explore: ExploreSchedule::default(),
            hid_layers: if setting == Setting::ThetaKappaSigma { 2 } else { 1 },
            hid_scalar: false,
            pre_activation_penalty: PRE_ACTIVATION_PENALTY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.explore.validate()?;
        if self.window == 0 || self.iterations == 0 || self.batch == 0 {
            return Err(Error::Config("agent: window, iterations and batch must be positive".into()));
        }
        if self.critic_repeats == 0 || self.actor_repeats == 0 {
            return Err(Error::Config("agent: critic_repeats and actor_repeats must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("agent: need lr > 0 and 0 < tau <= 1".into()));
        }
        if !(self.pre_activation_penalty >= 0.0) {
            return Err(Error::Config("agent: pre_activation_penalty must be non-negative".into()));
        }
        if self.hid_layers == 0 {
            return Err(Error::Config("agent: hid_layers must be positive".into()));
        }
        Ok(())
    }
}

/// Actor, critic and target critic with everything needed to act and resume.
#[derive(Debug, Clone)]
pub struct AgentBundle {
    pub config: AgentConfig,
    pub env: EnvConfig,
    pub scaler: FeatureScaler,
    pub actor: ParamStore,
    pub critic: ParamStore,
    pub target: ParamStore,
    pub model: Option<GruStack>,
    pub iteration: u64,
    pub actor_steps: u64,
    pub critic_steps: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Sidecar {
    config: AgentConfig,
    env: EnvConfig,
    scaler: FeatureScaler,
    model: Option<GruConfig>,
    iteration: u64,
    actor_steps: u64,
    critic_steps: u64,
}

impl AgentBundle {
    /// Fresh networks. Prob and reg agents take their pretrained model; hid
    /// agents build their own encoder when `model` is `None`.
    pub fn new(
        config: AgentConfig,
        env: EnvConfig,
        scaler: FeatureScaler,
        model: Option<GruStack>,
        rng: &mut impl RngCore,
    ) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        scaler.validate()?;
        let model = match (config.pipeline, model) {
            (Pipeline::Hid, None) => {
                let gc = GruConfig::feature(config.window, config.hid_layers, config.hid_scalar)
                    .with_normalisation(env.mu_inv, env.stationary_std());
                Some(GruStack::new(gc, rng)?)
            }
            (p, Some(m)) => {
                if !p.accepts(&m.config().head) {
                    return Err(Error::Usage(format!(
                        "{} agent cannot use a {} model",
                        p.name(),
                        m.config().head.name()
                    )));
                }
                if m.config().window != config.window {
                    return Err(Error::Config(format!(
                        "agent window {} differs from model window {}",
                        config.window,
                        m.config().window
                    )));
                }
                Some(m)
            }
            (p, None) => return Err(Error::Usage(format!("{} agent needs a pretrained model", p.name()))),
        };
        let width = feature_width(model.as_ref().expect("model set above"));
        let actor = init_mlp(ACTOR, width, config.actor, rng)?;
        let critic = init_mlp(CRITIC, width + 1, config.critic, rng)?;
        let target = critic.clone();
        Ok(AgentBundle {
            config,
            env,
            scaler,
            actor,
            critic,
            target,
            model,
            iteration: 0,
            actor_steps: 0,
            critic_steps: 0,
        })
    }

    pub fn pipeline(&self) -> Pipeline {
        self.config.pipeline
    }

    pub fn inventory_bounds(&self) -> (f64, f64) {
        (self.env.i_min, self.env.i_max)
    }

    pub fn feature_width(&self) -> usize {
        self.model.as_ref().map(feature_width).unwrap_or(2)
    }

    pub fn features(&self, windows: &[&[f64]], inventories: &[f64]) -> Result<FeatureBlock> {
        build_features(self.config.pipeline, self.model.as_ref(), &self.scaler, windows, inventories)
    }

    /// Deterministic target inventories for each feature row, clamped to the bounds.
    pub fn act(&self, features: &Tensor) -> Result<Vec<f64>> {
        let mut g = Graph::untaped();
        let x = g.constant(features.clone())?;
        let a = actor_forward(&mut g, &self.actor, x, self.env.i_max, true)?;
        let (lo, hi) = self.inventory_bounds();
        Ok(g.value(a).data().iter().map(|v| v.clamp(lo, hi)).collect())
    }

    /// Sets every actor weight to zero so the policy always targets a flat position.
    pub fn zero_actor(&mut self) {
        self.actor.map_values(|_, t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut store = ParamStore::new();
        store.absorb("a", &self.actor)?;
        store.absorb("c", &self.critic)?;
        store.absorb("t", &self.target)?;
        if let Some(m) = &self.model {
            store.absorb("m", m.params())?;
        }
        store.save(&dir.join("agent.rtps"))?;
        let sidecar = Sidecar {
            config: self.config.clone(),
            env: self.env.clone(),
            scaler: self.scaler,
            model: self.model.as_ref().map(|m| m.config().clone()),
            iteration: self.iteration,
            actor_steps: self.actor_steps,
            critic_steps: self.critic_steps,
        };
        std::fs::write(dir.join("agent.json"), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(dir.join("agent.json"))?)?;
        let store = ParamStore::load(&dir.join("agent.rtps"))?;
        let model = match sidecar.model {
            Some(cfg) => Some(GruStack::from_parts(cfg, store.extract("m"))?),
            None => None,
        };
        let bundle = AgentBundle {
            config: sidecar.config,
            env: sidecar.env,
            scaler: sidecar.scaler,
            actor: store.extract("a"),
            critic: store.extract("c"),
            target: store.extract("t"),
            model,
            iteration: sidecar.iteration,
            actor_steps: sidecar.actor_steps,
            critic_steps: sidecar.critic_steps,
        };
        bundle.config.validate()?;
        bundle.env.validate()?;
        Ok(bundle)
    }
}

/// One batch of experience: states, the executed inventories, the rewards and the next states.
#[derive(Debug, Clone)]
pub struct Transition {
    pub features: Tensor,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub next_features: Tensor,
}

/// `y = r + γ Q_tgt(G', π(G'))` with everything frozen.
pub fn critic_targets(bundle: &AgentBundle, tr: &Transition) -> Result<Tensor> {
    let mut g = Graph::untaped();
    let next = g.constant(tr.next_features.clone())?;
    let a = actor_forward(&mut g, &bundle.actor, next, bundle.env.i_max, true)?;
    let q = critic_forward(&mut g, &bundle.target, next, a, bundle.inventory_bounds(), true)?;
    let gamma = bundle.env.gamma;
    let y: Vec<f64> = g.value(q).data().iter().zip(&tr.rewards).map(|(q, r)| r + gamma * q).collect();
    Ok(Tensor::column(&y))
}

/// `L1 = mean((Q(G, I) − y)²)` with `critic` trainable.
pub fn critic_loss(
    g: &mut Graph,
    critic: &ParamStore,
    tr: &Transition,
    targets: &Tensor,
    bounds: (f64, f64),
) -> Result<Var> {
    let x = g.constant(tr.features.clone())?;
    let a = g.constant(Tensor::column(&tr.actions))?;
    let q = critic_forward(g, critic, x, a, bounds, false)?;
    let y = g.constant(targets.clone())?;
    g.mse(q, y)
}

/// `L2 = −mean(Q(G, π(G))) + c·mean(z²)` with `actor` trainable, the critic
/// supplied by `q` and `z` the actor's pre-`tanh` output.
pub fn actor_loss_with(
    g: &mut Graph,
    actor: &ParamStore,
    features: &Tensor,
    i_max: f64,
    penalty: f64,
    q: impl FnOnce(&mut Graph, Var, Var) -> Result<Var>,
) -> Result<Var> {
    let x = g.constant(features.clone())?;
    let z = actor_pre_activation(g, actor, x, false)?;
    let t = g.tanh(z)?;
    let a = g.scale(t, i_max)?;
    let value = q(g, x, a)?;
    let m = g.mean(value)?;
    let loss = g.scale(m, -1.0)?;
    if penalty == 0.0 {
        return Ok(loss);
    }
    let sq = g.mul(z, z)?;
    let reg = g.mean(sq)?;
    let reg = g.scale(reg, penalty)?;
    g.add(loss, reg)
}

pub fn actor_loss(g: &mut Graph, bundle: &AgentBundle, features: &Tensor) -> Result<Var> {
    let bounds = bundle.inventory_bounds();
    let penalty = bundle.config.pre_activation_penalty;
    actor_loss_with(g, &bundle.actor, features, bundle.env.i_max, penalty, |g, x, a| {
        critic_forward(g, &bundle.critic, x, a, bounds, true)
    })
}

/// One critic step followed by the soft target update. Returns the loss.
pub fn critic_update(bundle: &mut AgentBundle, opt: &mut AdamW, tr: &Transition) -> Result<f64> {
    let targets = critic_targets(bundle, tr)?;
    let mut g = Graph::new();
    let loss = critic_loss(&mut g, &bundle.critic, tr, &targets, bundle.inventory_bounds())?;
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    opt.step(&mut bundle.critic, &grads)?;
    soft_update(&mut bundle.target, &bundle.critic, bundle.config.tau)?;
    bundle.critic_steps += 1;
    Ok(value)
}

/// One actor step against the frozen critic. Returns the loss.
pub fn actor_update(bundle: &mut AgentBundle, opt: &mut AdamW, features: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let loss = actor_loss(&mut g, bundle, features)?;
    let value = g.value(loss).item()?;
    let grads = g.backward(loss)?;
    opt.step(&mut bundle.actor, &grads)?;
    bundle.actor_steps += 1;
    Ok(value)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingDiagnostics {
    pub critic_losses: Vec<f64>,
    pub actor_losses: Vec<f64>,
    pub model_losses: Vec<f64>,
    pub epsilons: Vec<f64>,
    /// Mean |π(G)| over each iteration's batch before the updates.
    pub policy_magnitude: Vec<f64>,
}

fn windows(batch: &TrainingBatch, shifted: bool) -> Vec<&[f64]> {
    (0..batch.len())
        .map(|i| if shifted { batch.shifted(i) } else { batch.current(i) })
        .collect()
}

/// Runs `config.iterations` DDPG iterations on fresh batches from `sampler`.
///
/// Each iteration trains the hid encoder (if any) on the batch, explores
/// around the current policy for the critic steps and then improves the
/// actor against the critic.
pub fn train_agent(bundle: &mut AgentBundle, sampler: &dyn BatchSampler, rng: &mut SimRng) -> Result<TrainingDiagnostics> {
    let cfg = bundle.config.clone();
    let n = cfg.iterations as u64;
    let mut critic_opt = AdamW::new(AdamWConfig::quartered(cfg.lr, n * cfg.critic_repeats as u64));
    let mut actor_opt = AdamW::new(AdamWConfig::quartered(cfg.lr, n * cfg.actor_repeats as u64));
    let mut model_opt = AdamW::new(AdamWConfig::quartered(cfg.lr, n));
    let mut noise_rng = rng::derive(rng);
    let mut diag = TrainingDiagnostics::default();
    let (lo, hi) = bundle.inventory_bounds();
    let lambda = bundle.env.lambda;

    for _ in 0..cfg.iterations {
        bundle.iteration += 1;
        let m = bundle.iteration;
        let batch = sampler.sample(cfg.batch, cfg.window, rng)?;
        if cfg.pipeline == Pipeline::Hid {
            let model = bundle.model.as_mut().expect("hid agents own an encoder");
            diag.model_losses.push(train_step(model, &mut model_opt, &batch)?);
        }
        let current = bundle.features(&windows(&batch, false), &batch.inventories)?;
        let next = bundle.features(&windows(&batch, true), &batch.inventories)?;
        let eps = cfg.explore.epsilon(m);
        diag.epsilons.push(eps);

        for rep in 0..cfg.critic_repeats {
            let policy = bundle.act(current.tensor())?;
            if rep == 0 {
                diag.policy_magnitude.push(policy.iter().map(|p| p.abs()).sum::<f64>() / policy.len() as f64);
            }
            let sd = cfg.explore.scale * 0.5 * (hi - lo) * eps.sqrt();
            let actions: Vec<f64> = policy
                .iter()
                .map(|p| (p + sd * rng::normal(&mut noise_rng)).clamp(lo, hi))
                .collect();
            let rewards: Vec<f64> = (0..batch.len())
                .map(|i| {
                    let q = actions[i] - batch.inventories[i];
                    compute_reward(actions[i], batch.signal(i), batch.next_signal(i), q, lambda)
                })
                .collect();
            let tr = Transition {
                features: current.tensor().clone(),
                next_features: next.with_inventories(&bundle.scaler, &actions)?,
                actions,
                rewards,
            };
            diag.critic_losses.push(critic_update(bundle, &mut critic_opt, &tr)?);
        }
        for _ in 0..cfg.actor_repeats {
            diag.actor_losses.push(actor_update(bundle, &mut actor_opt, current.tensor())?);
        }
        if m % 100 == 0 {
            debug!(
                "{} iteration {m}: critic {:.6} actor {:.6} |pi| {:.3} eps {eps:.4}",
                cfg.pipeline.name(),
                diag.critic_losses.last().unwrap_or(&f64::NAN),
                diag.actor_losses.last().unwrap_or(&f64::NAN),
                diag.policy_magnitude.last().unwrap_or(&f64::NAN)
            );
        }
    }
    info!("{} agent trained for {} iterations", cfg.pipeline.name(), cfg.iterations);
    Ok(diag)
}

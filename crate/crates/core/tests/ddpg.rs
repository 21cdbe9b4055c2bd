use proptest::prelude::*;
use rand::Rng;
use regime_trader::autodiff::{AdamW, AdamWConfig, Graph, ParamStore, Tensor};
use regime_trader::ddpg::{
    actor_forward, actor_loss_with, build_features, compute_reward, critic_forward, critic_loss, critic_update,
    init_mlp, soft_update, train_agent, AgentBundle, AgentConfig, FeatureScaler, MlpShape, Pipeline, Transition,
    ACTOR, CRITIC,
};
use regime_trader::gru::{GruConfig, GruStack};
use regime_trader::markov::{EnvConfig, Environment, Setting};
use regime_trader::rng::{self, SimRng};

const SHAPE: MlpShape = MlpShape { layers: 2, width: 16 };
const I_MAX: f64 = 10.0;

fn random_features(rows: usize, cols: usize, rng: &mut SimRng) -> Tensor {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap()
}

fn actor_output(actor: &ParamStore, features: &Tensor) -> Vec<f64> {
    let mut g = Graph::untaped();
    let x = g.constant(features.clone()).unwrap();
    let a = actor_forward(&mut g, actor, x, I_MAX, true).unwrap();
    g.value(a).data().to_vec()
}

#[test]
fn reward_examples() {
    assert!((compute_reward(10.0, 1.0, 1.01, 0.0, 0.05) - 0.10).abs() < 1e-12);
    assert!(compute_reward(5.0, 1.0, 1.02, 2.0, 0.05).abs() < 1e-12);
    assert_eq!(compute_reward(0.0, 1.0, 7.0, 0.0, 0.0), 0.0);
}

#[test]
fn feature_widths_per_pipeline() {
    let mut r = rng::seeded(1);
    let scaler = FeatureScaler { signal: (0.8, 1.2), inventory: (-10.0, 10.0) };
    let window = [1.0; 11];
    let cases = [
        (Pipeline::Prob, GruConfig::classifier(3, 10), 5),
        (Pipeline::Reg, GruConfig::regressor(10), 3),
        (Pipeline::Hid, GruConfig::feature(10, 1, false), 12),
    ];
    for (pipeline, config, width) in cases {
        let model = GruStack::new(GruConfig { layers: 1, ..config }, &mut r).unwrap();
        let block = build_features(pipeline, Some(&model), &scaler, &[&window], &[0.0]).unwrap();
        assert_eq!(block.width(), width, "{pipeline:?}");
    }
}

#[test]
fn zero_and_saturated_actors() {
    let mut r = rng::seeded(2);
    let mut actor = init_mlp(ACTOR, 3, SHAPE, &mut r).unwrap();
    let features = random_features(8, 3, &mut r);
    actor.map_values(|_, t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
    assert!(actor_output(&actor, &features).iter().all(|&a| a == 0.0));
    actor.get_mut("actor/out/bias").unwrap().data_mut()[0] = 50.0;
    assert!(actor_output(&actor, &features).iter().all(|&a| (a - I_MAX).abs() < 1e-12));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn actor_output_is_bounded(seed in 0u64..10_000, scale in 0.1f64..100.0) {
        let mut r = rng::seeded(seed);
        let mut actor = init_mlp(ACTOR, 3, SHAPE, &mut r).unwrap();
        actor.map_values(|_, t| t.data_mut().iter_mut().for_each(|v| *v *= scale));
        let features = Tensor::matrix(300, 3, (0..900).map(|_| r.random_range(-50.0..50.0)).collect()).unwrap();
        for a in actor_output(&actor, &features) {
            prop_assert!(a.abs() <= I_MAX);
        }
    }

    #[test]
    fn soft_update_contracts_towards_the_source(seed in 0u64..10_000, tau in 0.0001f64..1.0) {
        let mut r = rng::seeded(seed);
        let source = init_mlp(CRITIC, 4, SHAPE, &mut r).unwrap();
        let mut target = init_mlp(CRITIC, 4, SHAPE, &mut r).unwrap();
        let before = target.clone();
        soft_update(&mut target, &source, tau).unwrap();
        for (name, p) in target.iter() {
            let (s, b) = (source.get(name).unwrap(), before.get(name).unwrap());
            for i in 0..p.value.len() {
                let gap = (1.0 - tau) * (b.data()[i] - s.data()[i]);
                prop_assert!((p.value.data()[i] - s.data()[i] - gap).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn soft_update_of_ones_into_zeros() {
    let mut r = rng::seeded(3);
    let mut source = init_mlp(CRITIC, 2, SHAPE, &mut r).unwrap();
    source.map_values(|_, t| t.data_mut().iter_mut().for_each(|v| *v = 1.0));
    let mut target = source.clone();
    target.map_values(|_, t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
    soft_update(&mut target, &source, 0.001).unwrap();
    for (_, p) in target.iter() {
        assert!(p.value.data().iter().all(|&v| (v - 0.001).abs() < 1e-15));
    }
}

/// Trains an actor against a hand-written critic `q`.
fn train_actor_against(
    q: impl Fn(&mut Graph, regime_trader::autodiff::Var) -> regime_trader::Result<regime_trader::autodiff::Var>,
    steps: usize,
    penalty: f64,
    seed: u64,
) -> (ParamStore, ParamStore, Tensor) {
    let mut r = rng::seeded(seed);
    let mut actor = init_mlp(ACTOR, 3, SHAPE, &mut r).unwrap();
    let start = actor.clone();
    let features = random_features(64, 3, &mut r);
    let mut opt = AdamW::new(AdamWConfig { lr: 1e-2, weight_decay: 0.0, ..AdamWConfig::default() });
    for _ in 0..steps {
        let mut g = Graph::new();
        let loss = actor_loss_with(&mut g, &actor, &features, I_MAX, penalty, |g, _, a| q(g, a)).unwrap();
        let grads = g.backward(loss).unwrap();
        opt.step(&mut actor, &grads).unwrap();
    }
    (start, actor, features)
}

#[test]
fn actor_climbs_a_quadratic_bowl() {
    let bowl = |g: &mut Graph, a| {
        let d = g.affine(a, 1.0, -3.0)?;
        let sq = g.mul(d, d)?;
        g.scale(sq, -1.0)
    };
    let (_, actor, features) = train_actor_against(bowl, 500, 0.0, 4);
    let out = actor_output(&actor, &features);
    assert!(out.iter().all(|a| (a - 3.0).abs() < 0.1), "{:?}", &out[..5]);
}

#[test]
fn constant_critic_leaves_the_actor_unchanged() {
    let constant = |g: &mut Graph, a| g.affine(a, 0.0, 2.5);
    let (start, actor, _) = train_actor_against(constant, 20, 0.0, 5);
    assert_eq!(start, actor);
}

fn transition(rows: usize, rng: &mut SimRng) -> Transition {
    Transition {
        features: random_features(rows, 3, rng),
        actions: (0..rows).map(|_| rng.random_range(-I_MAX..I_MAX)).collect(),
        rewards: (0..rows).map(|_| rng.random_range(-1.0..1.0)).collect(),
        next_features: random_features(rows, 3, rng),
    }
}

fn tiny_bundle(gamma: f64, seed: u64) -> AgentBundle {
    let mut r = rng::seeded(seed);
    let env = EnvConfig { gamma, ..EnvConfig::default() };
    let config = AgentConfig { actor: SHAPE, critic: SHAPE, ..AgentConfig::for_pipeline(Pipeline::Prob, Setting::Theta) };
    let model = GruStack::new(GruConfig { layers: 1, hidden: 4, head_layers: 1, head_width: 8, ..GruConfig::classifier(3, 10) }, &mut r).unwrap();
    let scaler = FeatureScaler { signal: env.signal_bounds(), inventory: (env.i_min, env.i_max) };
    AgentBundle::new(config, env, scaler, Some(model), &mut r).unwrap()
}

#[test]
fn zero_critic_against_reward_targets_scores_mean_squared_reward() {
    let mut r = rng::seeded(6);
    let mut b = tiny_bundle(0.9, 6);
    b.critic.map_values(|_, t| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
    let mut tr = transition(32, &mut r);
    tr.features = random_features(32, 5, &mut r);
    tr.next_features = random_features(32, 5, &mut r);
    let targets = Tensor::column(&tr.rewards);
    let mut g = Graph::new();
    let loss = critic_loss(&mut g, &b.critic, &tr, &targets, b.inventory_bounds()).unwrap();
    let expected = tr.rewards.iter().map(|r| r * r).sum::<f64>() / 32.0;
    assert!((g.value(loss).item().unwrap() - expected).abs() < 1e-12);
}

#[test]
fn critic_regression_decreases_monotonically() {
    let mut r = rng::seeded(7);
    // A negligible discount keeps the regression targets essentially fixed.
    let mut b = tiny_bundle(1e-12, 7);
    let mut tr = transition(128, &mut r);
    tr.features = random_features(128, 5, &mut r);
    tr.next_features = random_features(128, 5, &mut r);
    let mut opt = AdamW::new(AdamWConfig::default());
    let losses: Vec<f64> = (0..50).map(|_| critic_update(&mut b, &mut opt, &tr).unwrap()).collect();
    for w in losses.windows(2) {
        assert!(w[1] < w[0], "{losses:?}");
    }
}

#[test]
fn critic_only_sees_actions_through_the_bounds() {
    let mut r = rng::seeded(8);
    let critic = init_mlp(CRITIC, 4, SHAPE, &mut r).unwrap();
    let features = random_features(1, 3, &mut r);
    let q = |bounds: (f64, f64), a: f64| {
        let mut g = Graph::untaped();
        let x = g.constant(features.clone()).unwrap();
        let a = g.constant(Tensor::column(&[a])).unwrap();
        let v = critic_forward(&mut g, &critic, x, a, bounds, true).unwrap();
        g.value(v).item().unwrap()
    };
    assert_eq!(q((-10.0, 10.0), 5.0), q((-1.0, 1.0), 0.5));
}

#[test]
fn one_iteration_smoke_run_for_every_pipeline() {
    let env = Environment::new(EnvConfig::default()).unwrap();
    for pipeline in [Pipeline::Hid, Pipeline::Prob, Pipeline::Reg] {
        let mut r = rng::seeded(9);
        let config = AgentConfig { iterations: 1, batch: 2, ..AgentConfig::for_pipeline(pipeline, Setting::Theta) };
        let model = match pipeline {
            Pipeline::Hid => None,
            Pipeline::Prob => Some(GruStack::new(GruConfig::classifier(3, config.window), &mut r).unwrap()),
            Pipeline::Reg => Some(GruStack::new(GruConfig::regressor(config.window), &mut r).unwrap()),
        };
        let cfg = env.config();
        let scaler = FeatureScaler { signal: cfg.signal_bounds(), inventory: (cfg.i_min, cfg.i_max) };
        let mut bundle = AgentBundle::new(config, cfg.clone(), scaler, model, &mut r).unwrap();
        let d = train_agent(&mut bundle, &env, &mut r).unwrap();
        assert!(d.critic_losses.iter().chain(&d.actor_losses).all(|l| l.is_finite()), "{pipeline:?}");
    }
}

#[test]
fn table_geometry_defaults() {
    let prob = AgentConfig::for_pipeline(Pipeline::Prob, Setting::Theta);
    let reg = AgentConfig::for_pipeline(Pipeline::Reg, Setting::Theta);
    let hid = AgentConfig::for_pipeline(Pipeline::Hid, Setting::Theta);
    assert_eq!(prob.actor, MlpShape { layers: 5, width: 64 });
    assert_eq!(reg.critic, MlpShape { layers: 5, width: 64 });
    assert_eq!(hid.actor, MlpShape { layers: 4, width: 20 });
    assert_eq!((prob.window, reg.window), (10, 50));
}

fn train_tiny(seed: u64) -> (AgentBundle, Vec<u8>) {
    let env = Environment::new(EnvConfig::default()).unwrap();
    let mut b = tiny_bundle(0.999, seed);
    b.config.iterations = 5;
    b.config.batch = 16;
    train_agent(&mut b, &env, &mut rng::seeded(seed)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let bytes = std::fs::read(dir.path().join("agent.rtps")).unwrap();
    (b, bytes)
}

#[test]
fn training_is_bit_reproducible_and_round_trips() {
    let (a, bytes_a) = train_tiny(10);
    let (_, bytes_b) = train_tiny(10);
    assert_eq!(bytes_a, bytes_b);
    let dir = tempfile::tempdir().unwrap();
    a.save(dir.path()).unwrap();
    let loaded = AgentBundle::load(dir.path()).unwrap();
    assert_eq!(loaded.actor, a.actor);
    assert_eq!(loaded.target, a.target);
    assert_eq!(loaded.config, a.config);
}

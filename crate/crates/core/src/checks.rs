//! Finite-difference checks of the three composite losses that training
//! relies on: a GRU forecaster, the critic regression and the actor
//! objective through a frozen critic.

use rand::Rng;

use crate::autodiff::{grad_check, GradCheckReport, Graph, Tensor, FD_STEP};
use crate::ddpg::{actor_loss_with, critic_forward, critic_loss, init_mlp, MlpShape, Transition, ACTOR, CRITIC, PRE_ACTIVATION_PENALTY};
use crate::gru::{GruConfig, GruStack, HeadKind};
use crate::rng::{self, SimRng};
use crate::Result;

pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct NamedReport {
    pub name: &'static str,
    pub report: GradCheckReport,
}

fn random_matrix(rows: usize, cols: usize, rng: &mut SimRng) -> Result<Tensor> {
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Two GRU layers of four units with a one-layer regression head, MSE against random targets.
pub fn gru_regression(rng: &mut SimRng) -> Result<GradCheckReport> {
    let config = GruConfig {
        layers: 2,
        hidden: 4,
        window: 5,
        head: HeadKind::Regressor,
        head_layers: 1,
        head_width: 4,
        ..GruConfig::classifier(2, 5)
    };
    let stack = GruStack::new(config, rng)?;
    let seqs: Vec<Vec<f64>> = (0..3).map(|_| (0..6).map(|_| rng.random_range(0.8..1.2)).collect()).collect();
    let refs: Vec<&[f64]> = seqs.iter().map(Vec::as_slice).collect();
    let input = stack.input_tensor(&refs)?;
    let target = Tensor::column(&(0..3).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>());
    grad_check(
        stack.params(),
        |g: &mut Graph, p| {
            let probe = GruStack::from_parts(stack.config().clone(), p.clone())?;
            let x = g.constant(input.clone())?;
            let out = probe.output(g, x, false)?;
            let y = g.constant(target.clone())?;
            g.mse(out, y)
        },
        FD_STEP,
    )
}

const SHAPE: MlpShape = MlpShape { layers: 2, width: 8 };
const BOUNDS: (f64, f64) = (-2.0, 2.0);

/// Critic regression onto fixed targets, with gradients for every critic weight.
pub fn critic_path(rng: &mut SimRng) -> Result<GradCheckReport> {
    let critic = init_mlp(CRITIC, 4, SHAPE, rng)?;
    let tr = Transition {
        features: random_matrix(5, 3, rng)?,
        actions: (0..5).map(|_| rng.random_range(BOUNDS.0..BOUNDS.1)).collect(),
        rewards: vec![0.0; 5],
        next_features: random_matrix(5, 3, rng)?,
    };
    let targets = random_matrix(5, 1, rng)?;
    grad_check(&critic, |g, p| critic_loss(g, p, &tr, &targets, BOUNDS), FD_STEP)
}

/// Actor objective `−mean Q(G, π(G))` plus the pre-activation penalty, the
/// critic entering as constants.
pub fn actor_through_critic(rng: &mut SimRng) -> Result<GradCheckReport> {
    let actor = init_mlp(ACTOR, 3, SHAPE, rng)?;
    let critic = init_mlp(CRITIC, 4, SHAPE, rng)?;
    let features = random_matrix(5, 3, rng)?;
    grad_check(
        &actor,
        |g, p| {
            actor_loss_with(g, p, &features, BOUNDS.1, PRE_ACTIVATION_PENALTY, |g, x, a| {
                critic_forward(g, &critic, x, a, BOUNDS, true)
            })
        },
        FD_STEP,
    )
}

/// Runs all three composites from independent streams of `seed`.
pub fn run_all(seed: u64) -> Result<Vec<NamedReport>> {
    let mut root = rng::seeded(seed);
    let checks: [(&'static str, fn(&mut SimRng) -> Result<GradCheckReport>); 3] =
        [("gru_regression", gru_regression), ("critic_loss", critic_path), ("actor_loss", actor_through_critic)];
    checks
        .into_iter()
        .map(|(name, f)| {
            let mut r = rng::derive(&mut root);
            Ok(NamedReport { name, report: f(&mut r)? })
        })
        .collect()
}

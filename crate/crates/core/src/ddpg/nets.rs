//! Actor and critic multilayer perceptrons.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::autodiff::{dense, init_dense, Graph, ParamStore, Var};
use crate::{Error, Result};

/// `layers` hidden SiLU layers of `width` units each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpShape {
    pub layers: usize,
    pub width: usize,
}

pub const ACTOR: &str = "actor";
pub const CRITIC: &str = "critic";

/// Creates `<prefix>/<i>` hidden layers and a scalar `<prefix>/out`.
pub fn init_mlp(prefix: &str, inputs: usize, shape: MlpShape, rng: &mut impl RngCore) -> Result<ParamStore> {
    if shape.layers > 0 && shape.width == 0 {
        return Err(Error::Config(format!("{prefix}: width must be positive")));
    }
    let mut store = ParamStore::new();
    let mut fan_in = inputs;
    for i in 0..shape.layers {
        init_dense(&mut store, &format!("{prefix}/{i}"), fan_in, shape.width, rng)?;
        fan_in = shape.width;
    }
    init_dense(&mut store, &format!("{prefix}/out"), fan_in, 1, rng)?;
    Ok(store)
}

/// Infers the hidden-layer count of an MLP created by [`init_mlp`].
fn depth(store: &ParamStore, prefix: &str) -> usize {
    (0..).take_while(|i| store.get(&format!("{prefix}/{i}/weight")).is_some()).count()
}

fn mlp(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, frozen: bool) -> Result<Var> {
    let mut z = x;
    for i in 0..depth(store, prefix) {
        z = dense(g, store, &format!("{prefix}/{i}"), z, frozen)?;
        z = g.silu(z)?;
    }
    dense(g, store, &format!("{prefix}/out"), z, frozen)
}

/// Actor output before the squashing `tanh`.
pub fn actor_pre_activation(g: &mut Graph, actor: &ParamStore, features: Var, frozen: bool) -> Result<Var> {
    mlp(g, actor, ACTOR, features, frozen)
}

/// Target inventory `I_max · tanh(·)` for each row of the features.
pub fn actor_forward(g: &mut Graph, actor: &ParamStore, features: Var, i_max: f64, frozen: bool) -> Result<Var> {
    let z = actor_pre_activation(g, actor, features, frozen)?;
    let t = g.tanh(z)?;
    g.scale(t, i_max)
}

/// `Q(G, a)` with the raw action rescaled to `[0, 1]` over the inventory bounds.
pub fn critic_forward(
    g: &mut Graph,
    critic: &ParamStore,
    features: Var,
    action: Var,
    bounds: (f64, f64),
    frozen: bool,
) -> Result<Var> {
    let (lo, hi) = bounds;
    let a = g.affine(action, 1.0 / (hi - lo), -lo / (hi - lo))?;
    let x = g.concat(&[features, a])?;
    mlp(g, critic, CRITIC, x, frozen)
}

/// Blends `target ← τ·source + (1 − τ)·target` entry by entry.
pub fn soft_update(target: &mut ParamStore, source: &ParamStore, tau: f64) -> Result<()> {
    let mut missing = None;
    target.map_values(|name, t| match source.get(name) {
        Some(s) if s.shape() == t.shape() => {
            for (x, y) in t.data_mut().iter_mut().zip(s.data()) {
                *x = tau * y + (1.0 - tau) * *x;
            }
        }
        _ => missing = Some(name.to_string()),
    });
    match missing {
        Some(name) => Err(Error::Dimension(format!("soft update: no matching source for {name}"))),
        None => Ok(()),
    }
}

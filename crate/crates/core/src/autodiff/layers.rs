//! Fully connected layers stored as `prefix/weight` (`out × in`) and `prefix/bias` (`out`).

use rand::RngCore;

use crate::error::Result;

use super::{Graph, ParamStore, Tensor, Var};

/// Adds a dense layer initialised uniformly in `±1/√fan_in`.
pub fn init_dense(
    store: &mut ParamStore,
    prefix: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl RngCore,
) -> Result<()> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    store.insert(
        format!("{prefix}/weight"),
        Tensor::uniform(&[fan_out, fan_in], bound, rng),
    )?;
    store.insert(format!("{prefix}/bias"), Tensor::uniform(&[fan_out], bound, rng))?;
    Ok(())
}

/// `x · Wᵀ + b`. With `frozen` the layer's parameters act as constants.
pub fn dense(g: &mut Graph, store: &ParamStore, prefix: &str, x: Var, frozen: bool) -> Result<Var> {
    let (w, b) = if frozen {
        (
            g.frozen(store, &format!("{prefix}/weight"))?,
            g.frozen(store, &format!("{prefix}/bias"))?,
        )
    } else {
        (
            g.param(store, &format!("{prefix}/weight"))?,
            g.param(store, &format!("{prefix}/bias"))?,
        )
    };
    let xw = g.matmul_t(x, w)?;
    g.add(xw, b)
}

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Parameters of one exact Ornstein–Uhlenbeck step `dS = κ(θ − S)dt + σ dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OUParams {
    pub kappa: f64,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl OUParams {
    pub fn new(kappa: f64, theta: f64, sigma: f64, dt: f64) -> Result<Self> {
        let p = OUParams { kappa, theta, sigma, dt };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.sigma >= 0.0 && self.dt > 0.0 && self.theta.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "OU parameters need kappa > 0, sigma >= 0, dt > 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    /// Conditional mean of `S_{t+Δt}` given `S_t = s`.
    pub fn conditional_mean(&self, s: f64) -> f64 {
        let decay = (-self.kappa * self.dt).exp();
        decay * s + self.theta * (1.0 - decay)
    }

    pub fn conditional_variance(&self) -> f64 {
        self.sigma * self.sigma * (1.0 - (-2.0 * self.kappa * self.dt).exp()) / (2.0 * self.kappa)
    }
}

/// Advances the signal by one step using the standard normal shock `z`.
/// Passing `z = 0` gives the noise-free recursion.
pub fn ou_step_with_shock(s: f64, p: &OUParams, z: f64) -> f64 {
    p.conditional_mean(s) + p.conditional_variance().sqrt() * z
}

pub fn ou_step(s: f64, p: &OUParams, rng: &mut impl RngCore) -> f64 {
    ou_step_with_shock(s, p, rng::normal(rng))
}

/// Stationary mean and variance `(θ, σ²/(2κ))`.
pub fn stationary_moments(p: &OUParams) -> (f64, f64) {
    (p.theta, p.sigma * p.sigma / (2.0 * p.kappa))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_step_matches_closed_form() {
        let p = OUParams::new(5.0, 0.9, 0.2, 0.2).unwrap();
        let next = ou_step_with_shock(1.0, &p, 0.0);
        let expected = (-1f64).exp() + (1.0 - (-1f64).exp()) * 0.9;
        assert!((next - expected).abs() < 1e-15);
        assert!((next - 0.93679).abs() < 1e-5);
    }

    #[test]
    fn level_is_a_fixed_point() {
        let p = OUParams::new(3.0, 1.1, 0.3, 0.2).unwrap();
        assert!((ou_step_with_shock(1.1, &p, 0.0) - 1.1).abs() < 1e-15);
    }

    #[test]
    fn conditional_variance_closed_form() {
        let p = OUParams::new(5.0, 1.0, 0.2, 0.2).unwrap();
        assert!((p.conditional_variance() - 3.4587e-3).abs() < 1e-7);
    }

    #[test]
    fn stationary_moment_examples() {
        let p = OUParams::new(5.0, 1.0, 0.2, 0.2).unwrap();
        let (m, v) = stationary_moments(&p);
        assert_eq!(m, 1.0);
        assert!((v - 0.004).abs() < 1e-15);
        let q = OUParams::new(5.0, 0.9, 0.0, 0.2).unwrap();
        assert_eq!(stationary_moments(&q), (0.9, 0.0));
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(OUParams::new(0.0, 1.0, 0.2, 0.2).is_err());
        assert!(OUParams::new(1.0, 1.0, 0.2, 0.0).is_err());
    }
}

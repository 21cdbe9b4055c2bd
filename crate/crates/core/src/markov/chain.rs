use nalgebra::DMatrix;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SERIES_TOL: f64 = 1e-16;
const MAX_TERMS: usize = 200;
const ROW_SUM_TOL: f64 = 1e-12;

/// Transition probabilities `e^{Aτ}` of a continuous-time chain with generator `a`.
///
/// Scaling and squaring: the argument is halved until its infinity norm is at
/// most 1/2, the Taylor series is summed until the added term drops below
/// 1e-16, and the result is squared back up.
pub fn matrix_exponential(a: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "rate matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidInput(format!("time step must be non-negative, got {tau}")));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("rate matrix has non-finite entries".into()));
    }
    let n = a.nrows();
    let scaled = a * tau;
    let norm = inf_norm(&scaled);
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let x = scaled / 2f64.powi(squarings as i32);

    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=MAX_TERMS {
        term = &term * &x / k as f64;
        result += &term;
        if term.amax() < SERIES_TOL {
            break;
        }
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Draws the next state from row `current` of `p` with a single uniform draw.
pub fn sample_row(p: &DMatrix<f64>, current: usize, rng: &mut impl RngCore) -> usize {
    let u = crate::rng::uniform(rng, 0.0, 1.0);
    let mut acc = 0.0;
    let last = p.ncols() - 1;
    for j in 0..last {
        acc += p[(current, j)];
        if u < acc {
            return j;
        }
    }
    last
}

/// Levels and generator of one regime-switching parameter. A single level
/// encodes a constant parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub levels: Vec<f64>,
    pub rates: Vec<Vec<f64>>,
}

impl ChainSpec {
    pub fn constant(value: f64) -> Self {
        ChainSpec { levels: vec![value], rates: vec![vec![0.0]] }
    }

    pub fn symmetric(levels: Vec<f64>, rate: f64) -> Self {
        let k = levels.len();
        let off = if k > 1 { rate / (k - 1) as f64 } else { 0.0 };
        let rates = (0..k)
            .map(|i| (0..k).map(|j| if i == j { -rate } else { off }).collect())
            .collect();
        ChainSpec { levels, rates }
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min_level(&self) -> f64 {
        self.levels.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_level(&self) -> f64 {
        self.levels.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn rate_matrix(&self) -> DMatrix<f64> {
        let k = self.levels.len();
        DMatrix::from_fn(k, k, |i, j| self.rates[i][j])
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        let k = self.levels.len();
        if k == 0 {
            return Err(Error::Config(format!("{name}: at least one level is required")));
        }
        if self.levels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{name}: levels must be finite")));
        }
        if self.rates.len() != k || self.rates.iter().any(|r| r.len() != k) {
            return Err(Error::Config(format!("{name}: rates must be a {k}x{k} matrix")));
        }
        for (i, row) in self.rates.iter().enumerate() {
            if row.iter().enumerate().any(|(j, &v)| !v.is_finite() || (i != j && v < 0.0)) {
                return Err(Error::Config(format!(
                    "{name}: off-diagonal rates must be finite and non-negative (row {i})"
                )));
            }
            let sum: f64 = row.iter().sum();
            if sum.abs() > ROW_SUM_TOL {
                return Err(Error::Config(format!("{name}: rate row {i} sums to {sum}, not 0")));
            }
        }
        Ok(())
    }
}

/// A running chain: its levels, the one-step transition matrix and the current state.
#[derive(Debug, Clone)]
pub struct RegimeChain {
    levels: Vec<f64>,
    transition: DMatrix<f64>,
    current: usize,
}

impl RegimeChain {
    pub fn new(spec: &ChainSpec, tau: f64, initial: usize) -> Result<Self> {
        spec.validate("chain")?;
        if initial >= spec.len() {
            return Err(Error::InvalidInput(format!(
                "initial state {initial} out of range for {} levels",
                spec.len()
            )));
        }
        let transition = matrix_exponential(&spec.rate_matrix(), tau)?;
        Ok(RegimeChain { levels: spec.levels.clone(), transition, current: initial })
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn value(&self) -> f64 {
        self.levels[self.current]
    }

    pub fn transition(&self) -> &DMatrix<f64> {
        &self.transition
    }

    pub fn set_current(&mut self, state: usize) {
        assert!(state < self.levels.len(), "state out of range");
        self.current = state;
    }

    pub fn step(&mut self, rng: &mut impl RngCore) -> usize {
        self.current = step_chain(self.current, &self.transition, rng);
        self.current
    }
}

/// One transition of a discrete chain with row-stochastic matrix `p`.
pub fn step_chain(current: usize, p: &DMatrix<f64>, rng: &mut impl RngCore) -> usize {
    if p.ncols() == 1 {
        return 0;
    }
    sample_row(p, current, rng)
}

/// Long-run occupation probabilities, taken from a row of `e^{A τ}` for large τ.
pub fn stationary_distribution(spec: &ChainSpec) -> Result<Vec<f64>> {
    let p = matrix_exponential(&spec.rate_matrix(), 1e4)?;
    Ok(p.row(0).iter().cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn zero_generator_gives_identity() {
        let p = matrix_exponential(&DMatrix::zeros(3, 3), 0.2).unwrap();
        assert_eq!(p, DMatrix::identity(3, 3));
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(
            matrix_exponential(&DMatrix::zeros(2, 3), 1.0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn two_state_limit_is_uniform() {
        let spec = ChainSpec::symmetric(vec![0.0, 1.0], 0.1);
        let p = matrix_exponential(&spec.rate_matrix(), 1e3).unwrap();
        for v in p.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_helper_builds_valid_generator() {
        let spec = ChainSpec::symmetric(vec![0.9, 1.0, 1.1], 0.1);
        spec.validate("theta").unwrap();
        assert_eq!(spec.rates[0], vec![-0.1, 0.05, 0.05]);
    }

    #[test]
    fn bad_rows_are_rejected() {
        let spec = ChainSpec { levels: vec![1.0, 2.0], rates: vec![vec![-0.1, 0.2], vec![0.1, -0.1]] };
        assert!(spec.validate("x").is_err());
    }

    #[test]
    fn identity_transition_never_moves() {
        let p = DMatrix::<f64>::identity(3, 3);
        let mut r = rng::seeded(1);
        let mut s = 2;
        for _ in 0..10_000 {
            s = step_chain(s, &p, &mut r);
            assert_eq!(s, 2);
        }
    }

    #[test]
    fn deterministic_row_always_jumps() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0]);
        let mut r = rng::seeded(2);
        for _ in 0..1000 {
            assert_eq!(step_chain(0, &p, &mut r), 1);
        }
    }
}

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Affine map sending the training range onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(train: &[f64]) -> Result<Self> {
        let min = train.iter().copied().fold(f64::INFINITY, f64::min);
        let max = train.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::InvalidInput("min-max normalisation needs a non-constant finite training series".into()));
        }
        Ok(MinMax { min, max })
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        self.min + y * (self.max - self.min)
    }

    pub fn transform_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.transform(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_and_extrapolation() {
        let m = MinMax::fit(&[2.0, 4.0]).unwrap();
        assert_eq!(m.transform(3.0), 0.5);
        assert_eq!(m.transform(5.0), 1.5);
        assert!((m.inverse(m.transform(3.7)) - 3.7).abs() < 1e-12);
        assert!(MinMax::fit(&[1.0, 1.0]).is_err());
    }
}

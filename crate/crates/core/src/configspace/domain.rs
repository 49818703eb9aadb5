use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box `[0, L1] × … × [0, Ld]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lengths: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lengths: Vec<f64>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        if let Some(l) = lengths.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidDomain(format!("side length {l} is not a positive finite number")));
        }
        Ok(BoxDomain { lengths })
    }

    /// Cube of side `side` in dimension `d`.
    pub fn cube(d: usize, side: f64) -> Result<Self> {
        Self::new(vec![side; d])
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }

    /// Membership in the closed box.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.lengths).all(|(xi, l)| *xi >= 0.0 && *xi <= *l)
    }

    /// Smallest distance from `x` to the boundary.
    pub fn distance_to_boundary(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.lengths)
            .map(|(xi, l)| xi.min(l - xi))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lengths.iter().map(|l| 0.5 * l).collect()
    }
}

/// Mirror-fold a coordinate into `[0, l]` (reflecting boundary).
///
/// The map has period `2l`; points already inside are returned unchanged.
pub fn fold(x: f64, l: f64) -> f64 {
    if (0.0..=l).contains(&x) {
        return x;
    }
    let period = 2.0 * l;
    let mut y = x.rem_euclid(period);
    if y > l {
        y = period - y;
    }
    y.clamp(0.0, l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_lengths() {
        assert!(BoxDomain::new(vec![]).is_err());
        assert!(BoxDomain::new(vec![1.0, 0.0]).is_err());
        assert!(BoxDomain::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn volume_is_product() {
        let b = BoxDomain::new(vec![2.0, 3.0, 0.5]).unwrap();
        assert_eq!(b.volume(), 3.0);
        assert!(b.contains(&[2.0, 0.0, 0.25]));
        assert!(!b.contains(&[2.0001, 0.0, 0.25]));
    }

    #[test]
    fn fold_examples() {
        assert!((fold(-0.1, 1.0) - 0.1).abs() < 1e-15);
        assert!((fold(1.3, 1.0) - 0.7).abs() < 1e-15);
        assert!((fold(2.4, 1.0) - 0.4).abs() < 1e-15);
        assert_eq!(fold(0.5, 1.0), 0.5);
    }
}

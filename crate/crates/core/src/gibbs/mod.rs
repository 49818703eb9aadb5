//! Canonical Gibbs measures in a box: exact quadrature oracles for small
//! systems, Metropolis sampling, correlation-function estimation, partition
//! ratios, Ruelle-bound and Kirkwood–Salsburg checks, and grand-canonical
//! sampling.

pub mod correlation;
pub mod ensembles;
pub mod gcmc;
pub mod mcmc;
pub mod oracle;
pub mod ratio;
pub mod ruelle;

use serde::{Deserialize, Serialize};

use crate::configspace::BoxDomain;
use crate::error::{Error, Result};
use crate::potential::PairPotentialModel;

pub use correlation::{correlation_estimate, CorrelationEstimate, CorrelationGrid};
pub use mcmc::{sample_gibbs, McmcParams, MetropolisKernel, SampleSet};
pub use oracle::Oracle;

/// N particles in a box at inverse temperature β with a pair potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalEnsemble {
    pub n: usize,
    pub domain: BoxDomain,
    pub beta: f64,
    pub potential: PairPotentialModel,
}

impl CanonicalEnsemble {
    pub fn new(n: usize, domain: BoxDomain, beta: f64, potential: PairPotentialModel) -> Result<Self> {
        if potential.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), found: potential.dim() });
        }
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::Precondition(format!("beta must be finite and nonnegative, got {beta}")));
        }
        Ok(CanonicalEnsemble { n, domain, beta, potential })
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Same box, β and potential with a different particle number.
    pub fn with_n(&self, n: usize) -> Self {
        CanonicalEnsemble { n, ..self.clone() }
    }

    /// Boltzmann factor exp(−β E) of an energy; 1 at β = 0, 0 at E = +∞.
    pub fn boltzmann(&self, energy: f64) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else {
            (-self.beta * energy).exp()
        }
    }

    /// exp(−β Σ_{i<j} φ(x_i − x_j)) for an ordered tuple (flat coordinates).
    pub fn density_unnormalized(&self, coords: &[f64]) -> f64 {
        if self.beta == 0.0 {
            return 1.0;
        }
        self.boltzmann(self.potential.points_energy(coords))
    }

    pub fn density(&self) -> f64 {
        self.n as f64 / self.domain.volume()
    }
}

/// A sequence of `(N_j, Λ_j)` with densities `v_j = N_j/|Λ_j|` approaching ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NVSchedule {
    pub rho: f64,
    pub entries: Vec<(usize, BoxDomain)>,
    pub tolerance: f64,
}

impl NVSchedule {
    /// Validates: volumes strictly increasing and |v_j − ρ| non-increasing up
    /// to `tolerance`.
    pub fn new(rho: f64, entries: Vec<(usize, BoxDomain)>, tolerance: f64) -> Result<Self> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::InvalidSchedule(format!("target density {rho} must be positive")));
        }
        if entries.is_empty() {
            return Err(Error::InvalidSchedule("schedule has no entries".into()));
        }
        let d = entries[0].1.dim();
        if entries.iter().any(|(_, b)| b.dim() != d) {
            return Err(Error::InvalidSchedule("entries have different dimensions".into()));
        }
        for (j, w) in entries.windows(2).enumerate() {
            if !(w[1].1.volume() > w[0].1.volume()) {
                return Err(Error::InvalidSchedule(format!("volume of entry {} does not exceed entry {j}", j + 1)));
            }
            let v0 = w[0].0 as f64 / w[0].1.volume();
            let v1 = w[1].0 as f64 / w[1].1.volume();
            if (v1 - rho).abs() > (v0 - rho).abs() + tolerance {
                return Err(Error::InvalidSchedule(format!(
                    "density {v1} of entry {} moves away from {rho} (previous {v0})",
                    j + 1
                )));
            }
        }
        Ok(NVSchedule { rho, entries, tolerance })
    }

    /// Cubes with |Λ_j| = N_j/ρ, so v_j = ρ for every entry.
    pub fn cubic(rho: f64, d: usize, ns: &[usize]) -> Result<Self> {
        let mut entries = Vec::with_capacity(ns.len());
        for &n in ns {
            if n == 0 {
                return Err(Error::InvalidSchedule("particle numbers must be positive".into()));
            }
            let side = (n as f64 / rho).powf(1.0 / d as f64);
            entries.push((n, BoxDomain::cube(d, side)?));
        }
        Self::new(rho, entries, 1e-12)
    }

    pub fn densities(&self) -> Vec<f64> {
        self.entries.iter().map(|(n, b)| *n as f64 / b.volume()).collect()
    }

    pub fn ensemble(&self, j: usize, beta: f64, potential: &PairPotentialModel) -> Result<CanonicalEnsemble> {
        let (n, dom) = &self.entries[j];
        CanonicalEnsemble::new(*n, dom.clone(), beta, potential.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_examples() {
        let dom = BoxDomain::cube(1, 3.0).unwrap();
        let ideal = CanonicalEnsemble::new(2, dom.clone(), 1.0, PairPotentialModel::ideal_gas(1)).unwrap();
        assert_eq!(ideal.density_unnormalized(&[0.1, 0.1]), 1.0);
        let lj = CanonicalEnsemble::new(2, dom.clone(), 1.0, PairPotentialModel::lennard_jones(1, 1.0, 1.0).unwrap())
            .unwrap();
        assert_eq!(lj.density_unnormalized(&[0.5, 1.5]), 1.0);
        assert_eq!(lj.density_unnormalized(&[0.5, 0.5]), 0.0);
        let hot = lj.clone();
        let hot = CanonicalEnsemble { beta: 0.0, ..hot };
        assert_eq!(hot.density_unnormalized(&[0.5, 0.5]), 1.0);
        assert_eq!(hot.density_unnormalized(&[0.5, 0.6]), 1.0);
    }

    #[test]
    fn schedule_validation() {
        let s = NVSchedule::cubic(0.5, 1, &[2, 3, 4, 5, 6]).unwrap();
        assert!(s.densities().iter().all(|v| (v - 0.5).abs() < 1e-12));
        let bad = vec![(2, BoxDomain::cube(1, 4.0).unwrap()), (3, BoxDomain::cube(1, 4.0).unwrap())];
        assert!(NVSchedule::new(0.5, bad, 0.0).is_err());
        let diverging = vec![(2, BoxDomain::cube(1, 4.0).unwrap()), (8, BoxDomain::cube(1, 5.0).unwrap())];
        assert!(matches!(NVSchedule::new(0.5, diverging, 1e-6), Err(Error::InvalidSchedule(_))));
    }
}

//! Grand-canonical Metropolis sampler with insert, delete and displacement
//! moves, targeting z^{|γ|} e^{−βE(γ)} on finite configurations in Λ.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcmc::{batches_per_chain, uniform_in_ball};
use super::oracle::partition_oracle;
use super::CanonicalEnsemble;
use crate::configspace::BoxDomain;
use crate::error::{Error, Result};
use crate::potential::PairPotentialModel;
use crate::rng::{self, Rng};
use crate::stats::{self, MeanSe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GcmcParams {
    pub sweeps: usize,
    pub burn_in: usize,
    /// Attempted moves per sweep.
    pub moves_per_sweep: usize,
    /// Probability that a move is a displacement (otherwise insert or delete
    /// with equal probability).
    pub displace_fraction: f64,
    pub step: f64,
    /// Abort if the configuration grows beyond this many particles.
    pub max_particles: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for GcmcParams {
    fn default() -> Self {
        GcmcParams {
            sweeps: 20_000,
            burn_in: 2_000,
            moves_per_sweep: 20,
            displace_fraction: 0.5,
            step: 0.5,
            max_particles: 10_000,
            thin: 1,
            chains: 4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcChain {
    pub states: Vec<Vec<f64>>,
    /// Acceptance fractions of insert, delete and displacement proposals.
    pub acceptance: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcSamples {
    pub domain: BoxDomain,
    pub activity: f64,
    pub chains: Vec<GcChain>,
    /// Mean particle number with batch-means error.
    pub mean_n: MeanSe,
}

impl GcSamples {
    pub fn state_chains(&self) -> Vec<&[Vec<f64>]> {
        self.chains.iter().map(|c| c.states.as_slice()).collect()
    }

    /// Mean density |γ|/|Λ|.
    pub fn density(&self) -> MeanSe {
        let v = self.domain.volume();
        MeanSe::new(self.mean_n.mean / v, self.mean_n.se / v)
    }
}

struct GcState<'a> {
    domain: &'a BoxDomain,
    beta: f64,
    pot: &'a PairPotentialModel,
    za: f64,
    x: Vec<f64>,
}

impl GcState<'_> {
    fn boltz(&self, e: f64) -> f64 {
        if self.beta == 0.0 {
            1.0
        } else {
            (-self.beta * e).exp()
        }
    }

    fn n(&self) -> usize {
        self.x.len() / self.domain.dim()
    }

    fn insert(&mut self, rng: &mut Rng, buf: &mut [f64]) -> bool {
        for (b, l) in buf.iter_mut().zip(self.domain.lengths()) {
            *b = rng.random::<f64>() * l;
        }
        let de = self.pot.particle_energy(&self.x, buf, None);
        let a = self.za / (self.n() + 1) as f64 * self.boltz(de);
        if rng.random::<f64>() < a {
            self.x.extend_from_slice(buf);
            return true;
        }
        false
    }

    fn delete(&mut self, rng: &mut Rng) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let d = self.domain.dim();
        let i = rng.random_range(0..n);
        let de = self.pot.particle_energy(&self.x, &self.x[i * d..(i + 1) * d], Some(i));
        // e^{βΔE} for removing particle i; the product form avoids ∞·0.
        let a = n as f64 / self.za / self.boltz(de);
        if rng.random::<f64>() < a {
            // Swap-remove keeps the state an ordered tuple of the survivors.
            let last = n - 1;
            for k in 0..d {
                self.x.swap(i * d + k, last * d + k);
            }
            self.x.truncate(last * d);
            return true;
        }
        false
    }

    fn displace(&mut self, rng: &mut Rng, step: f64, buf: &mut [f64]) -> bool {
        let n = self.n();
        if n == 0 {
            return false;
        }
        let d = self.domain.dim();
        let i = rng.random_range(0..n);
        uniform_in_ball(rng, d, step, buf);
        for k in 0..d {
            buf[k] += self.x[i * d + k];
        }
        if !self.domain.contains(buf) {
            return false;
        }
        let e_new = self.pot.particle_energy(&self.x, buf, Some(i));
        if e_new == f64::INFINITY {
            return false;
        }
        let e_old = self.pot.particle_energy(&self.x, &self.x[i * d..(i + 1) * d], Some(i));
        let de = e_new - e_old;
        if de <= 0.0 || rng.random::<f64>() < self.boltz(de) {
            self.x[i * d..(i + 1) * d].copy_from_slice(buf);
            return true;
        }
        false
    }
}

fn run_chain(domain: &BoxDomain, beta: f64, pot: &PairPotentialModel, z: f64, p: &GcmcParams, c: usize) -> Result<GcChain> {
    let mut rng = rng::stream(p.seed, c as u64);
    let mut st = GcState { domain, beta, pot, za: z * domain.volume(), x: Vec::new() };
    let mut buf = vec![0.0; domain.dim()];
    let mut tried = [0usize; 3];
    let mut acc = [0usize; 3];
    let thin = p.thin.max(1);
    let mut states = Vec::with_capacity(p.sweeps / thin);
    for s in 0..(p.burn_in + p.sweeps) {
        for _ in 0..p.moves_per_sweep.max(1) {
            let u: f64 = rng.random();
            let kind = if u < p.displace_fraction {
                2
            } else if rng.random::<bool>() {
                0
            } else {
                1
            };
            let ok = match kind {
                0 => st.insert(&mut rng, &mut buf),
                1 => st.delete(&mut rng),
                _ => st.displace(&mut rng, p.step, &mut buf),
            };
            if s >= p.burn_in {
                tried[kind] += 1;
                acc[kind] += ok as usize;
            }
            if st.n() > p.max_particles {
                return Err(Error::ExplosionGuard { cap: p.max_particles });
            }
        }
        if s >= p.burn_in && (s - p.burn_in + 1) % thin == 0 {
            states.push(st.x.clone());
        }
    }
    let acceptance = [0, 1, 2].map(|k| if tried[k] > 0 { acc[k] as f64 / tried[k] as f64 } else { f64::NAN });
    Ok(GcChain { states, acceptance })
}

/// Runs `params.chains` independent chains from the empty configuration.
pub fn grand_canonical_sample(
    domain: &BoxDomain,
    beta: f64,
    potential: &PairPotentialModel,
    z: f64,
    params: &GcmcParams,
) -> Result<GcSamples> {
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Precondition(format!("activity must be positive, got {z}")));
    }
    if potential.dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), found: potential.dim() });
    }
    if params.chains == 0 {
        return Err(Error::Precondition("at least one chain is required".into()));
    }
    let chains = (0..params.chains)
        .into_par_iter()
        .map(|c| run_chain(domain, beta, potential, z, params, c))
        .collect::<Result<Vec<_>>>()?;
    let d = domain.dim();
    let counts: Vec<Vec<f64>> = chains.iter().map(|c| c.states.iter().map(|s| (s.len() / d) as f64).collect()).collect();
    let mean_n = stats::pooled_batch_means(&counts, batches_per_chain(chains.len()));
    Ok(GcSamples { domain: domain.clone(), activity: z, chains, mean_n })
}

/// Mean particle number from the truncated series Ξ = Σ_{N ≤ n_max}
/// z^N Z^{(N)}/N! (unsymmetrized Z^{(N)} by quadrature).
pub fn grand_canonical_oracle_mean(
    domain: &BoxDomain,
    beta: f64,
    potential: &PairPotentialModel,
    z: f64,
    n_max: usize,
    quad_tol: f64,
) -> Result<f64> {
    let (mut xi, mut num) = (0.0, 0.0);
    let mut fact = 1.0;
    for n in 0..=n_max {
        if n > 0 {
            fact *= n as f64;
        }
        let ens = CanonicalEnsemble::new(n, domain.clone(), beta, potential.clone())?;
        let w = z.powi(n as i32) * partition_oracle(&ens, quad_tol)?.value / fact;
        xi += w;
        num += n as f64 * w;
    }
    Ok(num / xi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_gas_is_poisson() {
        let dom = BoxDomain::cube(1, 5.0).unwrap();
        let p = GcmcParams { sweeps: 20_000, burn_in: 500, seed: 4, ..Default::default() };
        let s = grand_canonical_sample(&dom, 1.0, &PairPotentialModel::ideal_gas(1), 0.6, &p).unwrap();
        assert!(s.mean_n.z_to(3.0) < 3.0, "{:?}", s.mean_n);
    }

    #[test]
    fn repulsion_lowers_mean_and_matches_series() {
        let dom = BoxDomain::cube(1, 2.0).unwrap();
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let z = 0.8;
        let exact = grand_canonical_oracle_mean(&dom, 1.0, &pot, z, 3, 1e-8).unwrap();
        assert!(exact < z * 2.0);
        let p = GcmcParams { sweeps: 40_000, burn_in: 1000, seed: 8, ..Default::default() };
        let s = grand_canonical_sample(&dom, 1.0, &pot, z, &p).unwrap();
        assert!(s.mean_n.z_to(exact) < 3.0, "{:?} vs {exact}", s.mean_n);
    }

    #[test]
    fn tiny_activity_is_mostly_empty_and_guard_fires() {
        let dom = BoxDomain::cube(2, 1.0).unwrap();
        let p = GcmcParams { sweeps: 2000, burn_in: 100, seed: 1, ..Default::default() };
        let s = grand_canonical_sample(&dom, 1.0, &PairPotentialModel::ideal_gas(2), 1e-6, &p).unwrap();
        let empty = s.chains.iter().flat_map(|c| &c.states).filter(|x| x.is_empty()).count();
        assert!(empty as f64 > 0.99 * (s.chains.len() * 2000) as f64);
        let p = GcmcParams { max_particles: 5, ..p };
        let r = grand_canonical_sample(&dom, 1.0, &PairPotentialModel::ideal_gas(2), 100.0, &p);
        assert_eq!(r.unwrap_err(), Error::ExplosionGuard { cap: 5 });
    }
}

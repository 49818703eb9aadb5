//! Metropolis single-particle displacement sampler for the canonical
//! ensemble.

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CanonicalEnsemble;
use crate::configspace::{fold, BoxDomain, Configuration};
use crate::error::{Error, Result};
use crate::potential::ball_volume;
use crate::rng::{self, Rng};

/// Sweeps per tuning / mixing-check window.
pub const WINDOW: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcParams {
    /// Production sweeps per chain (one sweep = N attempted moves).
    pub sweeps: usize,
    pub burn_in: usize,
    /// Initial displacement radius; tuned during burn-in when `tune` is set.
    pub step: f64,
    pub tune: bool,
    /// Keep every `thin`-th production sweep.
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
}

impl Default for McmcParams {
    fn default() -> Self {
        McmcParams { sweeps: 20_000, burn_in: 2_000, step: 0.5, tune: true, thin: 1, chains: 4, seed: 0 }
    }
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSamples {
    /// Emitted states as flat ordered coordinates.
    pub states: Vec<Vec<f64>>,
    /// Acceptance fraction over production sweeps.
    pub acceptance: f64,
    /// Frozen step after burn-in.
    pub step: f64,
}

/// Samples from independent chains, kept separate for batch-means errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub domain: BoxDomain,
    pub chains: Vec<ChainSamples>,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.chains.iter().map(|c| c.states.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All states, chain by chain.
    pub fn states(&self) -> impl Iterator<Item = &[f64]> {
        self.chains.iter().flat_map(|c| c.states.iter().map(|s| s.as_slice()))
    }

    pub fn configurations(&self) -> impl Iterator<Item = Configuration> + '_ {
        self.states().map(|s| Configuration::from_flat_unchecked(self.domain.clone(), s.to_vec()))
    }

    /// Per-chain series of a scalar observable.
    pub fn series(&self, f: impl Fn(&[f64]) -> f64 + Sync) -> Vec<Vec<f64>> {
        self.chains.par_iter().map(|c| c.states.iter().map(|s| f(s)).collect()).collect()
    }

    pub fn acceptance(&self) -> f64 {
        let n = self.chains.len().max(1) as f64;
        self.chains.iter().map(|c| c.acceptance).sum::<f64>() / n
    }
}

/// Batches per chain so that about [`crate::stats::DEFAULT_BATCHES`] batches
/// are pooled in total.
pub fn batches_per_chain(chains: usize) -> usize {
    (crate::stats::DEFAULT_BATCHES / chains.max(1)).max(2)
}

/// Uniform point in the d-ball of radius `r`.
pub fn uniform_in_ball(rng: &mut Rng, d: usize, r: f64, out: &mut [f64]) {
    if d == 1 {
        out[0] = r * (2.0 * rng.random::<f64>() - 1.0);
        return;
    }
    let mut n2 = 0.0;
    for o in out.iter_mut() {
        *o = rng.sample(StandardNormal);
        n2 += *o * *o;
    }
    let scale = r * rng.random::<f64>().powf(1.0 / d as f64) / n2.sqrt();
    for o in out.iter_mut() {
        *o *= scale;
    }
}

/// Near-lattice starting state: the first N sites of a cubic grid with
/// m = ⌈N^{1/d}⌉ sites per axis, jittered by 10% of a cell.
pub fn lattice_start(domain: &BoxDomain, n: usize, rng: &mut Rng) -> Vec<f64> {
    let d = domain.dim();
    let mut m = 1usize;
    while m.pow(d as u32) < n {
        m += 1;
    }
    let mut out = Vec::with_capacity(n * d);
    for site in 0..n {
        let mut s = site;
        for &l in domain.lengths() {
            let cell = l / m as f64;
            let k = s % m;
            s /= m;
            let jitter = 0.1 * cell * (rng.random::<f64>() - 0.5);
            out.push(((k as f64 + 0.5) * cell + jitter).clamp(0.0, l));
        }
    }
    out
}

/// One Metropolis kernel: pick a particle uniformly, displace it uniformly
/// in a ball of radius `step`, reject if it leaves the box, otherwise accept
/// with probability min(1, π(y)/π(x)).
#[derive(Debug, Clone)]
pub struct MetropolisKernel<'a> {
    pub ens: &'a CanonicalEnsemble,
    pub step: f64,
}

impl MetropolisKernel<'_> {
    /// Proposal density q(x → y) with respect to Lebesgue measure on the
    /// moved coordinate; zero unless x and y differ in exactly one particle.
    /// The ball proposal is folded into the box, so every mirror image of
    /// the new position within the step radius contributes.
    pub fn proposal_density(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.ens.dim();
        let moved: Vec<usize> = (0..self.ens.n).filter(|&i| x[i * d..(i + 1) * d] != y[i * d..(i + 1) * d]).collect();
        if moved.len() != 1 {
            return 0.0;
        }
        let i = moved[0];
        let lengths = self.ens.domain.lengths();
        // Per axis, the signed offsets from x to the images of y that can be
        // within one step (the step never exceeds the side).
        let offsets: Vec<Vec<f64>> = (0..d)
            .map(|a| {
                let (xa, ya, l) = (x[i * d + a], y[i * d + a], lengths[a]);
                [-1.0, 0.0, 1.0]
                    .iter()
                    .flat_map(|k| [ya + 2.0 * k * l, -ya + 2.0 * k * l])
                    .map(|z| z - xa)
                    .filter(|o| o.abs() <= self.step)
                    .collect()
            })
            .collect();
        let mut images = 0usize;
        let mut idx = vec![0usize; d];
        if offsets.iter().any(|o| o.is_empty()) {
            return 0.0;
        }
        loop {
            let r2: f64 = (0..d).map(|a| offsets[a][idx[a]].powi(2)).sum();
            if r2 <= self.step * self.step {
                images += 1;
            }
            let mut a = 0;
            while a < d {
                idx[a] += 1;
                if idx[a] < offsets[a].len() {
                    break;
                }
                idx[a] = 0;
                a += 1;
            }
            if a == d {
                break;
            }
        }
        images as f64 / (self.ens.n as f64 * ball_volume(d) * self.step.powi(d as i32))
    }

    /// Unnormalized target density; zero outside the box.
    pub fn target(&self, x: &[f64]) -> f64 {
        let d = self.ens.dim();
        if x.chunks(d).any(|p| !self.ens.domain.contains(p)) {
            return 0.0;
        }
        self.ens.density_unnormalized(x)
    }

    pub fn acceptance(&self, x: &[f64], y: &[f64]) -> f64 {
        let (px, py) = (self.target(x), self.target(y));
        if py == 0.0 {
            return 0.0;
        }
        if px == 0.0 {
            return 1.0;
        }
        (py / px).min(1.0)
    }

    /// Draws a proposal (particle index, new position): a uniform point in
    /// the step ball, mirror-folded into the box. The fold keeps the
    /// proposal symmetric.
    pub fn propose(&self, rng: &mut Rng, x: &[f64], out: &mut [f64]) -> usize {
        let d = self.ens.dim();
        let i = rng.random_range(0..self.ens.n);
        uniform_in_ball(rng, d, self.step, out);
        for a in 0..d {
            out[a] = fold(out[a] + x[i * d + a], self.ens.domain.lengths()[a]);
        }
        i
    }

    /// One attempted move in place; returns whether it was accepted.
    pub fn step_once(&self, rng: &mut Rng, x: &mut [f64], buf: &mut [f64]) -> bool {
        let d = self.ens.dim();
        let i = self.propose(rng, x, buf);
        if !self.ens.domain.contains(buf) {
            return false;
        }
        let pot = &self.ens.potential;
        let beta = self.ens.beta;
        if beta == 0.0 || pot.is_ideal() {
            x[i * d..(i + 1) * d].copy_from_slice(buf);
            return true;
        }
        let e_new = pot.particle_energy(x, buf, Some(i));
        if e_new == f64::INFINITY {
            return false;
        }
        let e_old = pot.particle_energy(x, &x[i * d..(i + 1) * d], Some(i));
        let de = e_new - e_old;
        let accept = de <= 0.0 || rng.random::<f64>() < (-beta * de).exp();
        if accept {
            x[i * d..(i + 1) * d].copy_from_slice(buf);
        }
        accept
    }

    /// N attempted moves; returns the accept count.
    pub fn sweep(&self, rng: &mut Rng, x: &mut [f64], buf: &mut [f64]) -> usize {
        (0..self.ens.n).filter(|_| self.step_once(rng, x, buf)).count()
    }
}

fn run_chain(ens: &CanonicalEnsemble, p: &McmcParams, chain: usize) -> Result<ChainSamples> {
    let mut rng = rng::stream(p.seed, chain as u64);
    let d = ens.dim();
    let max_step = ens.domain.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut x = lattice_start(&ens.domain, ens.n, &mut rng);
    let mut buf = vec![0.0; d];
    let mut kernel = MetropolisKernel { ens, step: p.step.min(max_step) };
    let attempts = (WINDOW * ens.n) as f64;

    let mut window_acc = 0;
    for s in 1..=p.burn_in {
        window_acc += kernel.sweep(&mut rng, &mut x, &mut buf);
        if s % WINDOW == 0 {
            if window_acc == 0 {
                return Err(Error::MixingFailure { sweeps: s });
            }
            if p.tune {
                let rate = window_acc as f64 / attempts;
                if rate < 0.3 {
                    kernel.step *= 0.8;
                } else if rate > 0.5 {
                    kernel.step = (kernel.step * 1.2).min(max_step);
                }
            }
            window_acc = 0;
        }
    }

    let thin = p.thin.max(1);
    let mut states = Vec::with_capacity(p.sweeps / thin);
    let mut total_acc = 0usize;
    window_acc = 0;
    for s in 1..=p.sweeps {
        let a = kernel.sweep(&mut rng, &mut x, &mut buf);
        window_acc += a;
        total_acc += a;
        if s % WINDOW == 0 {
            if window_acc == 0 {
                return Err(Error::MixingFailure { sweeps: p.burn_in + s });
            }
            window_acc = 0;
        }
        if s % thin == 0 {
            states.push(x.clone());
        }
    }
    let acceptance = total_acc as f64 / (p.sweeps.max(1) * ens.n) as f64;
    Ok(ChainSamples { states, acceptance, step: kernel.step })
}

/// Runs `params.chains` independent chains in parallel; chain c uses random
/// stream (seed, c), so results do not depend on the thread count.
pub fn sample_gibbs(ens: &CanonicalEnsemble, params: &McmcParams) -> Result<SampleSet> {
    if ens.n == 0 {
        return Err(Error::Precondition("sampling needs at least one particle".into()));
    }
    if !(params.step > 0.0) {
        return Err(Error::Precondition(format!("step size must be positive, got {}", params.step)));
    }
    if params.chains == 0 {
        return Err(Error::Precondition("at least one chain is required".into()));
    }
    let chains = (0..params.chains).into_par_iter().map(|c| run_chain(ens, params, c)).collect::<Result<Vec<_>>>()?;
    Ok(SampleSet { domain: ens.domain.clone(), chains })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PairPotentialModel;
    use crate::stats;

    fn soft(n: usize, l: f64) -> CanonicalEnsemble {
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        CanonicalEnsemble::new(n, BoxDomain::cube(1, l).unwrap(), 1.0, pot).unwrap()
    }

    #[test]
    fn ideal_gas_accepts_every_move_and_has_flat_mean() {
        let ens = CanonicalEnsemble::new(3, BoxDomain::cube(2, 2.0).unwrap(), 1.0, PairPotentialModel::ideal_gas(2))
            .unwrap();
        let p = McmcParams { sweeps: 4000, burn_in: 200, step: 0.3, tune: false, chains: 4, seed: 3, thin: 1 };
        let s = sample_gibbs(&ens, &p).unwrap();
        // Folded proposals never leave the box.
        assert_eq!(s.acceptance(), 1.0);
        let series = s.series(|x| x.chunks(2).map(|p| p[0]).sum());
        let m = stats::pooled_batch_means(&series, batches_per_chain(4));
        assert!(m.z_to(3.0).abs() < 3.5, "{m:?}");
    }

    #[test]
    fn reproducible_given_seed() {
        let ens = soft(3, 3.0);
        let p = McmcParams { sweeps: 300, burn_in: 100, chains: 3, seed: 11, ..Default::default() };
        assert_eq!(sample_gibbs(&ens, &p).unwrap(), sample_gibbs(&ens, &p).unwrap());
        let q = McmcParams { seed: 12, ..p.clone() };
        assert_ne!(sample_gibbs(&ens, &p).unwrap(), sample_gibbs(&ens, &q).unwrap());
    }

    #[test]
    fn detailed_balance_on_sampled_pairs() {
        let ens = soft(3, 3.0);
        let k = MetropolisKernel { ens: &ens, step: 0.7 };
        let mut rng = rng::stream(5, 0);
        let mut x = lattice_start(&ens.domain, 3, &mut rng);
        let mut buf = [0.0];
        let mut checked = 0;
        for _ in 0..2000 {
            let i = k.propose(&mut rng, &x, &mut buf);
            let mut y = x.clone();
            y[i] = buf[0];
            let fwd = k.target(&x) * k.proposal_density(&x, &y) * k.acceptance(&x, &y);
            let bwd = k.target(&y) * k.proposal_density(&y, &x) * k.acceptance(&y, &x);
            assert!((fwd - bwd).abs() <= 1e-14 * fwd.max(bwd), "{fwd} {bwd}");
            checked += 1;
            k.step_once(&mut rng, &mut x, &mut buf);
        }
        assert_eq!(checked, 2000);
    }

    #[test]
    fn folded_proposal_is_symmetric_near_walls() {
        let pot = PairPotentialModel::soft_sphere(2, 1.0, 1.0, 12.0).unwrap();
        let ens = CanonicalEnsemble::new(1, BoxDomain::new(vec![1.0, 1.5]).unwrap(), 1.0, pot).unwrap();
        let k = MetropolisKernel { ens: &ens, step: 0.9 };
        let mut rng = rng::stream(9, 0);
        let mut buf = [0.0; 2];
        for _ in 0..2000 {
            let x = [rng.random::<f64>(), 1.5 * rng.random::<f64>()];
            k.propose(&mut rng, &x, &mut buf);
            let (f, b) = (k.proposal_density(&x, &buf), k.proposal_density(&buf, &x));
            assert!(f > 0.0 && (f - b).abs() <= 1e-12 * f, "{x:?} {buf:?} {f} {b}");
        }
    }

    #[test]
    fn frozen_chain_reports_mixing_failure() {
        // At huge β the two particles are pushed against the walls and
        // almost every later proposal is uphill by ~1e6.
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let ens = CanonicalEnsemble::new(2, BoxDomain::cube(1, 1.0).unwrap(), 1e6, pot).unwrap();
        let p = McmcParams { sweeps: 100, burn_in: 2000, step: 0.5, tune: false, chains: 1, seed: 0, thin: 1 };
        assert!(matches!(sample_gibbs(&ens, &p), Err(Error::MixingFailure { .. })));
        assert!(sample_gibbs(&ens, &McmcParams { step: 0.0, ..p }).is_err());
    }
}

//! Partition-function ratios Z^{(N−1)}/Z^{(N)} and the activity
//! z = lim N Z^{(N−1)}/Z^{(N)} along an N/V schedule.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcmc::{batches_per_chain, sample_gibbs, McmcParams};
use super::oracle::partition_oracle;
use super::{CanonicalEnsemble, NVSchedule};
use crate::error::{Error, Result};
use crate::potential::PairPotentialModel;
use crate::rng::{self, derive_seed};
use crate::stats::{self, MeanSe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RatioMethod {
    Oracle { quad_tol: f64 },
    /// Trial insertions into samples of the (N−1)-particle ensemble.
    WidomInsertion { mcmc: McmcParams, insertions: usize },
}

/// Z^{(N−1)}/Z^{(N)} with its standard error (quadrature error bound for the
/// oracle).
pub fn partition_ratio(ens: &CanonicalEnsemble, method: &RatioMethod) -> Result<MeanSe> {
    if ens.n == 0 {
        return Err(Error::Precondition("partition ratio needs N ≥ 1".into()));
    }
    let vol = ens.domain.volume();
    if ens.n == 1 {
        // Z^{(0)} = 1 and Z^{(1)} = |Λ| for every pair potential.
        return Ok(MeanSe::new(1.0 / vol, 0.0));
    }
    match method {
        RatioMethod::Oracle { quad_tol } => {
            let a = partition_oracle(&ens.with_n(ens.n - 1), *quad_tol)?;
            let b = partition_oracle(ens, *quad_tol)?;
            let r = a.value / b.value;
            Ok(MeanSe::new(r, r * (a.error / a.value + b.error / b.value)))
        }
        RatioMethod::WidomInsertion { mcmc, insertions } => {
            let w = widom_weight(ens, mcmc, *insertions)?;
            let r = 1.0 / (vol * w.mean);
            Ok(MeanSe::new(r, r * w.se / w.mean))
        }
    }
}

/// E_{N−1}[exp(−β ΔE)] for a uniformly inserted particle, which equals
/// Z^{(N)}/(|Λ| Z^{(N−1)}).
pub fn widom_weight(ens: &CanonicalEnsemble, mcmc: &McmcParams, insertions: usize) -> Result<MeanSe> {
    let host = ens.with_n(ens.n - 1);
    if ens.beta == 0.0 || ens.potential.is_ideal() {
        return Ok(MeanSe::new(1.0, 0.0));
    }
    let samples = sample_gibbs(&host, mcmc)?;
    let d = ens.dim();
    let lengths = ens.domain.lengths().to_vec();
    let k = insertions.max(1);
    let insert_seed = derive_seed(mcmc.seed, 0x5749_444f_4d);
    let series: Vec<Vec<f64>> = samples
        .chains
        .par_iter()
        .enumerate()
        .map(|(c, chain)| {
            let mut r = rng::stream(insert_seed, c as u64);
            let mut p = vec![0.0; d];
            chain
                .states
                .iter()
                .map(|x| {
                    let mut acc = 0.0;
                    for _ in 0..k {
                        for (pa, l) in p.iter_mut().zip(&lengths) {
                            *pa = r.random::<f64>() * l;
                        }
                        acc += ens.boltzmann(ens.potential.particle_energy(x, &p, None));
                    }
                    acc / k as f64
                })
                .collect()
        })
        .collect();
    let w = stats::pooled_batch_means(&series, batches_per_chain(series.len()));
    if !(w.mean > 0.0) {
        return Err(Error::DegenerateInsertion);
    }
    Ok(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityEntry {
    pub n: usize,
    pub volume: f64,
    /// N_j/|Λ_j|.
    pub density: f64,
    /// Z^{(N−1)}/Z^{(N)}.
    pub ratio: MeanSe,
    /// z_j = N_j Z^{(N_j−1)}/Z^{(N_j)}.
    pub z: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityEstimate {
    pub entries: Vec<ActivityEntry>,
    /// Intercept of z_j = z_∞ + a/N_j; the last entry when fewer than three
    /// entries are available.
    pub limit: MeanSe,
    /// Fitted a (NaN without a fit).
    pub slope: f64,
    /// max_j |Λ_j| Z^{(N_j−1)}/Z^{(N_j)}: the smallest C₁ with
    /// Z^{(N−1)}/Z^{(N)} ≤ C₁/|Λ| along the schedule.
    pub domination_constant: f64,
}

/// z_j for every schedule entry plus the 1/N extrapolation. Monte Carlo
/// methods use an independent seed per entry.
pub fn estimate_activity(
    schedule: &NVSchedule,
    beta: f64,
    potential: &PairPotentialModel,
    method: &RatioMethod,
) -> Result<ActivityEstimate> {
    let mut entries = Vec::with_capacity(schedule.entries.len());
    for j in 0..schedule.entries.len() {
        let ens = schedule.ensemble(j, beta, potential)?;
        let m = match method {
            RatioMethod::WidomInsertion { mcmc, insertions } => RatioMethod::WidomInsertion {
                mcmc: McmcParams { seed: derive_seed(mcmc.seed, j as u64), ..mcmc.clone() },
                insertions: *insertions,
            },
            other => other.clone(),
        };
        let ratio = partition_ratio(&ens, &m)?;
        let nf = ens.n as f64;
        let volume = ens.domain.volume();
        entries.push(ActivityEntry {
            n: ens.n,
            volume,
            density: nf / volume,
            ratio,
            z: MeanSe::new(nf * ratio.mean, nf * ratio.se),
        });
    }
    let domination_constant = entries.iter().map(|e| e.ratio.mean * e.volume).fold(0.0, f64::max);
    let (limit, slope) = extrapolate(&entries);
    Ok(ActivityEstimate { entries, limit, slope, domination_constant })
}

/// OLS of z_j on 1/N_j. The intercept error combines the propagated
/// statistical errors with the fit residual error.
fn extrapolate(entries: &[ActivityEntry]) -> (MeanSe, f64) {
    let last = entries.last().expect("schedule is nonempty").z;
    if entries.len() < 3 {
        return (last, f64::NAN);
    }
    let x: Vec<f64> = entries.iter().map(|e| 1.0 / e.n as f64).collect();
    let y: Vec<f64> = entries.iter().map(|e| e.z.mean).collect();
    let Some(fit) = stats::linear_fit(&x, &y) else {
        return (last, f64::NAN);
    };
    let n = x.len() as f64;
    let mx = stats::mean(&x);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let stat: f64 = entries
        .iter()
        .zip(&x)
        .map(|(e, xi)| {
            let c = 1.0 / n - mx * (xi - mx) / sxx;
            (c * e.z.se).powi(2)
        })
        .sum();
    let se = (stat + fit.intercept_se.powi(2)).sqrt();
    (MeanSe::new(fit.intercept, se), fit.slope)
}

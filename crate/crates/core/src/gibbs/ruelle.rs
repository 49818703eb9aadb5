//! Ruelle-bound diagnostics along a schedule and the Kirkwood–Salsburg
//! identity for small systems.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mcmc::{batches_per_chain, sample_gibbs, McmcParams};
use super::oracle::{axis_breaks, tolerance, Oracle, CORRELATION_DIM_CAP};
use super::ratio::{partition_ratio, RatioMethod};
use super::{CanonicalEnsemble, NVSchedule};
use crate::configspace::BoxDomain;
use crate::error::{Error, Result};
use crate::potential::PairPotentialModel;
use crate::quadrature;
use crate::rng::{self, derive_seed};
use crate::stats::{self, MeanSe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuelleParams {
    /// Entries with N·d at most this use quadrature; larger ones use Monte
    /// Carlo.
    pub oracle_cap: usize,
    pub quad_tol: f64,
    pub mcmc: McmcParams,
    pub insertions: usize,
    /// Pair separations of the evaluation grid; empty means the default
    /// log-spaced grid from 1e−3 σ to L/2.
    pub separations: Vec<f64>,
    pub grid_points: usize,
}

impl Default for RuelleParams {
    fn default() -> Self {
        RuelleParams {
            oracle_cap: 3,
            quad_tol: 1e-8,
            mcmc: McmcParams { sweeps: 10_000, burn_in: 1_000, ..Default::default() },
            insertions: 8,
            separations: Vec::new(),
            grid_points: 24,
        }
    }
}

/// Log-spaced separations from `1e-3 σ` to `L/2` inclusive.
pub fn default_separations(domain: &BoxDomain, sigma: f64, points: usize) -> Vec<f64> {
    let lmin = domain.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let (a, b) = ((1e-3 * sigma).ln(), (0.5 * lmin).ln());
    let m = points.max(2);
    (0..m).map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp()).collect()
}

/// Evaluation tuples: for n = 1 points along the box diagonal; for n ≥ 2
/// collinear points along the first axis centred in the box with consecutive
/// spacing r (separations that do not fit are skipped).
pub fn ruelle_points(domain: &BoxDomain, n: usize, separations: &[f64]) -> Vec<Vec<f64>> {
    let c = domain.center();
    let l = domain.lengths();
    if n == 1 {
        let m = separations.len().max(2);
        return (0..m).map(|i| l.iter().map(|li| li * (i as f64 + 0.5) / m as f64).collect()).collect();
    }
    let mut out = Vec::new();
    for &r in separations {
        let span = r * (n - 1) as f64;
        if span > l[0] {
            continue;
        }
        let mut x = Vec::with_capacity(n * c.len());
        for k in 0..n {
            let mut p = c.clone();
            p[0] = c[0] - span / 2.0 + r * k as f64;
            x.extend(p);
        }
        out.push(x);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuellePoint {
    pub x: Vec<f64>,
    /// k^{(n,N)}(x).
    pub k: f64,
    /// k^{(n,N)}(x) exp((2/n) β Σ_{i<j} φ(x_i − x_j)).
    pub k_improved: MeanSe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuelleEntry {
    pub n_particles: usize,
    pub volume: f64,
    pub order: usize,
    /// "oracle" or "monte-carlo".
    pub method: String,
    /// max over the grid of k^{1/n}.
    pub xi: f64,
    /// max over the grid of (k exp((2/n)βE))^{1/n}.
    pub zeta: f64,
    pub points: Vec<RuellePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSummary {
    pub order: usize,
    pub zeta_min: f64,
    pub zeta_max: f64,
    /// ζ̂ finite for every entry and max/min < 3.
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuelleReport {
    pub entries: Vec<RuelleEntry>,
    pub summary: Vec<OrderSummary>,
}

/// Ruelle and improved-Ruelle estimates per schedule entry and order.
pub fn verify_ruelle_bound(
    schedule: &NVSchedule,
    beta: f64,
    potential: &PairPotentialModel,
    orders: &[usize],
    params: &RuelleParams,
) -> Result<RuelleReport> {
    let mut entries = Vec::new();
    for j in 0..schedule.entries.len() {
        let ens = schedule.ensemble(j, beta, potential)?;
        let seps = if params.separations.is_empty() {
            default_separations(&ens.domain, potential.length_scale(), params.grid_points)
        } else {
            params.separations.clone()
        };
        let seed = derive_seed(params.mcmc.seed, j as u64);
        for &n in orders {
            entries.push(ruelle_entry(&ens, n, &seps, params, seed)?);
        }
    }
    let mut summary = Vec::new();
    for &n in orders {
        let z: Vec<f64> = entries.iter().filter(|e| e.order == n).map(|e| e.zeta).collect();
        let zmin = z.iter().cloned().fold(f64::INFINITY, f64::min);
        let zmax = z.iter().cloned().fold(0.0, f64::max);
        let stable = z.iter().all(|v| v.is_finite()) && (zmax == 0.0 || (zmin > 0.0 && zmax / zmin < 3.0));
        summary.push(OrderSummary { order: n, zeta_min: zmin, zeta_max: zmax, stable });
    }
    Ok(RuelleReport { entries, summary })
}

fn ruelle_entry(ens: &CanonicalEnsemble, n: usize, seps: &[f64], params: &RuelleParams, seed: u64) -> Result<RuelleEntry> {
    let pts = ruelle_points(&ens.domain, n, seps);
    let d = ens.dim();
    let use_oracle = ens.n * d <= params.oracle_cap && ens.n.saturating_sub(n) * d <= CORRELATION_DIM_CAP;
    let reduced: Vec<MeanSe> = if n > ens.n {
        vec![MeanSe::new(0.0, 0.0); pts.len()]
    } else if use_oracle {
        let o = Oracle::new(ens.clone(), params.quad_tol)?;
        pts.iter()
            .map(|x| o.correlation_reduced(n, x).map(|e| MeanSe::new(e.value, e.error)))
            .collect::<Result<_>>()?
    } else {
        reduced_correlation_mc(ens, n, &pts, params, seed)?
    };
    let mut points = Vec::with_capacity(pts.len());
    let (mut xi, mut zeta) = (0.0f64, 0.0f64);
    let inv = 1.0 / n as f64;
    for (x, r) in pts.into_iter().zip(reduced) {
        let e = ens.potential.points_energy(&x);
        let k = if e == f64::INFINITY { 0.0 } else { r.mean * ens.boltzmann(e) };
        // k e^{(2/n)βE} = (k e^{βE}) e^{(2/n − 1)βE}.
        let f = if n == 2 || e == 0.0 { 1.0 } else { (ens.beta * e * (2.0 * inv - 1.0)).exp() };
        let ki = MeanSe::new(r.mean * f, r.se * f);
        xi = xi.max(k.powf(inv));
        zeta = zeta.max(ki.mean.powf(inv));
        points.push(RuellePoint { x, k, k_improved: ki });
    }
    Ok(RuelleEntry {
        n_particles: ens.n,
        volume: ens.domain.volume(),
        order: n,
        method: if use_oracle || n > ens.n { "oracle" } else { "monte-carlo" }.into(),
        xi,
        zeta,
        points,
    })
}

/// k^{(n,N)}(X) e^{βE(X)} = N!/(N−n)! · Π_{m=N−n+1}^{N} Z^{(m−1)}/Z^{(m)}
/// · E_{N−n}[exp(−β W(X, Y))], with the ratios by Widom insertion and the
/// expectation over Metropolis samples of the (N−n)-particle ensemble.
fn reduced_correlation_mc(
    ens: &CanonicalEnsemble,
    n: usize,
    pts: &[Vec<f64>],
    params: &RuelleParams,
    seed: u64,
) -> Result<Vec<MeanSe>> {
    let mut prefactor = 1.0;
    let mut rel2 = 0.0;
    for m in (ens.n - n + 1)..=ens.n {
        let method = RatioMethod::WidomInsertion {
            mcmc: McmcParams { seed: derive_seed(seed, m as u64), ..params.mcmc.clone() },
            insertions: params.insertions,
        };
        let r = partition_ratio(&ens.with_n(m), &method)?;
        prefactor *= m as f64 * r.mean;
        rel2 += (r.se / r.mean).powi(2);
    }
    let rest = ens.n - n;
    if rest == 0 {
        return Ok(vec![MeanSe::new(prefactor, prefactor * rel2.sqrt()); pts.len()]);
    }
    let host = ens.with_n(rest);
    let mcmc = McmcParams { seed: derive_seed(seed, 0x484f_5354), ..params.mcmc.clone() };
    let samples = sample_gibbs(&host, &mcmc)?;
    let bpc = batches_per_chain(samples.chains.len());
    pts.iter()
        .map(|x| {
            let series = samples.series(|y| {
                let w: f64 = x.chunks(ens.dim()).map(|p| ens.potential.particle_energy(y, p, None)).sum();
                ens.boltzmann(w)
            });
            let m = stats::pooled_batch_means(&series, bpc);
            let v = prefactor * m.mean;
            let se = if m.mean > 0.0 { v * (rel2 + (m.se / m.mean).powi(2)).sqrt() } else { prefactor * m.se };
            Ok(MeanSe::new(v, se))
        })
        .collect()
}

/// |LHS − RHS|/|LHS| of the Kirkwood–Salsburg identity
///
/// k^{(n,N)}(x_1..x_n) = N Z^{(N−1)}/Z^{(N)} e^{−β Σ_{i≥2} φ(x_1 − x_i)}
///   [k^{(n−1,N−1)}(x_2..x_n) + Σ_{k=1}^{N−n} (1/k!) ∫_{Λ^k}
///    k^{(n+k−1,N−1)}(x_2..x_n, y_1..y_k) Π_i (e^{−βφ(x_1 − y_i)} − 1) dy]
///
/// with every ingredient by quadrature.
pub fn kirkwood_salsburg_residual(ens: &CanonicalEnsemble, n: usize, points: &[Vec<f64>], quad_tol: f64) -> Result<Vec<f64>> {
    if n == 0 || n > ens.n {
        return Err(Error::Precondition(format!("order must satisfy 1 ≤ n ≤ N, got n = {n}, N = {}", ens.n)));
    }
    let d = ens.dim();
    let big = Oracle::new(ens.clone(), quad_tol)?;
    let small = Oracle::new(ens.with_n(ens.n - 1), quad_tol * 0.1)?;
    let ratio = small.partition().value / big.partition().value;
    let pot = &ens.potential;
    let tol = tolerance(quad_tol * 0.1);
    points
        .iter()
        .map(|x| {
            let lhs = big.correlation(n, x)?.value;
            let (x1, rest) = x.split_at(d);
            let w1: f64 = rest.chunks(d).map(|p| pot.pair(x1, p)).sum();
            let mut bracket = small.correlation(n - 1, rest)?.value;
            for k in 1..=(ens.n - n) {
                let lo = vec![0.0; k * d];
                let hi: Vec<f64> = (0..k).flat_map(|_| ens.domain.lengths().to_vec()).collect();
                let failed = std::cell::Cell::new(None);
                let f = |y: &[f64]| {
                    let mayer: f64 = y.chunks(d).map(|p| (-ens.beta * pot.pair(x1, p)).exp_m1()).product();
                    if mayer == 0.0 {
                        return 0.0;
                    }
                    let mut args = rest.to_vec();
                    args.extend_from_slice(y);
                    match small.correlation(n + k - 1, &args) {
                        Ok(e) => mayer * e.value,
                        Err(err) => {
                            failed.set(Some(err));
                            f64::NAN
                        }
                    }
                };
                let breaks = |axis: usize, outer: &[f64]| {
                    let mut placed = x.to_vec();
                    placed.extend_from_slice(&outer[..axis - axis % d]);
                    axis_breaks(ens, &placed)
                };
                let r = quadrature::integrate_box(f, &lo, &hi, &breaks, &tol);
                if let Some(err) = failed.take() {
                    return Err(err);
                }
                let fact: f64 = (1..=k).map(|i| i as f64).product();
                bracket += r?.value / fact;
            }
            let rhs = ens.n as f64 * ratio * ens.boltzmann(w1) * bracket;
            Ok(if lhs != 0.0 { ((lhs - rhs) / lhs).abs() } else { rhs.abs() })
        })
        .collect()
}

/// Uniform random evaluation tuples in the box (for residual sweeps).
pub fn random_points(domain: &BoxDomain, n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, 0);
    (0..count)
        .map(|_| (0..n).flat_map(|_| domain.lengths().iter().map(|l| r.random::<f64>() * l).collect::<Vec<_>>()).collect())
        .collect()
}

/// Residuals at many points in parallel.
pub fn kirkwood_salsburg_sweep(ens: &CanonicalEnsemble, n: usize, points: &[Vec<f64>], quad_tol: f64) -> Result<Vec<f64>> {
    let chunks: Vec<Vec<f64>> = points
        .par_chunks(1)
        .map(|c| kirkwood_salsburg_residual(ens, n, c, quad_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(chunks.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_gas_bound_and_ks() {
        let pot = PairPotentialModel::ideal_gas(1);
        let s = NVSchedule::cubic(0.5, 1, &[2, 3, 4]).unwrap();
        let rep = verify_ruelle_bound(&s, 1.0, &pot, &[1, 2], &RuelleParams::default()).unwrap();
        for e in rep.entries.iter().filter(|e| e.order == 1) {
            assert!((e.xi - 0.5).abs() < 1e-8);
        }
        let ens = s.ensemble(1, 1.0, &pot).unwrap();
        let r = kirkwood_salsburg_residual(&ens, 1, &[vec![1.3]], 1e-10).unwrap();
        assert!(r[0] < 1e-12);
    }

    #[test]
    fn order_above_n_is_zero() {
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let s = NVSchedule::cubic(0.5, 1, &[2]).unwrap();
        let rep = verify_ruelle_bound(&s, 1.0, &pot, &[3], &RuelleParams::default()).unwrap();
        assert_eq!(rep.entries[0].zeta, 0.0);
    }

    #[test]
    fn ks_two_soft_spheres() {
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let ens = CanonicalEnsemble::new(2, BoxDomain::cube(1, 3.0).unwrap(), 1.0, pot).unwrap();
        let r = kirkwood_salsburg_residual(&ens, 1, &[vec![0.4], vec![1.7]], 1e-10).unwrap();
        assert!(r.iter().all(|v| *v < 1e-6), "{r:?}");
        let r = kirkwood_salsburg_residual(&ens, 2, &[vec![0.4, 1.9]], 1e-10).unwrap();
        assert!(r[0] < 1e-6, "{r:?}");
    }
}

//! Moment expansions of pair sums and the second moment of the pair
//! statistic S^{sΦ,h}.
//!
//! (Σ_{{x,y}⊂γ} f(x,y))^p = Σ_{n=2}^{2p} Σ_{|S|=n, S⊂γ} f^{[n,p]}(S) where
//! f^{[n,p]}(S) sums Π_i f(P_i) over all ordered p-tuples of pairs
//! (P_1, …, P_p) whose union is exactly S. A product of pairs that covers S
//! is counted once per ordering, e.g. f^{[4,2]} = 2(f₁₂f₃₄ + f₁₃f₂₄ + f₁₄f₂₃).

use serde::{Deserialize, Serialize};

use crate::configspace::metric::default_h;
use crate::configspace::{Configuration, MetricFamily};
use crate::error::{Error, Result};
use crate::gibbs::mcmc::{batches_per_chain, sample_gibbs, McmcParams};
use crate::gibbs::oracle::{axis_breaks, tolerance};
use crate::gibbs::{CanonicalEnsemble, Oracle};
use crate::potential::distance;
use crate::quadrature::{self, Estimate};
use crate::stats::{self, MeanSe};

/// The ordered pair-tuples covering {0, …, n−1} exactly, for power p.
#[derive(Debug, Clone, PartialEq)]
pub struct Bracket {
    pub n: usize,
    pub p: usize,
    pub patterns: Vec<Vec<(usize, usize)>>,
}

impl Bracket {
    pub fn new(n: usize, p: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
        let mut patterns = Vec::new();
        let mut idx = vec![0usize; p];
        let total = pairs.len().pow(p as u32);
        for mut code in 0..total {
            for slot in idx.iter_mut() {
                *slot = code % pairs.len();
                code /= pairs.len();
            }
            let mut covered = 0u32;
            for &i in &idx {
                covered |= 1 << pairs[i].0 | 1 << pairs[i].1;
            }
            if covered == (1u32 << n) - 1 {
                patterns.push(idx.iter().map(|&i| pairs[i]).collect());
            }
        }
        Bracket { n, p, patterns }
    }

    /// f^{[n,p]} given the symmetric pair values as an n×n matrix.
    pub fn eval(&self, f: &[f64]) -> f64 {
        self.patterns.iter().map(|pat| pat.iter().map(|&(a, b)| f[a * self.n + b]).product::<f64>()).sum()
    }

    /// Σ over patterns of an arbitrary per-pattern term.
    pub fn sum_terms(&self, mut term: impl FnMut(&[(usize, usize)]) -> f64) -> f64 {
        self.patterns.iter().map(|pat| term(pat)).sum()
    }
}

/// Index subsets of {0, …, m−1} of size k in lexicographic order.
fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    rec(0, m, k, &mut cur, &mut out);
    out
}

fn check_power(power: usize) -> Result<()> {
    if power == 2 || power == 3 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("power must be 2 or 3, got {power}")))
    }
}

/// (Σ_{{x,y}⊂γ} f(x,y))^power via the f^{[n,power]} expansion.
pub fn pair_moment_expansion(f: &dyn Fn(&[f64], &[f64]) -> f64, gamma: &Configuration, power: usize) -> Result<f64> {
    check_power(power)?;
    let m = gamma.len();
    let mut fm = vec![0.0; m * m];
    for a in 0..m {
        for b in a + 1..m {
            let v = f(gamma.point(a), gamma.point(b));
            fm[a * m + b] = v;
            fm[b * m + a] = v;
        }
    }
    let mut total = 0.0;
    for n in 2..=(2 * power).min(m) {
        let br = Bracket::new(n, power);
        let mut sub = vec![0.0; n * n];
        for s in subsets(m, n) {
            for i in 0..n {
                for j in 0..n {
                    sub[i * n + j] = fm[s[i] * m + s[j]];
                }
            }
            total += br.eval(&sub);
        }
    }
    Ok(total)
}

/// (Σ_{{x,y}⊂γ} f(x,y))^power summed directly.
pub fn pair_power_direct(f: &dyn Fn(&[f64], &[f64]) -> f64, gamma: &Configuration, power: usize) -> f64 {
    let m = gamma.len();
    let mut s = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            s += f(gamma.point(a), gamma.point(b));
        }
    }
    s.powi(power as i32)
}

/// One-particle weight of the pair statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    /// h(x) = (1 + |x|²)^{−(d+1)/2}
    #[default]
    Default,
    /// h ≡ 1
    Unit,
}

impl Weight {
    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Weight::Default => default_h(x),
            Weight::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MomentMethod {
    Mcmc { sweeps: usize, burn_in: usize, chains: usize, seed: u64 },
    CorrelationQuadrature { quad_tol: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub value: f64,
    /// Standard error (Monte Carlo) or quadrature error bound.
    pub error: f64,
    /// Per-order contributions (1/n!)∫f^{[n,2]}k^{(n,N)} for the quadrature
    /// method, indexed from n = 2.
    pub terms: Vec<f64>,
}

/// S(γ) = Σ_{{x,y}⊂γ} exp(sΦ(|x−y|)) h(x) h(y) on flat coordinates.
fn s_statistic(coords: &[f64], d: usize, fam: &MetricFamily, weight: Weight) -> f64 {
    let n = coords.len() / d;
    let h: Vec<f64> = coords.chunks(d).map(|x| weight.value(x)).collect();
    let mut s = 0.0;
    for a in 0..n {
        for b in a + 1..n {
            let r = distance(&coords[a * d..(a + 1) * d], &coords[b * d..(b + 1) * d]);
            s += (fam.scale * fam.phi.value(r)).exp() * h[a] * h[b];
        }
    }
    s
}

/// E_μ[(S^{sΦ,h})²] under the canonical ensemble.
pub fn s_statistic_moment(ens: &CanonicalEnsemble, fam: &MetricFamily, weight: Weight, method: MomentMethod) -> Result<MomentEstimate> {
    if fam.dim != ens.dim() {
        return Err(Error::DimensionMismatch { expected: ens.dim(), found: fam.dim });
    }
    let d = ens.dim();
    match method {
        MomentMethod::Mcmc { sweeps, burn_in, chains, seed } => {
            let p = McmcParams { sweeps, burn_in, chains, seed, ..Default::default() };
            let s = sample_gibbs(ens, &p)?;
            let series = s.series(|x| s_statistic(x, d, fam, weight).powi(2));
            let m = stats::pooled_batch_means(&series, batches_per_chain(series.len()));
            Ok(MomentEstimate { value: m.mean, error: m.se, terms: Vec::new() })
        }
        MomentMethod::CorrelationQuadrature { quad_tol } => {
            let oracle = Oracle::new(ens.clone(), quad_tol)?;
            let mut terms = Vec::new();
            let mut total = Estimate { value: 0.0, error: 0.0 };
            let mut fact = 1.0;
            for n in 2..=4 {
                fact *= n as f64;
                if n > ens.n {
                    terms.push(0.0);
                    continue;
                }
                let e = order_term(&oracle, fam, weight, n, quad_tol)?;
                terms.push(e.value / fact);
                total.value += e.value / fact;
                total.error += e.error / fact;
            }
            Ok(MomentEstimate { value: total.value, error: total.error, terms })
        }
    }
}

/// ∫_{Λ^n} f^{[n,2]}(x) k^{(n,N)}(x) dx, with the Boltzmann factor of the
/// n fixed points folded into each product in log space.
fn order_term(oracle: &Oracle, fam: &MetricFamily, weight: Weight, n: usize, quad_tol: f64) -> Result<Estimate> {
    let ens = oracle.ensemble();
    let d = ens.dim();
    let br = Bracket::new(n, 2);
    let pot = &ens.potential;
    let failure = std::cell::Cell::new(None);
    let f = |x: &[f64]| -> f64 {
        let red = match oracle.correlation_reduced(n, x) {
            Ok(e) => e.value,
            Err(e) => {
                failure.set(Some(e));
                return 0.0;
            }
        };
        if red == 0.0 {
            return 0.0;
        }
        let be = ens.beta * pot.points_energy(x);
        if be == f64::INFINITY {
            return 0.0;
        }
        let h: Vec<f64> = x.chunks(d).map(|p| weight.value(p)).collect();
        let mut log_f = vec![0.0; n * n];
        for a in 0..n {
            for b in a + 1..n {
                let r = distance(&x[a * d..(a + 1) * d], &x[b * d..(b + 1) * d]);
                log_f[a * n + b] = fam.scale * fam.phi.value(r);
            }
        }
        red * br.sum_terms(|pat| {
            let expo: f64 = pat.iter().map(|&(a, b)| log_f[a * n + b]).sum::<f64>() - be;
            let hp: f64 = pat.iter().map(|&(a, b)| h[a] * h[b]).product();
            if hp == 0.0 {
                0.0
            } else {
                expo.exp() * hp
            }
        })
    };
    let lo = vec![0.0; n * d];
    let hi: Vec<f64> = (0..n).flat_map(|_| ens.domain.lengths().iter().cloned()).collect();
    let breaks = |axis: usize, outer: &[f64]| axis_breaks(ens, &outer[..axis - axis % d]);
    let e = quadrature::integrate_box(f, &lo, &hi, &breaks, &tolerance(quad_tol))?;
    if let Some(err) = failure.take() {
        return Err(err);
    }
    Ok(e)
}

/// Both estimates of E[(S)²] and their discrepancy in combined standard
/// errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentComparison {
    pub mcmc: MomentEstimate,
    pub quadrature: MomentEstimate,
    pub z: f64,
    pub agree: bool,
}

pub fn compare_s_moment(
    ens: &CanonicalEnsemble,
    fam: &MetricFamily,
    weight: Weight,
    mcmc: MomentMethod,
    quad: MomentMethod,
) -> Result<MomentComparison> {
    let a = s_statistic_moment(ens, fam, weight, mcmc)?;
    let b = s_statistic_moment(ens, fam, weight, quad)?;
    let z = MeanSe::new(a.value, a.error).z_against(&MeanSe::new(b.value, b.error));
    Ok(MomentComparison { mcmc: a, quadrature: b, z, agree: z <= 3.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::{BoxDomain, PhiFunction};
    use crate::potential::PairPotentialModel;

    #[test]
    fn bracket_counts() {
        // (number of pairs)^p splits by union size.
        for (m, p) in [(4usize, 2usize), (6, 3), (5, 3)] {
            let total: usize = (2..=m).map(|n| Bracket::new(n, p).patterns.len() * subsets(m, n).len()).sum();
            assert_eq!(total, (m * (m - 1) / 2).pow(p as u32));
        }
        assert_eq!(Bracket::new(2, 2).patterns.len(), 1);
        assert_eq!(Bracket::new(3, 2).patterns.len(), 6);
        assert_eq!(Bracket::new(4, 2).patterns.len(), 6);
        assert_eq!(Bracket::new(6, 3).patterns.len(), 90);
    }

    #[test]
    fn expansion_matches_direct() {
        let dom = BoxDomain::cube(2, 4.0).unwrap();
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![0.3 + 0.7 * i as f64, 3.5 - 0.6 * i as f64]).collect();
        let g = Configuration::sym(dom, &pts).unwrap();
        let f = |x: &[f64], y: &[f64]| (x[0] * y[0]).sin() + x[1] + y[1];
        for p in [2, 3] {
            let a = pair_moment_expansion(&f, &g, p).unwrap();
            let b = pair_power_direct(&f, &g, p);
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
        assert!(pair_moment_expansion(&f, &g, 4).is_err());
    }

    #[test]
    fn ideal_gas_unit_weight_is_exact() {
        let dom = BoxDomain::cube(1, 3.0).unwrap();
        let ens = CanonicalEnsemble::new(3, dom, 1.0, PairPotentialModel::ideal_gas(1)).unwrap();
        let fam = MetricFamily::with_phi(1, 1.0, PhiFunction::Zero, 1).unwrap();
        let q = s_statistic_moment(&ens, &fam, Weight::Unit, MomentMethod::CorrelationQuadrature { quad_tol: 1e-9 }).unwrap();
        assert!((q.value - 9.0).abs() < 1e-7, "{q:?}");
        assert!((q.terms[0] - 3.0).abs() < 1e-7 && (q.terms[1] - 6.0).abs() < 1e-7 && q.terms[2] == 0.0);
    }

    #[test]
    fn two_particles_single_pair() {
        let dom = BoxDomain::cube(1, 2.0).unwrap();
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let ens = CanonicalEnsemble::new(2, dom, 1.0, pot).unwrap();
        let fam = MetricFamily::new(1, 1.0).unwrap();
        let q = s_statistic_moment(&ens, &fam, Weight::Default, MomentMethod::CorrelationQuadrature { quad_tol: 1e-8 }).unwrap();
        assert_eq!(q.terms[1], 0.0);
        let m = s_statistic_moment(
            &ens,
            &fam,
            Weight::Default,
            MomentMethod::Mcmc { sweeps: 20_000, burn_in: 1000, chains: 4, seed: 3 },
        )
        .unwrap();
        assert!(MeanSe::new(m.value, m.error).z_to(q.value) < 3.5, "{m:?} {q:?}");
    }
}

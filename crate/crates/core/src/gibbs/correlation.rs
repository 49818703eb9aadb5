//! Histogram estimators of correlation functions.
//!
//! A bin b is a symmetric region of Λ^n. With m_b the mean number of
//! unordered n-subsets of a sample that fall in b, the estimate is
//! k̂_b = n! m_b / |R_b| where R_b is the set of ordered tuples in b, so the
//! defining identity E Σ_{subsets} 1_b = (1/n!) ∫_{R_b} k holds for the
//! estimate by construction.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::mcmc::{batches_per_chain, SampleSet};
use crate::configspace::BoxDomain;
use crate::error::{Error, Result};
use crate::potential::distance;
use crate::quadrature::{self, Tolerance};
use crate::stats::{self, MeanSe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CorrelationGrid {
    /// Pair-distance shells `[edges[i], edges[i+1])` (order 2 only).
    PairDistance { edges: Vec<f64> },
    /// `per_axis^d` equal cells; a bin is a multiset of n cells.
    Cells { per_axis: usize },
}

impl CorrelationGrid {
    /// `bins` equal shells from 0 to `r_max`.
    pub fn pair_distance(r_max: f64, bins: usize) -> Self {
        let edges = (0..=bins).map(|i| r_max * i as f64 / bins as f64).collect();
        CorrelationGrid::PairDistance { edges }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BinLabel {
    Distance { lo: f64, hi: f64 },
    /// Sorted linear cell indices.
    Cells { cells: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBin {
    pub label: BinLabel,
    /// Lebesgue measure of the ordered region.
    pub measure: f64,
    pub value: f64,
    pub se: f64,
    /// Total subsets counted over all samples.
    pub count: u64,
    /// No subset ever fell in this bin.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub order: usize,
    pub grid: CorrelationGrid,
    pub bins: Vec<CorrelationBin>,
    pub samples: usize,
    /// (1/n!) Σ_b k̂_b |R_b|: mean number of n-subsets covered by the grid.
    pub total: MeanSe,
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|i| i as f64).product()
}

/// |{(x, y) ∈ Λ² : lo ≤ |x − y| < hi}|.
pub fn pair_shell_measure(domain: &BoxDomain, lo: f64, hi: f64) -> Result<f64> {
    let l = domain.lengths();
    let d = l.len();
    let diam = l.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (a, b) = (lo.max(0.0), hi.min(diam));
    if b <= a {
        return Ok(0.0);
    }
    if d == 1 {
        let (a, b) = (a.min(l[0]), b.min(l[0]));
        return Ok((l[0] - a).powi(2) - (l[0] - b).powi(2));
    }
    // ∫_a^b ρ^{d−1} ∫_{S^{d−1}} Π_i (L_i − ρ|ω_i|)_+ dω dρ, integrated over
    // the positive orthant and multiplied by 2^d.
    let tol = Tolerance::relative(1e-10).with_abs(1e-14);
    let cov = |rho: f64, w: &[f64]| w.iter().zip(l).map(|(wi, li)| (li - rho * wi).max(0.0)).product::<f64>();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let e = match d {
        2 => {
            let f = |v: &[f64]| {
                let (rho, t) = (v[0], v[1]);
                rho * cov(rho, &[t.cos(), t.sin()])
            };
            let breaks = |axis: usize, outer: &[f64]| {
                if axis == 0 {
                    return rho_breaks(l);
                }
                let rho = outer[0];
                let mut t = Vec::new();
                if l[0] < rho {
                    t.push((l[0] / rho).acos());
                }
                if l[1] < rho {
                    t.push((l[1] / rho).asin());
                }
                t
            };
            quadrature::integrate_box(f, &[a, 0.0], &[b, half_pi], &breaks, &tol)?
        }
        3 => {
            let f = |v: &[f64]| {
                let (rho, t, p) = (v[0], v[1], v[2]);
                let w = [t.sin() * p.cos(), t.sin() * p.sin(), t.cos()];
                rho * rho * t.sin() * cov(rho, &w)
            };
            let breaks = |axis: usize, outer: &[f64]| {
                if axis == 0 {
                    return rho_breaks(l);
                }
                let rho = outer[0];
                if axis == 1 {
                    let mut t = Vec::new();
                    if l[2] < rho {
                        t.push((l[2] / rho).acos());
                    }
                    // sin θ = L_i/ρ: the azimuthal kink appears or disappears.
                    for li in &l[..2] {
                        if *li < rho {
                            t.push((li / rho).asin());
                        }
                    }
                    return t;
                }
                let s = rho * outer[1].sin();
                let mut t = Vec::new();
                if l[0] < s {
                    t.push((l[0] / s).acos());
                }
                if l[1] < s {
                    t.push((l[1] / s).asin());
                }
                t
            };
            quadrature::integrate_box(f, &[a, 0.0, 0.0], &[b, half_pi, half_pi], &breaks, &tol)?
        }
        _ => return Err(Error::Precondition(format!("pair-shell measure implemented for d ≤ 3, got {d}"))),
    };
    Ok(2f64.powi(d as i32) * e.value)
}

/// Radii where the covariogram changes form: norms of every subset of the
/// side lengths.
fn rho_breaks(l: &[f64]) -> Vec<f64> {
    let d = l.len();
    (1..(1usize << d))
        .map(|mask| (0..d).filter(|i| mask >> i & 1 == 1).map(|i| l[i] * l[i]).sum::<f64>().sqrt())
        .collect()
}

struct Binner {
    order: usize,
    dim: usize,
    kind: BinnerKind,
}

enum BinnerKind {
    Distance { edges: Vec<f64> },
    Cells { per_axis: usize, widths: Vec<f64>, index: BTreeMap<Vec<usize>, usize> },
}

impl Binner {
    fn new(domain: &BoxDomain, order: usize, grid: &CorrelationGrid) -> Result<(Self, Vec<(BinLabel, f64)>)> {
        let dim = domain.dim();
        match grid {
            CorrelationGrid::PairDistance { edges } => {
                if order != 2 {
                    return Err(Error::Precondition("pair-distance bins need order 2".into()));
                }
                if edges.len() < 2 || edges.windows(2).any(|w| !(w[1] > w[0])) || edges[0] < 0.0 {
                    return Err(Error::Precondition("bin edges must be nonnegative and increasing".into()));
                }
                let mut bins = Vec::new();
                for w in edges.windows(2) {
                    bins.push((BinLabel::Distance { lo: w[0], hi: w[1] }, pair_shell_measure(domain, w[0], w[1])?));
                }
                Ok((Binner { order, dim, kind: BinnerKind::Distance { edges: edges.clone() } }, bins))
            }
            CorrelationGrid::Cells { per_axis } => {
                let m = *per_axis;
                if m == 0 {
                    return Err(Error::Precondition("at least one cell per axis".into()));
                }
                let cells = m.pow(dim as u32);
                let widths: Vec<f64> = domain.lengths().iter().map(|l| l / m as f64).collect();
                let vc: f64 = widths.iter().product();
                let mut index = BTreeMap::new();
                let mut bins = Vec::new();
                let mut key = vec![0usize; order];
                loop {
                    // Ordered tuples mapping to this multiset: n!/Π mult!.
                    let mut perms = factorial(order);
                    let mut run = 1;
                    for i in 1..order {
                        if key[i] == key[i - 1] {
                            run += 1;
                            perms /= run as f64;
                        } else {
                            run = 1;
                        }
                    }
                    index.insert(key.clone(), bins.len());
                    bins.push((BinLabel::Cells { cells: key.clone() }, perms * vc.powi(order as i32)));
                    // Next nondecreasing tuple.
                    let mut i = order;
                    loop {
                        if i == 0 {
                            return Ok((Binner { order, dim, kind: BinnerKind::Cells { per_axis: m, widths, index } }, bins));
                        }
                        i -= 1;
                        if key[i] + 1 < cells {
                            let v = key[i] + 1;
                            for k in &mut key[i..] {
                                *k = v;
                            }
                            break;
                        }
                    }
                }
            }
        }
    }

    fn cell_of(&self, p: &[f64], per_axis: usize, widths: &[f64]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim).rev() {
            let c = ((p[a] / widths[a]) as usize).min(per_axis - 1);
            idx = idx * per_axis + c;
        }
        idx
    }

    /// Adds the bin counts of one state to `counts`.
    fn accumulate(&self, x: &[f64], counts: &mut [u32]) {
        let d = self.dim;
        let n = x.len() / d;
        match &self.kind {
            BinnerKind::Distance { edges } => {
                let hi = *edges.last().unwrap();
                for i in 0..n {
                    for j in i + 1..n {
                        let r = distance(&x[i * d..(i + 1) * d], &x[j * d..(j + 1) * d]);
                        if r < edges[0] || r >= hi {
                            continue;
                        }
                        let b = edges.partition_point(|e| *e <= r) - 1;
                        counts[b] += 1;
                    }
                }
            }
            BinnerKind::Cells { per_axis, widths, index } => {
                let cells: Vec<usize> = x.chunks(d).map(|p| self.cell_of(p, *per_axis, widths)).collect();
                let mut subset: Vec<usize> = (0..self.order).collect();
                if self.order > n {
                    return;
                }
                let mut key = vec![0; self.order];
                loop {
                    for (k, &s) in key.iter_mut().zip(&subset) {
                        *k = cells[s];
                    }
                    key.sort_unstable();
                    counts[index[&key]] += 1;
                    // Next combination.
                    let mut i = self.order;
                    loop {
                        if i == 0 {
                            return;
                        }
                        i -= 1;
                        if subset[i] < n - self.order + i {
                            subset[i] += 1;
                            for k in i + 1..self.order {
                                subset[k] = subset[k - 1] + 1;
                            }
                            break;
                        }
                    }
                }
            }
        }
    }
}

/// Correlation estimate from per-chain lists of flat states (particle
/// numbers may vary between states).
pub fn correlation_estimate_states(
    domain: &BoxDomain,
    chains: &[&[Vec<f64>]],
    order: usize,
    grid: &CorrelationGrid,
) -> Result<CorrelationEstimate> {
    if !(1..=3).contains(&order) {
        return Err(Error::Precondition(format!("order must be 1, 2 or 3, got {order}")));
    }
    let samples: usize = chains.iter().map(|c| c.len()).sum();
    let bpc = batches_per_chain(chains.len());
    if chains.iter().any(|c| c.len() < bpc) {
        return Err(Error::InsufficientSamples(format!("every chain needs at least {bpc} samples")));
    }
    let (binner, labels) = Binner::new(domain, order, grid)?;
    let nb = labels.len();
    // series[chain][bin][sample]
    let mut series: Vec<Vec<Vec<f64>>> = Vec::with_capacity(chains.len());
    let mut totals: Vec<Vec<f64>> = Vec::with_capacity(chains.len());
    let mut counts = vec![0u32; nb];
    for chain in chains {
        let mut per_bin = vec![Vec::with_capacity(chain.len()); nb];
        let mut tot = Vec::with_capacity(chain.len());
        for x in chain.iter() {
            counts.iter_mut().for_each(|c| *c = 0);
            binner.accumulate(x, &mut counts);
            let mut t = 0u64;
            for (b, c) in counts.iter().enumerate() {
                per_bin[b].push(*c as f64);
                t += *c as u64;
            }
            tot.push(t as f64);
        }
        series.push(per_bin);
        totals.push(tot);
    }
    let nf = factorial(order);
    let mut bins = Vec::with_capacity(nb);
    for (b, (label, measure)) in labels.into_iter().enumerate() {
        let per_chain: Vec<Vec<f64>> = series.iter().map(|c| c[b].clone()).collect();
        let count: u64 = per_chain.iter().flatten().map(|v| *v as u64).sum();
        let m = stats::pooled_batch_means(&per_chain, bpc);
        let (value, se) = if measure > 0.0 { (nf * m.mean / measure, nf * m.se / measure) } else { (0.0, 0.0) };
        bins.push(CorrelationBin { label, measure, value, se, count, empty: count == 0 });
    }
    let total = stats::pooled_batch_means(&totals, bpc);
    Ok(CorrelationEstimate { order, grid: grid.clone(), bins, samples, total })
}

/// Correlation estimate from Metropolis samples.
pub fn correlation_estimate(samples: &SampleSet, order: usize, grid: &CorrelationGrid) -> Result<CorrelationEstimate> {
    let chains: Vec<&[Vec<f64>]> = samples.chains.iter().map(|c| c.states.as_slice()).collect();
    correlation_estimate_states(&samples.domain, &chains, order, grid)
}

impl CorrelationEstimate {
    /// (1/n!) ∫ k̂ over the grid with its batch-means error; equals C(N, n)
    /// for a canonical ensemble when the grid covers Λ^n.
    pub fn sum_rule(&self) -> MeanSe {
        self.total
    }

    pub fn values(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.value).collect()
    }

    /// Bin-wise normalized profile k̂_b / Σ_c k̂_c |R_c| with delta-method
    /// errors that ignore the (small) correlation between numerator and
    /// denominator.
    pub fn normalized(&self) -> Vec<MeanSe> {
        let s: f64 = self.bins.iter().map(|b| b.value * b.measure).sum();
        let s_se = self.total.se * factorial(self.order);
        self.bins
            .iter()
            .map(|b| {
                let v = b.value / s;
                let rel = ((b.se / b.value).powi(2) + (s_se / s).powi(2)).sqrt();
                MeanSe::new(v, if b.value > 0.0 { v * rel } else { b.se / s })
            })
            .collect()
    }

    /// `bin_lo,bin_hi,value,se,count`; cell bins print their indices joined
    /// by `;` in both bound columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,value,se,count\n");
        for b in &self.bins {
            let (lo, hi) = match &b.label {
                BinLabel::Distance { lo, hi } => (format!("{lo:?}"), format!("{hi:?}")),
                BinLabel::Cells { cells } => {
                    let s: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
                    (s.join(";"), s.join(";"))
                }
            };
            let _ = writeln!(out, "{lo},{hi},{:?},{:?},{}", b.value, b.se, b.count);
        }
        out
    }
}

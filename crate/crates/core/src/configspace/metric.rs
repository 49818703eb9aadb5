//! The pair statistic S^{Φ,f}, the truncated vague metric and the
//! configuration metric d_{Φ,h}, plus the weights I(f) and R(f).

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::testfn::{plateau, plateau_gradient, Bump, TestFunction};
use super::Configuration;
use crate::error::{Error, Result};
use crate::potential::PairPotentialModel;
use crate::quadrature::{self, Tolerance};
use crate::rng;
use crate::stats::MeanSe;

/// The decreasing singular profile Φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PhiFunction {
    /// Φ(t) = t^{−exponent}
    Power { exponent: f64 },
    /// Φ ≡ 0
    Zero,
}

impl PhiFunction {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            PhiFunction::Power { exponent } => t.powf(-exponent),
            PhiFunction::Zero => 0.0,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            PhiFunction::Power { exponent } => -exponent * t.powf(-exponent - 1.0),
            PhiFunction::Zero => 0.0,
        }
    }
}

/// Default weight h(x) = (1 + |x|²)^{−(d+1)/2}.
pub fn default_h(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    (1.0 + r2).powf(-(d + 1.0) / 2.0)
}

fn default_h_gradient(x: &[f64], out: &mut [f64]) {
    let d = x.len() as f64;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    let c = -(d + 1.0) * (1.0 + r2).powf(-(d + 3.0) / 2.0);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = c * xi;
    }
}

/// h_k = h · I_k as a test function (support in B_k(0)).
#[derive(Debug, Clone, Copy)]
pub struct CutWeight {
    pub dim: usize,
    pub k: usize,
}

impl TestFunction for CutWeight {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        default_h(x) * plateau(self.k, x)
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let mut gh = vec![0.0; self.dim];
        let mut gi = vec![0.0; self.dim];
        default_h_gradient(x, &mut gh);
        plateau_gradient(self.k, x, &mut gi);
        let (h, i) = (default_h(x), plateau(self.k, x));
        for j in 0..self.dim {
            out[j] = gh[j] * i + h * gi[j];
        }
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![-(self.k as f64); self.dim], vec![self.k as f64; self.dim])
    }
}

/// Ingredients of the metric d_{sΦ,h}: Φ, scale s, the bumps f_k and the
/// weights p_k (vague part) and q_k (pair-statistic part).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFamily {
    pub dim: usize,
    pub phi: PhiFunction,
    pub scale: f64,
    pub bumps: Vec<Bump>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Default truncation of the k-sums.
pub const DEFAULT_K_MAX: usize = 16;

/// First `k_max` points of Z^d ordered by max-norm shell, then
/// lexicographically.
pub fn lattice_centers(d: usize, k_max: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(k_max);
    let mut shell: i64 = 0;
    while out.len() < k_max {
        let side = 2 * shell + 1;
        let total = (side as usize).pow(d as u32);
        for idx in 0..total {
            let mut rem = idx;
            let mut p = Vec::with_capacity(d);
            for _ in 0..d {
                p.push((rem % side as usize) as i64 - shell);
                rem /= side as usize;
            }
            p.reverse();
            if p.iter().map(|v| v.abs()).max().unwrap_or(0) == shell {
                out.push(p.iter().map(|v| *v as f64).collect());
                if out.len() == k_max {
                    break;
                }
            }
        }
        shell += 1;
    }
    out
}

impl MetricFamily {
    /// Φ(t) = t^{−(d+1)}, s = β/3, unit-radius bumps on lattice points,
    /// p_k = min(1, 1/I(f_k)) and q_k = 1 until [`Self::with_r_weights`].
    pub fn new(dim: usize, beta: f64) -> Result<Self> {
        Self::with_phi(dim, beta, PhiFunction::Power { exponent: dim as f64 + 1.0 }, DEFAULT_K_MAX)
    }

    pub fn with_phi(dim: usize, beta: f64, phi: PhiFunction, k_max: usize) -> Result<Self> {
        if dim == 0 || k_max == 0 {
            return Err(Error::Precondition("metric family needs d ≥ 1 and K_max ≥ 1".into()));
        }
        let bumps: Vec<Bump> = lattice_centers(dim, k_max).into_iter().map(|c| Bump::new(c, 1.0)).collect();
        // All bumps are translates of one shape, so I(f_k) is shared.
        let i = weight_i(&bumps[0], 1e-8)?;
        let pk = if i > 0.0 { (1.0 / i).min(1.0) } else { 1.0 };
        Ok(MetricFamily { dim, phi, scale: beta / 3.0, bumps, p: vec![pk; k_max], q: vec![1.0; k_max] })
    }

    pub fn k_max(&self) -> usize {
        self.bumps.len()
    }

    /// Set q_k = min(1, 1/R(h_k)) with R estimated by Monte Carlo.
    pub fn with_r_weights(mut self, potential: &PairPotentialModel, beta: f64, zeta: f64, samples: usize, seed: u64) -> Result<Self> {
        let mut q = Vec::with_capacity(self.k_max());
        for k in 1..=self.k_max() {
            let h = CutWeight { dim: self.dim, k };
            let r = weight_r(&h, &self, potential, beta, zeta, samples, rng::derive_seed(seed, k as u64))?;
            q.push(if r.mean > 0.0 { (1.0 / r.mean).min(1.0) } else { 1.0 });
        }
        self.q = q;
        Ok(self)
    }

    /// Truncation error bound of [`metric_vague`].
    pub fn vague_tail_bound(&self) -> f64 {
        0.5f64.powi(self.k_max() as i32)
    }

    /// Truncation error bound of [`metric_config`] (both k-sums).
    pub fn config_tail_bound(&self) -> f64 {
        2.0 * self.vague_tail_bound()
    }
}

/// S^{sΦ,f}(γ) = Σ_{{x,y}⊂γ} exp(s Φ(|x − y|)) f(x) f(y) with the family's Φ and s.
pub fn pair_statistic(gamma: &Configuration, fam: &MetricFamily, f: impl Fn(&[f64]) -> f64) -> f64 {
    let fv: Vec<f64> = gamma.points().map(&f).collect();
    let n = gamma.len();
    let mut s = 0.0;
    for i in 0..n {
        if fv[i] == 0.0 {
            continue;
        }
        for j in (i + 1)..n {
            if fv[j] == 0.0 {
                continue;
            }
            let r = crate::potential::distance(gamma.point(i), gamma.point(j));
            s += (fam.scale * fam.phi.value(r)).exp() * fv[i] * fv[j];
        }
    }
    s
}

/// Σ_k 2^{−k} p_k (1 − exp(−|⟨f_k, γ⟩ − ⟨f_k, η⟩|)), truncated at K_max.
pub fn metric_vague(gamma: &Configuration, eta: &Configuration, fam: &MetricFamily) -> f64 {
    let mut total = 0.0;
    for (k, (f, p)) in fam.bumps.iter().zip(&fam.p).enumerate() {
        let a = gamma.pairing(|x| f.value(x));
        let b = eta.pairing(|x| f.value(x));
        total += 0.5f64.powi(k as i32 + 1) * p * (1.0 - (-(a - b).abs()).exp());
    }
    total
}

fn bounded_difference(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let diff = (a - b).abs();
    if diff.is_finite() {
        diff / (1.0 + diff)
    } else {
        1.0
    }
}

/// metric_vague + Σ_k 2^{−k} q_k |ΔS_k|/(1 + |ΔS_k|) with S_k = S^{sΦ,h·I_k}.
pub fn metric_config(gamma: &Configuration, eta: &Configuration, fam: &MetricFamily) -> f64 {
    let mut total = metric_vague(gamma, eta, fam);
    for (k, q) in fam.q.iter().enumerate() {
        let h = CutWeight { dim: fam.dim, k: k + 1 };
        let a = pair_statistic(gamma, fam, |x| h.value(x));
        let b = pair_statistic(eta, fam, |x| h.value(x));
        total += 0.5f64.powi(k as i32 + 1) * q * bounded_difference(a, b);
    }
    total
}

/// I(f) = ((∫|∇f|²)² + ∫|∇f|⁴)^{1/4} by nested quadrature over the support box.
pub fn weight_i(f: &dyn TestFunction, tol: f64) -> Result<f64> {
    let d = f.dim();
    let (lo, hi) = f.support();
    let breaks = |axis: usize, _outer: &[f64]| f.breakpoints(axis);
    let t = Tolerance::relative(tol).with_abs(1e-300);
    let grad_pow = |q: i32| {
        move |x: &[f64]| {
            let mut g = vec![0.0; d];
            f.gradient(x, &mut g);
            let n2: f64 = g.iter().map(|v| v * v).sum();
            n2.powi(q / 2)
        }
    };
    let a2 = quadrature::integrate_box(grad_pow(2), &lo, &hi, &breaks, &t)?.value;
    let a4 = quadrature::integrate_box(grad_pow(4), &lo, &hi, &breaks, &t)?.value;
    Ok((a2 * a2 + a4).powf(0.25))
}

struct Local {
    value: f64,
    grad: Vec<f64>,
}

/// The unsymmetrized carré-du-champ summand with `x` as the moving point:
/// exp(sΦ(|x−y|) + sΦ(|x−z|) + extra) f(y) f(z) (…), where `extra` is added
/// to the exponent before exponentiation.
fn t_term(fam: &MetricFamily, x: &[f64], y: &[f64], z: &[f64], lx: &Local, fy: f64, fz: f64, extra: f64) -> f64 {
    if fy == 0.0 || fz == 0.0 {
        return 0.0;
    }
    let ryv: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let rzv: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
    let ry = ryv.iter().map(|v| v * v).sum::<f64>().sqrt();
    let rz = rzv.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ay = fam.scale * fam.phi.derivative(ry) / ry;
    let az = fam.scale * fam.phi.derivative(rz) / rz;
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let bracket = ay * az * dot(&ryv, &rzv) * lx.value * lx.value
        + dot(&lx.grad, &lx.grad)
        + ay * dot(&ryv, &lx.grad) * lx.value
        + az * dot(&rzv, &lx.grad) * lx.value;
    let expo = fam.scale * (fam.phi.value(ry) + fam.phi.value(rz)) + extra;
    if bracket == 0.0 {
        return 0.0;
    }
    expo.exp() * fy * fz * bracket
}

/// R(f) = ((ζ³/3!) ∫|g₃| e^{−(2/3)βΣφ} + (ζ²/2!) ∫|g₂| e^{−βφ})^{1/4},
/// estimated by Monte Carlo over the support box; the standard error comes
/// from the delta method. Common random numbers make the estimate monotone
/// in ζ for a fixed seed.
pub fn weight_r(
    f: &dyn TestFunction,
    fam: &MetricFamily,
    potential: &PairPotentialModel,
    beta: f64,
    zeta: f64,
    samples: usize,
    seed: u64,
) -> Result<MeanSe> {
    let d = f.dim();
    if samples < 2 {
        return Err(Error::InsufficientSamples("weight_r needs at least two samples".into()));
    }
    let (lo, hi) = f.support();
    let vol: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
    let mut r = rng::stream(seed, 0);
    let draw = |r: &mut rng::Rng| -> Vec<f64> { lo.iter().zip(&hi).map(|(a, b)| r.random_range(*a..*b)).collect() };
    let local = |x: &[f64]| {
        let mut g = vec![0.0; d];
        f.gradient(x, &mut g);
        Local { value: f.value(x), grad: g }
    };
    let (mut s2, mut ss2, mut s3, mut ss3) = (0.0, 0.0, 0.0, 0.0);
    for _ in 0..samples {
        let x = draw(&mut r);
        let y = draw(&mut r);
        let z = draw(&mut r);
        let (lx, ly, lz) = (local(&x), local(&y), local(&z));
        // Pair integrand |g₂(x, y)| e^{−βφ(x−y)}.
        let pxy = potential.pair(&x, &y);
        let g2 = t_term(fam, &x, &y, &y, &lx, ly.value, ly.value, -beta * pxy)
            + t_term(fam, &y, &x, &x, &ly, lx.value, lx.value, -beta * pxy);
        // Triple integrand |g₃(x, y, z)| e^{−(2/3)βΣφ}.
        let w3 = -(2.0 / 3.0) * beta * (pxy + potential.pair(&x, &z) + potential.pair(&y, &z));
        let pts = [(&x, &lx), (&y, &ly), (&z, &lz)];
        let mut g3 = 0.0;
        for c in 0..3 {
            let (a, b) = ((c + 1) % 3, (c + 2) % 3);
            let (pc, lc) = pts[c];
            let (pa, la) = pts[a];
            let (pb, lb) = pts[b];
            g3 += t_term(fam, pc, pa, pb, lc, la.value, lb.value, w3);
            g3 += t_term(fam, pc, pb, pa, lc, lb.value, la.value, w3);
        }
        let (v2, v3) = (g2.abs(), g3.abs());
        if !v2.is_finite() || !v3.is_finite() {
            return Err(Error::NonFiniteIntegrand(format!(
                "R(f) integrand is not finite near x = {x:?}; Φ grows faster than the potential suppresses"
            )));
        }
        s2 += v2;
        ss2 += v2 * v2;
        s3 += v3;
        ss3 += v3 * v3;
    }
    let n = samples as f64;
    let mean_se = |s: f64, ss: f64| {
        let m = s / n;
        let var = ((ss / n - m * m) * n / (n - 1.0)).max(0.0);
        (m, (var / n).sqrt())
    };
    let (m2, e2) = mean_se(s2, ss2);
    let (m3, e3) = mean_se(s3, ss3);
    let c3 = zeta.powi(3) / 6.0 * vol.powi(3);
    let c2 = zeta.powi(2) / 2.0 * vol.powi(2);
    let r4 = c3 * m3 + c2 * m2;
    let r4_se = ((c3 * e3).powi(2) + (c2 * e2).powi(2)).sqrt();
    let value = r4.powf(0.25);
    let se = if value > 0.0 { 0.25 * r4_se / value.powi(3) } else { 0.0 };
    Ok(MeanSe::new(value, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::BoxDomain;

    #[test]
    fn lattice_order() {
        let c = lattice_centers(1, 5);
        assert_eq!(c, vec![vec![0.0], vec![-1.0], vec![1.0], vec![-2.0], vec![2.0]]);
        let c2 = lattice_centers(2, 10);
        assert_eq!(c2[0], vec![0.0, 0.0]);
        assert_eq!(c2.len(), 10);
        assert!(c2[1..9].iter().all(|p| p.iter().map(|v| v.abs()).fold(0.0, f64::max) == 1.0));
    }

    #[test]
    fn pair_statistic_closed_form() {
        let dom = BoxDomain::new(vec![3.0]).unwrap();
        let mut fam = MetricFamily::new(1, 3.0).unwrap();
        fam.phi = PhiFunction::Power { exponent: 2.0 };
        let g = Configuration::sym(dom.clone(), &[vec![0.5], vec![1.5]]).unwrap();
        assert!((pair_statistic(&g, &fam, |_| 1.0) - std::f64::consts::E).abs() < 1e-14);
        let single = Configuration::sym(dom, &[vec![0.5]]).unwrap();
        assert_eq!(pair_statistic(&single, &fam, |_| 1.0), 0.0);
    }

    #[test]
    fn weights_bounded() {
        let fam = MetricFamily::new(2, 1.0).unwrap();
        assert!(fam.p.iter().all(|p| *p > 0.0 && *p <= 1.0));
        assert!(fam.q.iter().all(|q| *q > 0.0 && *q <= 1.0));
        assert_eq!(fam.k_max(), DEFAULT_K_MAX);
    }

    #[test]
    fn identical_configurations_have_zero_distance() {
        let dom = BoxDomain::new(vec![3.0]).unwrap();
        let fam = MetricFamily::new(1, 1.0).unwrap();
        let g = Configuration::sym(dom, &[vec![0.5], vec![0.5 + 1e-9]]).unwrap();
        assert_eq!(metric_config(&g, &g, &fam), 0.0);
    }

    #[test]
    fn h_bounds() {
        assert_eq!(default_h(&[0.0, 0.0]), 1.0);
        assert!(default_h(&[3.0, 4.0]) > 0.0 && default_h(&[3.0, 4.0]) < 1.0);
    }
}

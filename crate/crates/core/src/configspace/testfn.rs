//! Closed catalog of test functions with exact derivatives.

use serde::{Deserialize, Serialize};

/// A compactly supported C¹ function on R^d.
pub trait TestFunction: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
    /// Bounding box `(lo, hi)` of the support.
    fn support(&self) -> (Vec<f64>, Vec<f64>);
    /// Coordinates along `axis` where the function has a kink.
    fn breakpoints(&self, _axis: usize) -> Vec<f64> {
        Vec::new()
    }
}

/// A test function with second derivatives.
pub trait SmoothTestFunction: TestFunction {
    /// Row-major d×d Hessian.
    fn hessian(&self, x: &[f64], out: &mut [f64]);

    fn laplacian(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut h = vec![0.0; d * d];
        self.hessian(x, &mut h);
        (0..d).map(|i| h[i * d + i]).sum()
    }
}

/// ψ(s) = exp(1 − 1/(1 − s)) for s < 1, else 0, with ψ(0) = 1.
fn psi(s: f64) -> (f64, f64, f64) {
    if s >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let u = 1.0 / (1.0 - s);
    let p = (1.0 - u).exp();
    let p1 = -p * u * u;
    let p2 = p * (u.powi(4) - 2.0 * u.powi(3));
    (p, p1, p2)
}

/// Smooth radial bump `A ψ(|x − c|² / ρ²)` with sup `A` at the center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bump {
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn new(center: Vec<f64>, radius: f64) -> Self {
        Bump { center, radius, amplitude: 1.0 }
    }

    pub fn scaled(mut self, amplitude: f64) -> Self {
        self.amplitude = amplitude;
        self
    }

    fn s(&self, x: &[f64]) -> f64 {
        self.center.iter().zip(x).map(|(c, xi)| (xi - c) * (xi - c)).sum::<f64>() / (self.radius * self.radius)
    }

    /// Whether the closed support ball lies at distance ≥ `margin` inside
    /// the box `[0, L]`.
    pub fn inside_box(&self, lengths: &[f64], margin: f64) -> bool {
        self.center
            .iter()
            .zip(lengths)
            .all(|(c, l)| c - self.radius >= margin && c + self.radius <= l - margin)
    }
}

impl TestFunction for Bump {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.amplitude * psi(self.s(x)).0
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let (_, p1, _) = psi(self.s(x));
        let c = self.amplitude * p1 * 2.0 / (self.radius * self.radius);
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o = c * (xi - ci);
        }
    }

    fn support(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.center.iter().map(|c| c - self.radius).collect(),
            self.center.iter().map(|c| c + self.radius).collect(),
        )
    }
}

impl SmoothTestFunction for Bump {
    fn hessian(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let (_, p1, p2) = psi(self.s(x));
        let r2 = self.radius * self.radius;
        for i in 0..d {
            let yi = x[i] - self.center[i];
            for j in 0..d {
                let yj = x[j] - self.center[j];
                let diag = if i == j { 2.0 * p1 / r2 } else { 0.0 };
                out[i * d + j] = self.amplitude * (p2 * 4.0 * yi * yj / (r2 * r2) + diag);
            }
        }
    }

    fn laplacian(&self, x: &[f64]) -> f64 {
        let s = self.s(x);
        let (_, p1, p2) = psi(s);
        let r2 = self.radius * self.radius;
        self.amplitude * (p2 * 4.0 * s / r2 + p1 * 2.0 * self.dim() as f64 / r2)
    }
}

/// C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1; returns `(S, S')`.
pub fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0);
    }
    if t >= 1.0 {
        return (1.0, 0.0);
    }
    let a = (-1.0 / t).exp();
    let b = (-1.0 / (1.0 - t)).exp();
    let s = a / (a + b);
    let ds = a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / ((a + b) * (a + b));
    (s, ds)
}

/// Plateau cutoff I_k(x) = S(k − |x|): support in the closed ball B_k(0) and
/// I_{k+1} = 1 on B_k(0).
pub fn plateau(k: usize, x: &[f64]) -> f64 {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    smooth_step(k as f64 - r).0
}

/// Gradient of [`plateau`].
pub fn plateau_gradient(k: usize, x: &[f64], out: &mut [f64]) {
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (_, ds) = smooth_step(k as f64 - r);
    for (o, xi) in out.iter_mut().zip(x) {
        *o = if r > 0.0 { -ds * xi / r } else { 0.0 };
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_peak_and_support() {
        let b = Bump::new(vec![1.0, 2.0], 0.5);
        assert_eq!(b.value(&[1.0, 2.0]), 1.0);
        assert_eq!(b.value(&[1.5, 2.0]), 0.0);
        assert!(b.value(&[1.2, 2.1]) > 0.0);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let b = Bump::new(vec![0.3, -0.2, 0.1], 0.9).scaled(1.7);
        let x = [0.5, 0.1, -0.2];
        let d = 3;
        let mut g = vec![0.0; d];
        b.gradient(&x, &mut g);
        let mut hess = vec![0.0; d * d];
        b.hessian(&x, &mut hess);
        let h = 1e-5;
        for i in 0..d {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (b.value(&xp) - b.value(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
            let mut gp = vec![0.0; d];
            let mut gm = vec![0.0; d];
            b.gradient(&xp, &mut gp);
            b.gradient(&xm, &mut gm);
            for j in 0..d {
                assert!(((gp[j] - gm[j]) / (2.0 * h) - hess[j * d + i]).abs() < 1e-7);
            }
        }
        let trace: f64 = (0..d).map(|i| hess[i * d + i]).sum();
        assert!((b.laplacian(&x) - trace).abs() < 1e-12);
    }

    #[test]
    fn plateau_property() {
        for k in 1..5 {
            for i in 0..200 {
                let r = i as f64 * 0.05;
                let x = [r * 0.6, r * 0.8];
                let v = plateau(k, &x);
                assert!((0.0..=1.0).contains(&v));
                if r > k as f64 {
                    assert_eq!(v, 0.0);
                }
                if r <= k as f64 {
                    assert_eq!(plateau(k + 1, &x), 1.0);
                }
            }
        }
    }

    #[test]
    fn smooth_step_derivative() {
        for &t in &[0.1, 0.3, 0.5, 0.77, 0.95] {
            let h = 1e-6;
            let fd = (smooth_step(t + h).0 - smooth_step(t - h).0) / (2.0 * h);
            assert!((fd - smooth_step(t).1).abs() < 1e-7);
        }
    }
}

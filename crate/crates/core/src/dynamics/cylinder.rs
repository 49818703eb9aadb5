//! Cylinder functions F(γ) = g(⟨f₁,γ⟩, …, ⟨fₙ,γ⟩), their gradient on
//! configuration space, the generator H and the Dirichlet energy.

use serde::{Deserialize, Serialize};

use crate::configspace::testfn::{Bump, SmoothTestFunction, TestFunction};
use crate::error::{Error, Result};
use crate::gibbs::mcmc::{batches_per_chain, SampleSet};
use crate::potential::PairPotentialModel;
use crate::stats::{self, MeanSe};

/// Outer function g(u) = c + Σ a_j T(u_j) + Σ b_ij T(u_i) T(u_j) with the
/// squashing T(u) = s tanh(u/s), or T(u) = u when no scale is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquashedQuadratic {
    pub scale: Option<f64>,
    pub constant: f64,
    pub linear: Vec<f64>,
    /// Row-major n×n; only the symmetric part matters.
    pub quadratic: Vec<f64>,
}

impl SquashedQuadratic {
    pub fn constant(n: usize, c: f64) -> Self {
        SquashedQuadratic { scale: None, constant: c, linear: vec![0.0; n], quadratic: vec![0.0; n * n] }
    }

    /// g(u) = T(u_slot).
    pub fn slot(n: usize, slot: usize, scale: Option<f64>) -> Self {
        let mut g = Self::constant(n, 0.0);
        g.linear[slot] = 1.0;
        g.scale = scale;
        g
    }

    pub fn arity(&self) -> usize {
        self.linear.len()
    }

    fn squash(&self, u: f64) -> (f64, f64, f64) {
        match self.scale {
            None => (u, 1.0, 0.0),
            Some(s) => {
                let t = (u / s).tanh();
                let sech2 = 1.0 - t * t;
                (s * t, sech2, -2.0 / s * t * sech2)
            }
        }
    }

    fn b(&self, i: usize, j: usize) -> f64 {
        let n = self.arity();
        0.5 * (self.quadratic[i * n + j] + self.quadratic[j * n + i])
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let n = self.arity();
        let t: Vec<f64> = u.iter().map(|&x| self.squash(x).0).collect();
        let mut v = self.constant;
        for i in 0..n {
            v += self.linear[i] * t[i];
            for j in 0..n {
                v += self.b(i, j) * t[i] * t[j];
            }
        }
        v
    }

    /// Gradient and row-major Hessian of g at u.
    pub fn derivatives(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = self.arity();
        let sq: Vec<(f64, f64, f64)> = u.iter().map(|&x| self.squash(x)).collect();
        // Partial derivative of g with respect to T(u_k).
        let inner: Vec<f64> = (0..n)
            .map(|k| self.linear[k] + 2.0 * (0..n).map(|j| self.b(k, j) * sq[j].0).sum::<f64>())
            .collect();
        let grad: Vec<f64> = (0..n).map(|k| sq[k].1 * inner[k]).collect();
        let mut hess = vec![0.0; n * n];
        for k in 0..n {
            for l in 0..n {
                hess[k * n + l] = 2.0 * self.b(k, l) * sq[k].1 * sq[l].1;
            }
            hess[k * n + k] += sq[k].2 * inner[k];
        }
        (grad, hess)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CylinderFunction {
    pub g: SquashedQuadratic,
    pub fs: Vec<Bump>,
}

impl CylinderFunction {
    pub fn new(g: SquashedQuadratic, fs: Vec<Bump>) -> Result<Self> {
        if fs.is_empty() {
            return Err(Error::Precondition("a cylinder function needs at least one test function".into()));
        }
        if g.arity() != fs.len() || g.quadratic.len() != fs.len() * fs.len() {
            return Err(Error::Precondition(format!("outer function arity {} does not match {} test functions", g.arity(), fs.len())));
        }
        let d = fs[0].dim();
        if fs.iter().any(|f| f.dim() != d) {
            return Err(Error::Precondition("test functions of mixed dimension".into()));
        }
        Ok(CylinderFunction { g, fs })
    }

    /// F = ⟨f, ·⟩.
    pub fn linear(f: Bump) -> Self {
        CylinderFunction { g: SquashedQuadratic::slot(1, 0, None), fs: vec![f] }
    }

    pub fn dim(&self) -> usize {
        self.fs[0].dim()
    }

    /// ⟨f_j, γ⟩ for every j.
    pub fn pairings(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.dim();
        self.fs.iter().map(|f| coords.chunks(d).map(|x| f.value(x)).sum()).collect()
    }

    pub fn value(&self, coords: &[f64]) -> f64 {
        self.g.value(&self.pairings(coords))
    }

    /// ∇^Γ F(γ, x) = Σ_j ∂_j g ∇f_j(x) for every x ∈ γ (flat layout).
    pub fn gamma_gradient(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let (dg, _) = self.g.derivatives(&self.pairings(coords));
        let mut out = vec![0.0; coords.len()];
        let mut gf = vec![0.0; d];
        for (x, o) in coords.chunks(d).zip(out.chunks_mut(d)) {
            for (f, c) in self.fs.iter().zip(&dg) {
                f.gradient(x, &mut gf);
                for a in 0..d {
                    o[a] += c * gf[a];
                }
            }
        }
        out
    }

    /// Σ_x (∇^Γ F(γ,x), v(x)) for a vector field given per particle.
    pub fn directional(&self, coords: &[f64], v: &[f64]) -> f64 {
        self.gamma_gradient(coords).iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// H F(γ) with H the positive generator of the Dirichlet form (the process
/// generator is −H).
pub fn apply_generator(f: &CylinderFunction, potential: &PairPotentialModel, beta: f64, coords: &[f64]) -> Result<f64> {
    let d = f.dim();
    if potential.dim() != d || coords.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: d, found: potential.dim() });
    }
    let n = f.fs.len();
    let np = coords.len() / d;
    let (dg, hg) = f.g.derivatives(&f.pairings(coords));
    // grads[j][x] = ∇f_j(x)
    let mut grads = vec![vec![0.0; coords.len()]; n];
    for (j, fj) in f.fs.iter().enumerate() {
        for (x, o) in coords.chunks(d).zip(grads[j].chunks_mut(d)) {
            fj.gradient(x, o);
        }
    }
    let mut h = 0.0;
    for i in 0..n {
        for j in 0..n {
            if hg[i * n + j] != 0.0 {
                let dot: f64 = grads[i].iter().zip(&grads[j]).map(|(a, b)| a * b).sum();
                h -= hg[i * n + j] * dot;
            }
        }
    }
    let interacting = !(potential.is_ideal() || beta == 0.0);
    let mut diff = vec![0.0; d];
    let mut gphi = vec![0.0; d];
    for j in 0..n {
        if dg[j] == 0.0 {
            continue;
        }
        let lap: f64 = coords.chunks(d).map(|x| f.fs[j].laplacian(x)).sum();
        let mut pair = 0.0;
        for a in 0..np {
            for b in a + 1..np {
                let (xa, xb) = (&coords[a * d..(a + 1) * d], &coords[b * d..(b + 1) * d]);
                if xa == xb {
                    return Err(Error::DuplicatePoint { first: a, second: b });
                }
                if !interacting {
                    continue;
                }
                let ga = &grads[j][a * d..(a + 1) * d];
                let gb = &grads[j][b * d..(b + 1) * d];
                if ga.iter().chain(gb).all(|v| *v == 0.0) {
                    continue;
                }
                for k in 0..d {
                    diff[k] = xa[k] - xb[k];
                }
                potential.gradient_into(&diff, &mut gphi)?;
                pair += (0..d).map(|k| gphi[k] * (ga[k] - gb[k])).sum::<f64>();
            }
        }
        h -= dg[j] * (lap - beta * pair);
    }
    Ok(h)
}

/// Σ_x (∇^Γ F(γ,x), ∇^Γ G(γ,x)).
pub fn carre_du_champ(f: &CylinderFunction, g: &CylinderFunction, coords: &[f64]) -> f64 {
    f.gamma_gradient(coords).iter().zip(g.gamma_gradient(coords)).map(|(a, b)| a * b).sum()
}

/// Monte Carlo estimate of E(F, G) = ∫ Σ_x (∇^Γ F, ∇^Γ G) dμ over Gibbs
/// samples, with batch-means error.
pub fn dirichlet_energy(f: &CylinderFunction, g: &CylinderFunction, samples: &SampleSet) -> Result<MeanSe> {
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no samples".into()));
    }
    let series = samples.series(|x| carre_du_champ(f, g, x));
    Ok(stats::pooled_batch_means(&series, batches_per_chain(series.len())))
}

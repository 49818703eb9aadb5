//! Vector fields, the interaction term L_v^φ, the logarithmic derivative
//! B_v^φ and the integration-by-parts residual
//! E[∇_v F · G] + E[F · ∇_v G] + E[F G B_v^φ].

use serde::{Deserialize, Serialize};

use crate::configspace::testfn::{plateau, Bump, TestFunction};
use crate::configspace::BoxDomain;
use crate::dynamics::CylinderFunction;
use crate::error::{Error, Result};
use crate::gibbs::mcmc::{batches_per_chain, SampleSet};
use crate::potential::PairPotentialModel;
use crate::stats::{self, MeanSe};

/// Compactly supported vector fields with exact divergence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum VectorField {
    /// v(x) = b(x) e with b a bump and e a constant direction.
    Directional { center: Vec<f64>, radius: f64, direction: Vec<f64> },
    /// v(x) = b(x) J(x − c), J the quarter turn in the (0, 1) plane;
    /// divergence free since b is radial about c.
    Rotational { center: Vec<f64>, radius: f64 },
}

impl VectorField {
    pub fn validate(&self) -> Result<()> {
        match self {
            VectorField::Directional { center, radius, direction } => {
                if center.len() != direction.len() {
                    return Err(Error::DimensionMismatch { expected: center.len(), found: direction.len() });
                }
                if !(*radius > 0.0) {
                    return Err(Error::Precondition("vector field radius must be positive".into()));
                }
            }
            VectorField::Rotational { center, radius } => {
                if center.len() < 2 {
                    return Err(Error::Precondition("rotational fields need d ≥ 2".into()));
                }
                if !(*radius > 0.0) {
                    return Err(Error::Precondition("vector field radius must be positive".into()));
                }
            }
        }
        Ok(())
    }

    fn bump(&self) -> Bump {
        match self {
            VectorField::Directional { center, radius, .. } | VectorField::Rotational { center, radius } => {
                Bump::new(center.clone(), *radius)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            VectorField::Directional { center, .. } | VectorField::Rotational { center, .. } => center.len(),
        }
    }

    pub fn support_radius(&self) -> f64 {
        match self {
            VectorField::Directional { radius, .. } | VectorField::Rotational { radius, .. } => *radius,
        }
    }

    /// Whether the closed support lies in the open box.
    pub fn inside(&self, domain: &BoxDomain) -> bool {
        domain.dim() == self.dim() && self.bump().inside_box(domain.lengths(), 1e-12)
    }

    pub fn value(&self, x: &[f64], out: &mut [f64]) {
        let b = self.bump().value(x);
        match self {
            VectorField::Directional { direction, .. } => {
                for (o, e) in out.iter_mut().zip(direction) {
                    *o = b * e;
                }
            }
            VectorField::Rotational { center, .. } => {
                out.iter_mut().for_each(|o| *o = 0.0);
                out[0] = -b * (x[1] - center[1]);
                out[1] = b * (x[0] - center[0]);
            }
        }
    }

    pub fn divergence(&self, x: &[f64]) -> f64 {
        match self {
            VectorField::Directional { direction, .. } => {
                let mut g = vec![0.0; x.len()];
                self.bump().gradient(x, &mut g);
                g.iter().zip(direction).map(|(a, b)| a * b).sum()
            }
            VectorField::Rotational { .. } => 0.0,
        }
    }

    /// v at every particle (flat layout).
    pub fn at_points(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; coords.len()];
        for (x, o) in coords.chunks(d).zip(out.chunks_mut(d)) {
            self.value(x, o);
        }
        out
    }
}

/// Cutoff of the interaction sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cutoff {
    /// I_k, the plateau of radius k about the origin.
    Plateau(usize),
    /// I ≡ 1
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionTerm {
    pub value: f64,
    /// Σ of the absolute pair contributions.
    pub abs_sum: f64,
    pub summable: bool,
}

/// L^φ_{v,k}(γ) = −β Σ_{{x,y}⊂γ} (∇φ(x−y), I_k(y)v(x) − I_k(x)v(y)).
pub fn l_v_phi(coords: &[f64], v: &VectorField, potential: &PairPotentialModel, beta: f64, cutoff: Cutoff) -> Result<InteractionTerm> {
    let d = v.dim();
    if potential.dim() != d || coords.len() % d != 0 {
        return Err(Error::DimensionMismatch { expected: d, found: potential.dim() });
    }
    let n = coords.len() / d;
    let vx = v.at_points(coords);
    let cut: Vec<f64> = coords
        .chunks(d)
        .map(|x| match cutoff {
            Cutoff::Plateau(k) => plateau(k, x),
            Cutoff::Full => 1.0,
        })
        .collect();
    let mut diff = vec![0.0; d];
    let mut g = vec![0.0; d];
    let (mut value, mut abs_sum) = (0.0, 0.0);
    for a in 0..n {
        for b in a + 1..n {
            let (xa, xb) = (&coords[a * d..(a + 1) * d], &coords[b * d..(b + 1) * d]);
            if xa == xb {
                return Err(Error::DuplicatePoint { first: a, second: b });
            }
            let (va, vb) = (&vx[a * d..(a + 1) * d], &vx[b * d..(b + 1) * d]);
            if potential.is_ideal() || va.iter().chain(vb).all(|c| *c == 0.0) {
                continue;
            }
            for k in 0..d {
                diff[k] = xa[k] - xb[k];
            }
            potential.gradient_into(&diff, &mut g)?;
            let t: f64 = (0..d).map(|k| g[k] * (cut[b] * va[k] - cut[a] * vb[k])).sum();
            value -= beta * t;
            abs_sum += beta * t.abs();
        }
    }
    Ok(InteractionTerm { value, abs_sum, summable: abs_sum.is_finite() })
}

/// B_v^φ(γ) = ⟨div v, γ⟩ + L_v^φ(γ).
pub fn b_v_phi(coords: &[f64], v: &VectorField, potential: &PairPotentialModel, beta: f64) -> Result<f64> {
    let div: f64 = coords.chunks(v.dim()).map(|x| v.divergence(x)).sum();
    Ok(div + l_v_phi(coords, v, potential, beta, Cutoff::Full)?.value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IbpResidual {
    /// E[∇_v F · G]
    pub lhs: MeanSe,
    /// E[F · ∇_v G]
    pub rhs_derivative: MeanSe,
    /// E[F G B_v^φ]
    pub rhs_log: MeanSe,
    /// Mean of the per-sample sum of the three terms, with its own
    /// batch-means error (the terms are strongly correlated).
    pub residual: MeanSe,
    pub z: f64,
    pub within: bool,
}

/// The integration-by-parts residual over Gibbs samples.
pub fn ibp_residual(
    f: &CylinderFunction,
    g: &CylinderFunction,
    v: &VectorField,
    potential: &PairPotentialModel,
    beta: f64,
    samples: &SampleSet,
) -> Result<IbpResidual> {
    v.validate()?;
    if !v.inside(&samples.domain) {
        return Err(Error::Precondition("the vector field must be supported inside the open box".into()));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientSamples("no samples".into()));
    }
    let mut terms: [Vec<Vec<f64>>; 4] = Default::default();
    for c in &samples.chains {
        let mut t = [
            Vec::with_capacity(c.states.len()),
            Vec::with_capacity(c.states.len()),
            Vec::with_capacity(c.states.len()),
            Vec::with_capacity(c.states.len()),
        ];
        for x in &c.states {
            let vx = v.at_points(x);
            let (fv, gv) = (f.value(x), g.value(x));
            let a = f.directional(x, &vx) * gv;
            let b = fv * g.directional(x, &vx);
            let bv = if fv == 0.0 || gv == 0.0 { 0.0 } else { b_v_phi(x, v, potential, beta)? };
            let c3 = fv * gv * bv;
            t[0].push(a);
            t[1].push(b);
            t[2].push(c3);
            t[3].push(a + b + c3);
        }
        for (acc, s) in terms.iter_mut().zip(t) {
            acc.push(s);
        }
    }
    let bpc = batches_per_chain(samples.chains.len());
    let [l, r1, r2, s] = terms.map(|t| stats::pooled_batch_means(&t, bpc));
    let z = s.z_to(0.0);
    Ok(IbpResidual { lhs: l, rhs_derivative: r1, rhs_log: r2, residual: s, z, within: z < 3.0 })
}

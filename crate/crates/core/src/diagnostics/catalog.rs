//! Fixed test sets scaled to the box: three cylinder functions for the
//! martingale checks and three (F, G, v) triples for integration by parts.
//! Every bump and vector field sits well inside the box.

use crate::configspace::testfn::Bump;
use crate::configspace::BoxDomain;
use crate::diagnostics::ibp::VectorField;
use crate::dynamics::{CylinderFunction, SquashedQuadratic};

fn shifted(c: &[f64], by: f64) -> Vec<f64> {
    let mut c = c.to_vec();
    c[0] += by;
    c
}

fn lmin(domain: &BoxDomain) -> f64 {
    domain.lengths().iter().cloned().fold(f64::INFINITY, f64::min)
}

/// ⟨f, γ⟩, 2 tanh(⟨f, γ⟩/2) and a squashed product of two bumps.
pub fn standard_cylinders(domain: &BoxDomain) -> Vec<CylinderFunction> {
    let (c, l) = (domain.center(), lmin(domain));
    let left = Bump::new(shifted(&c, -0.2 * l), 0.2 * l);
    let right = Bump::new(shifted(&c, 0.2 * l), 0.2 * l);
    let mut product = SquashedQuadratic::constant(2, 0.0);
    product.scale = Some(1.5);
    product.linear[0] = 0.5;
    product.quadratic[1] = 1.0;
    vec![
        CylinderFunction::linear(Bump::new(c.clone(), 0.25 * l)),
        CylinderFunction { g: SquashedQuadratic::slot(1, 0, Some(2.0)), fs: vec![left.clone()] },
        CylinderFunction { g: product, fs: vec![left, right.scaled(0.8)] },
    ]
}

pub struct IbpTriple {
    pub f: CylinderFunction,
    pub g: CylinderFunction,
    pub v: VectorField,
}

/// Three triples: constant G with an axis field, two bump functionals with
/// a diagonal field, and a product functional with a rotational field (an
/// off-center axis field in one dimension).
pub fn standard_ibp_triples(domain: &BoxDomain) -> Vec<IbpTriple> {
    let d = domain.dim();
    let (c, l) = (domain.center(), lmin(domain));
    let cyl = standard_cylinders(domain);
    let mut e0 = vec![0.0; d];
    e0[0] = 1.0;
    let diag = vec![1.0 / (d as f64).sqrt(); d];
    let third = if d >= 2 {
        VectorField::Rotational { center: c.clone(), radius: 0.3 * l }
    } else {
        VectorField::Directional { center: shifted(&c, 0.1 * l), radius: 0.3 * l, direction: vec![-1.0] }
    };
    vec![
        IbpTriple {
            f: cyl[0].clone(),
            g: CylinderFunction::new(SquashedQuadratic::constant(1, 1.0), vec![Bump::new(c.clone(), 0.25 * l)]).expect("arity 1"),
            v: VectorField::Directional { center: c.clone(), radius: 0.3 * l, direction: e0 },
        },
        IbpTriple {
            f: cyl[1].clone(),
            g: CylinderFunction::linear(Bump::new(shifted(&c, 0.15 * l), 0.2 * l)),
            v: VectorField::Directional { center: c.clone(), radius: 0.35 * l, direction: diag },
        },
        IbpTriple { f: cyl[2].clone(), g: cyl[1].clone(), v: third },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn everything_is_interior() {
        for d in 1..=3 {
            let dom = BoxDomain::cube(d, 3.0).unwrap();
            for f in standard_cylinders(&dom) {
                assert!(f.fs.iter().all(|b| b.inside_box(dom.lengths(), 0.0)));
            }
            for t in standard_ibp_triples(&dom) {
                t.v.validate().unwrap();
                assert!(t.v.inside(&dom));
            }
        }
    }
}

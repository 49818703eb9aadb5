//! Exact (quadrature) partition functions and correlation functions for
//! small systems.
//!
//! The normalizer is the unsymmetrized integral Z = ∫_{Λ^N} e^{−βE} dx, so
//! that k^{(1,N)} = N/|Λ| for the ideal gas.

use super::CanonicalEnsemble;
use crate::error::{Error, Result};
use crate::quadrature::{self, Estimate, Tolerance};

/// Largest N·d for which the partition function is integrated.
pub const PARTITION_DIM_CAP: usize = 6;
/// Largest (N − n)·d for which correlation functions are integrated.
pub const CORRELATION_DIM_CAP: usize = 4;

pub(crate) fn tolerance(quad_tol: f64) -> Tolerance {
    Tolerance::relative(quad_tol).with_abs(1e-290)
}

fn falling(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n - i) as f64).product()
}

/// Kink and shoulder radii of the potential used as cut points (d = 1).
fn cut_radii(ens: &CanonicalEnsemble) -> Vec<f64> {
    let pot = &ens.potential;
    let mut radii = vec![0.0];
    if !pot.is_ideal() {
        let s = pot.length_scale();
        radii.extend([0.6 * s, 0.8 * s, s]);
    }
    radii.extend(pot.breakpoints());
    radii
}

/// Cut points along one axis (d = 1 only): the positions of the particles
/// already placed, shifted by the potential's kink radii.
pub(crate) fn axis_breaks(ens: &CanonicalEnsemble, placed: &[f64]) -> Vec<f64> {
    if ens.dim() != 1 {
        return Vec::new();
    }
    let radii = cut_radii(ens);
    let mut out = Vec::with_capacity(placed.len() * radii.len() * 2);
    for p in placed {
        for r in &radii {
            out.push(p - r);
            out.push(p + r);
        }
    }
    out
}

/// ∫_{Λ^m} exp(−β [E(fixed ∪ Y) − (1 − include_fixed) E(fixed)]) dY.
fn free_integral(ens: &CanonicalEnsemble, fixed: &[f64], m: usize, include_fixed: bool, tol: &Tolerance) -> Result<Estimate> {
    let d = ens.dim();
    let pot = &ens.potential;
    let e_fixed = if include_fixed { pot.points_energy(fixed) } else { 0.0 };
    if m == 0 {
        return Ok(Estimate { value: ens.boltzmann(e_fixed), error: 0.0 });
    }
    if e_fixed == f64::INFINITY && ens.beta > 0.0 {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let vol = ens.domain.volume();
    let tol = Tolerance { abs: tol.abs.max(tol.rel * 1e-6 * vol.powi(m as i32)), ..*tol };
    if d == 1 {
        // The free particles are exchangeable: integrate over y_1 < … < y_m
        // and multiply by m!.
        let mut ys = Vec::with_capacity(m);
        let o = ordered_level(ens, fixed, m, e_fixed, &tol, &mut ys);
        let fact: f64 = (1..=m).map(|i| i as f64).product();
        return o.into_result().map(|e| Estimate { value: fact * e.value, error: fact * e.error });
    }
    let lo = vec![0.0; m * d];
    let hi: Vec<f64> = (0..m).flat_map(|_| ens.domain.lengths().to_vec()).collect();
    let integrand = |y: &[f64]| {
        let mut e = e_fixed;
        for (i, p) in y.chunks(d).enumerate() {
            e += pot.particle_energy(fixed, p, None);
            for q in y[(i + 1) * d..].chunks(d) {
                e += pot.pair(p, q);
            }
        }
        ens.boltzmann(e)
    };
    let breaks = |axis: usize, outer: &[f64]| {
        let mut placed = fixed.to_vec();
        placed.extend_from_slice(&outer[..axis - axis % d]);
        axis_breaks(ens, &placed)
    };
    quadrature::integrate_box(integrand, &lo, &hi, &breaks, &tol)
}

/// One level of the ordered d = 1 recursion: integrates y_k over
/// [y_{k−1}, L] with the energy of everything placed so far in `e`.
fn ordered_level(ens: &CanonicalEnsemble, fixed: &[f64], m: usize, e: f64, tol: &Tolerance, ys: &mut Vec<f64>) -> quadrature::Outcome {
    let pot = &ens.potential;
    let l = ens.domain.lengths()[0];
    let lo = ys.last().copied().unwrap_or(0.0);
    // Kinks come from the fixed points and from the nearest placed
    // neighbour; the other placed points lie further left.
    let mut placed = fixed.to_vec();
    placed.extend(ys.last());
    let cuts = axis_breaks(ens, &placed);
    let last = ys.len() + 1 == m;
    let inner_tol = tol.inner(l - lo);
    quadrature::adaptive_with_error(
        |y| {
            let p = [y];
            let e_new = e + pot.particle_energy(fixed, &p, None) + pot.particle_energy(ys, &p, None);
            if e_new == f64::INFINITY && ens.beta > 0.0 {
                return (0.0, 0.0);
            }
            if last {
                return (ens.boltzmann(e_new), 0.0);
            }
            ys.push(y);
            let o = ordered_level(ens, fixed, m, e_new, &inner_tol, ys);
            ys.pop();
            (o.value, o.error)
        },
        lo,
        l,
        &cuts,
        tol,
    )
}

/// Z^{(N)}_Λ = ∫_{Λ^N} exp(−βE) dx (unsymmetrized) with an error bound.
pub fn partition_oracle(ens: &CanonicalEnsemble, quad_tol: f64) -> Result<Estimate> {
    let dim = ens.n * ens.dim();
    if dim > PARTITION_DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: PARTITION_DIM_CAP });
    }
    free_integral(ens, &[], ens.n, true, &tolerance(quad_tol))
}

/// k^{(n,N)} at each evaluation point (flat n·d coordinates).
pub fn correlation_oracle(ens: &CanonicalEnsemble, n: usize, points: &[Vec<f64>], quad_tol: f64) -> Result<Vec<Estimate>> {
    let o = Oracle::new(ens.clone(), quad_tol)?;
    points.iter().map(|x| o.correlation(n, x)).collect()
}

/// Partition function computed once, reused for correlation queries.
#[derive(Debug, Clone)]
pub struct Oracle {
    ens: CanonicalEnsemble,
    tol: Tolerance,
    z: Estimate,
}

impl Oracle {
    pub fn new(ens: CanonicalEnsemble, quad_tol: f64) -> Result<Self> {
        let z = partition_oracle(&ens, quad_tol)?;
        if !(z.value > 0.0) {
            return Err(Error::Precondition("partition function vanishes".into()));
        }
        Ok(Oracle { ens, tol: tolerance(quad_tol), z })
    }

    pub fn ensemble(&self) -> &CanonicalEnsemble {
        &self.ens
    }

    pub fn partition(&self) -> Estimate {
        self.z
    }

    fn check_order(&self, n: usize, x: &[f64]) -> Result<Option<Estimate>> {
        let d = self.ens.dim();
        if x.len() != n * d {
            return Err(Error::DimensionMismatch { expected: n * d, found: x.len() });
        }
        if n == 0 {
            return Ok(Some(Estimate { value: 1.0, error: 0.0 }));
        }
        if n > self.ens.n {
            return Ok(Some(Estimate { value: 0.0, error: 0.0 }));
        }
        let dim = (self.ens.n - n) * d;
        if dim > CORRELATION_DIM_CAP {
            return Err(Error::DimensionCap { dim, cap: CORRELATION_DIM_CAP });
        }
        Ok(None)
    }

    fn scaled(&self, n: usize, i: Estimate) -> Estimate {
        let c = falling(self.ens.n, n) / self.z.value;
        let value = c * i.value;
        let rel = if i.value != 0.0 { i.error / i.value.abs() } else { 0.0 };
        let error = if i.value == 0.0 { c * i.error } else { value.abs() * (rel + self.z.error / self.z.value) };
        Estimate { value, error }
    }

    /// k^{(n,N)}(x_1, …, x_n).
    pub fn correlation(&self, n: usize, x: &[f64]) -> Result<Estimate> {
        if let Some(e) = self.check_order(n, x)? {
            return Ok(e);
        }
        let i = free_integral(&self.ens, x, self.ens.n - n, true, &self.tol)?;
        Ok(self.scaled(n, i))
    }

    /// k^{(n,N)}(x) · exp(β Σ_{i<j} φ(x_i − x_j)), finite even at
    /// near-coincident points where k itself underflows.
    pub fn correlation_reduced(&self, n: usize, x: &[f64]) -> Result<Estimate> {
        if n > self.ens.n {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        if let Some(e) = self.check_order(n, x)? {
            return Ok(e);
        }
        let i = free_integral(&self.ens, x, self.ens.n - n, false, &self.tol)?;
        Ok(self.scaled(n, i))
    }

    /// Average of k^{(1,N)} over the cell `[lo, hi]`.
    pub fn one_point_cell(&self, lo: &[f64], hi: &[f64]) -> Result<Estimate> {
        let ens = &self.ens;
        let d = ens.dim();
        let n = ens.n;
        if n == 0 {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        let vol: f64 = lo.iter().zip(hi).map(|(a, b)| b - a).product();
        let mut blo = lo.to_vec();
        let mut bhi = hi.to_vec();
        for _ in 1..n {
            blo.extend(std::iter::repeat(0.0).take(d));
            bhi.extend_from_slice(ens.domain.lengths());
        }
        let f = |x: &[f64]| ens.density_unnormalized(x);
        let breaks = |axis: usize, outer: &[f64]| axis_breaks(ens, &outer[..axis - axis % d]);
        let i = quadrature::integrate_box(f, &blo, &bhi, &breaks, &self.tol)?;
        let e = self.scaled(1, i);
        Ok(Estimate { value: e.value / vol, error: e.error / vol })
    }

    /// Average of k^{(2,N)} over the pairs with separation in `[r_lo, r_hi)`
    /// (d = 1).
    pub fn pair_distance_bin(&self, r_lo: f64, r_hi: f64) -> Result<Estimate> {
        let ens = &self.ens;
        if ens.dim() != 1 {
            return Err(Error::Precondition("pair-distance bin oracle is implemented for d = 1".into()));
        }
        let n = ens.n;
        if n < 2 {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        let l = ens.domain.lengths()[0];
        let (a, b) = (r_lo.max(0.0).min(l), r_hi.min(l));
        let region = (l - a).powi(2) - (l - b).powi(2);
        if region <= 0.0 {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        // Coordinates (r, u, y_1 … y_{N−2}) with x = u (L − r), pair (x, x + r).
        let mut lo = vec![a, 0.0];
        let mut hi = vec![b, 1.0];
        lo.extend(std::iter::repeat(0.0).take(n - 2));
        hi.extend(std::iter::repeat(l).take(n - 2));
        let pot = &ens.potential;
        let f = |v: &[f64]| {
            let (r, u) = (v[0], v[1]);
            let x = u * (l - r);
            let mut pts = Vec::with_capacity(n);
            pts.push(x);
            pts.push(x + r);
            pts.extend_from_slice(&v[2..]);
            (l - r) * ens.boltzmann(pot.points_energy(&pts))
        };
        let breaks = |axis: usize, outer: &[f64]| {
            if axis == 0 {
                let mut radii = vec![pot.length_scale()];
                radii.extend(pot.breakpoints());
                return radii;
            }
            if axis == 1 {
                return Vec::new();
            }
            let (r, u) = (outer[0], outer[1]);
            let x = u * (l - r);
            let mut placed = vec![x, x + r];
            placed.extend_from_slice(&outer[2..axis]);
            axis_breaks(ens, &placed)
        };
        let i = quadrature::integrate_box(f, &lo, &hi, &breaks, &self.tol)?;
        let e = self.scaled(2, i);
        Ok(Estimate { value: 2.0 * e.value / region, error: 2.0 * e.error / region })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::BoxDomain;
    use crate::potential::PairPotentialModel;

    fn ideal(n: usize, l: f64, d: usize) -> CanonicalEnsemble {
        CanonicalEnsemble::new(n, BoxDomain::cube(d, l).unwrap(), 1.0, PairPotentialModel::ideal_gas(d)).unwrap()
    }

    #[test]
    fn ideal_partition_is_volume_power() {
        for n in 1..=3 {
            let z = partition_oracle(&ideal(n, 1.7, 2), 1e-10).unwrap();
            assert!((z.value - 1.7f64.powi(2 * n as i32)).abs() < 1e-9 * z.value);
        }
        assert_eq!(partition_oracle(&ideal(0, 2.0, 1), 1e-10).unwrap().value, 1.0);
    }

    #[test]
    fn dimension_cap() {
        assert_eq!(partition_oracle(&ideal(4, 1.0, 2), 1e-6).unwrap_err(), Error::DimensionCap { dim: 8, cap: 6 });
    }

    #[test]
    fn ideal_correlations() {
        let ens = ideal(3, 2.0, 1);
        let o = Oracle::new(ens, 1e-10).unwrap();
        assert!((o.correlation(1, &[0.3]).unwrap().value - 1.5).abs() < 1e-10);
        assert!((o.correlation(2, &[0.3, 1.1]).unwrap().value - 6.0 / 4.0).abs() < 1e-10);
        assert_eq!(o.correlation(0, &[]).unwrap().value, 1.0);
        assert_eq!(o.correlation(4, &[0.1, 0.2, 0.3, 0.4]).unwrap().value, 0.0);
        assert!((o.pair_distance_bin(0.2, 0.5).unwrap().value - 1.5).abs() < 1e-9);
        assert!((o.one_point_cell(&[0.0], &[0.5]).unwrap().value - 1.5).abs() < 1e-9);
    }

    #[test]
    fn bounded_step_pair_closed_form() {
        let (l, c, a, beta) = (3.0, 0.8, 0.6, 1.2);
        let pot = PairPotentialModel::bounded_step(1, c, a).unwrap();
        let ens = CanonicalEnsemble::new(2, BoxDomain::cube(1, l).unwrap(), beta, pot).unwrap();
        let z = partition_oracle(&ens, 1e-12).unwrap();
        let exact = l * l - (1.0 - (-beta * c as f64).exp()) * (2.0 * a * l - a * a);
        assert!((z.value - exact).abs() < 1e-10 * exact, "{} vs {exact}", z.value);
    }

    #[test]
    fn reduced_correlation_is_finite_near_collision() {
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let ens = CanonicalEnsemble::new(3, BoxDomain::cube(1, 4.0).unwrap(), 1.0, pot).unwrap();
        let o = Oracle::new(ens, 1e-8).unwrap();
        let raw = o.correlation(2, &[2.0, 2.001]).unwrap().value;
        let reduced = o.correlation_reduced(2, &[2.0, 2.001]).unwrap().value;
        assert_eq!(raw, 0.0);
        assert!(reduced.is_finite() && reduced > 0.0);
    }
}

//! Adaptive Gauss–Kronrod quadrature (7/15 point pair) with global
//! subdivision, a semi-infinite variant, and nested tensor-product
//! integration over boxes.
//!
//! Integrands may report their own error (for example when they are
//! themselves quadratures). That error is folded into the Kronrod sum so a
//! nested integral never claims more accuracy than its inner levels.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

const INNER_FACTOR: f64 = 0.25;

/// Value of an integral together with an error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

/// Stopping rule: finish once `error <= max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub fn relative(rel: f64) -> Self {
        Tolerance { rel, abs: 0.0, max_intervals: 2000 }
    }

    pub fn with_abs(mut self, abs: f64) -> Self {
        self.abs = abs;
        self
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    /// Tolerance for an inner integral nested under an outer axis of the
    /// given width. Inner errors are added to the outer error, so a modest
    /// tightening suffices.
    pub fn inner(&self, width: f64) -> Tolerance {
        let width = width.max(f64::MIN_POSITIVE);
        Tolerance {
            rel: (self.rel * INNER_FACTOR).max(1e-13),
            abs: self.abs * INNER_FACTOR / width,
            max_intervals: self.max_intervals.min(400),
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

/// Outcome of an adaptive run; `converged` tells whether the tolerance was met.
#[derive(Debug, Clone, Copy)]
pub struct Outcome {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Outcome {
    pub fn into_result(self) -> Result<Estimate> {
        if self.converged && self.value.is_finite() {
            Ok(Estimate { value: self.value, error: self.error })
        } else {
            Err(Error::QuadratureFailure { partial: self.value, error: self.error })
        }
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn kronrod<F: FnMut(f64) -> (f64, f64)>(f: &mut F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let (fc, ec) = f(center);
    let mut res_k = fc * WGK[7];
    let mut res_g = fc * WG[3];
    let mut res_abs = res_k.abs();
    let mut inner = ec.abs() * WGK[7];
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..3 {
        let jt = 2 * j + 1;
        let dx = half * XGK[jt];
        let (f1, e1) = f(center - dx);
        let (f2, e2) = f(center + dx);
        fv1[jt] = f1;
        fv2[jt] = f2;
        res_g += WG[j] * (f1 + f2);
        res_k += WGK[jt] * (f1 + f2);
        res_abs += WGK[jt] * (f1.abs() + f2.abs());
        inner += WGK[jt] * (e1.abs() + e2.abs());
    }
    for j in 0..4 {
        let jt = 2 * j;
        let dx = half * XGK[jt];
        let (f1, e1) = f(center - dx);
        let (f2, e2) = f(center + dx);
        fv1[jt] = f1;
        fv2[jt] = f2;
        res_k += WGK[jt] * (f1 + f2);
        res_abs += WGK[jt] * (f1.abs() + f2.abs());
        inner += WGK[jt] * (e1.abs() + e2.abs());
    }
    let mean = res_k * 0.5;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    let value = res_k * half;
    res_abs *= h;
    res_asc *= h;
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (1.0f64).min((200.0 * err / res_asc).powf(1.5));
    }
    let floor = 50.0 * f64::EPSILON * res_abs;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) && err < floor {
        err = floor;
    }
    Segment { a, b, value, error: err + inner * h }
}

/// Adaptive integration of an integrand that returns `(value, error)`.
///
/// Never fails: the best estimate is returned with `converged = false` when
/// the interval budget runs out.
pub fn adaptive_with_error<F>(mut f: F, a: f64, b: f64, breakpoints: &[f64], tol: &Tolerance) -> Outcome
where
    F: FnMut(f64) -> (f64, f64),
{
    if a == b {
        return Outcome { value: 0.0, error: 0.0, converged: true };
    }
    let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
    let mut cuts = vec![lo];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > lo && p < hi).collect();
    inner.sort_by(|x, y| x.partial_cmp(y).unwrap());
    inner.dedup();
    cuts.extend(inner);
    cuts.push(hi);

    let mut segs: Vec<Segment> = cuts.windows(2).map(|w| kronrod(&mut f, w[0], w[1])).collect();
    let budget = tol.max_intervals.max(segs.len());
    loop {
        let value: f64 = segs.iter().map(|s| s.value).sum();
        let error: f64 = segs.iter().map(|s| s.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Outcome { value: sign * value, error, converged: false };
        }
        if error <= tol.target(value) {
            return Outcome { value: sign * value, error, converged: true };
        }
        if segs.len() >= budget {
            return Outcome { value: sign * value, error, converged: false };
        }
        let worst = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap())
            .map(|(i, _)| i)
            .unwrap();
        let s = segs.swap_remove(worst);
        let mid = 0.5 * (s.a + s.b);
        if mid <= s.a || mid >= s.b {
            // Interval cannot be split further in floating point.
            return Outcome { value: sign * value, error, converged: false };
        }
        segs.push(kronrod(&mut f, s.a, mid));
        segs.push(kronrod(&mut f, mid, s.b));
    }
}

/// Adaptive integral of `f` over `[a, b]`, split first at `breakpoints`.
pub fn integrate<F>(mut f: F, a: f64, b: f64, breakpoints: &[f64], tol: &Tolerance) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    adaptive_with_error(|x| (f(x), 0.0), a, b, breakpoints, tol).into_result()
}

/// Integral of `f` over `[a, ∞)` via the substitution `r = a + (1 - t)/t`.
pub fn integrate_to_infinity<F>(mut f: F, a: f64, tol: &Tolerance) -> Result<Estimate>
where
    F: FnMut(f64) -> f64,
{
    let g = |t: f64| {
        if t <= 0.0 {
            return (0.0, 0.0);
        }
        let r = a + (1.0 - t) / t;
        (f(r) / (t * t), 0.0)
    };
    adaptive_with_error(g, 0.0, 1.0, &[], tol).into_result()
}

/// Breakpoint hook for [`integrate_box`]: given the axis index and the
/// coordinates already fixed on outer axes, return interior cut points.
pub type AxisBreaks<'a> = &'a dyn Fn(usize, &[f64]) -> Vec<f64>;

/// No breakpoints on any axis.
pub fn no_breaks(_axis: usize, _outer: &[f64]) -> Vec<f64> {
    Vec::new()
}

/// Nested adaptive integral of `f` over the box `[lo, hi]`.
///
/// Axis 0 is outermost. Inner levels run at a quarter of the outer
/// tolerance and report their error upward; only the outermost level can fail.
pub fn integrate_box<F>(f: F, lo: &[f64], hi: &[f64], breaks: AxisBreaks<'_>, tol: &Tolerance) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64,
{
    if lo.len() != hi.len() {
        return Err(Error::DimensionMismatch { expected: lo.len(), found: hi.len() });
    }
    if lo.is_empty() {
        return Ok(Estimate { value: f(&[]), error: 0.0 });
    }
    let mut x = vec![0.0; lo.len()];
    nested(&f, lo, hi, breaks, tol, 0, &mut x).into_result()
}

fn nested<F>(f: &F, lo: &[f64], hi: &[f64], breaks: AxisBreaks<'_>, tol: &Tolerance, axis: usize, x: &mut Vec<f64>) -> Outcome
where
    F: Fn(&[f64]) -> f64,
{
    let cuts = breaks(axis, &x[..axis]);
    if axis + 1 == lo.len() {
        return adaptive_with_error(
            |t| {
                x[axis] = t;
                (f(x), 0.0)
            },
            lo[axis],
            hi[axis],
            &cuts,
            tol,
        );
    }
    let inner_tol = tol.inner((hi[axis] - lo[axis]).abs());
    adaptive_with_error(
        |t| {
            x[axis] = t;
            let o = nested(f, lo, hi, breaks, &inner_tol, axis + 1, x);
            (o.value, o.error)
        },
        lo[axis],
        hi[axis],
        &cuts,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let e = integrate(|x| x.powi(5) - 2.0 * x, 0.0, 2.0, &[], &Tolerance::relative(1e-12)).unwrap();
        assert!((e.value - (64.0 / 6.0 - 4.0)).abs() < 1e-12);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let t = Tolerance::relative(1e-12);
        let a = integrate(f64::sin, 0.0, 1.0, &[], &t).unwrap().value;
        let b = integrate(f64::sin, 1.0, 0.0, &[], &t).unwrap().value;
        assert_eq!(a, -b);
    }

    #[test]
    fn kink_with_breakpoint() {
        let e = integrate(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], &Tolerance::relative(1e-13)).unwrap();
        assert!((e.value - (0.045 + 0.245)).abs() < 1e-13);
    }

    #[test]
    fn step_converges_without_breakpoint() {
        let e = integrate(|x| if x < 1.0 / 3.0 { 1.0 } else { 0.0 }, 0.0, 1.0, &[], &Tolerance::relative(1e-9))
            .unwrap();
        assert!((e.value - 1.0 / 3.0).abs() <= e.error.max(1e-9));
    }

    #[test]
    fn gaussian_tail() {
        let e = integrate_to_infinity(|x| (-x * x).exp(), 0.0, &Tolerance::relative(1e-10)).unwrap();
        assert!((e.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-10);
    }

    #[test]
    fn budget_exhaustion_reports_partial() {
        let t = Tolerance::relative(1e-14).with_max_intervals(3);
        match integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &[], &t) {
            Err(Error::QuadratureFailure { partial, .. }) => assert!(partial > 1.0 && partial < 2.0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn box_product() {
        let e = integrate_box(
            |x| x[0] * x[1] * x[1] * (x[2] + 1.0),
            &[0.0, 0.0, 0.0],
            &[1.0, 2.0, 1.0],
            &no_breaks,
            &Tolerance::relative(1e-10),
        )
        .unwrap();
        let exact = 0.5 * (8.0 / 3.0) * 1.5;
        assert!((e.value - exact).abs() < 1e-10);
    }

    #[test]
    fn box_zero_dimensional() {
        let e = integrate_box(|_| 4.0, &[], &[], &no_breaks, &Tolerance::relative(1e-10)).unwrap();
        assert_eq!(e.value, 4.0);
    }
}

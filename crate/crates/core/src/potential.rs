//! Radial pair potentials, configuration energies, the Mayer integral and
//! grid-based checks of the standing regularity conditions.

use serde::{Deserialize, Serialize};

use crate::configspace::Configuration;
use crate::error::{Error, Result};
use crate::quadrature::{self, Estimate, Tolerance};

/// Shape of the radial profile `u(r)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    IdealGas,
    /// `ε (σ/r)^p`
    SoftSphere { epsilon: f64, sigma: f64, exponent: f64 },
    /// `4ε [(σ/r)^12 − (σ/r)^6]`
    LennardJones { epsilon: f64, sigma: f64 },
    /// `c` for `r < a`, else 0.
    BoundedStep { height: f64, radius: f64 },
    /// Cubic Hermite interpolation through `(r, u)` nodes; constant below the
    /// first node and zero beyond the last.
    UserTable { r: Vec<f64>, u: Vec<f64> },
}

/// Constants the user asserts for the regularity conditions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants {
    /// Lower bound: φ ≥ −B.
    pub b: Option<f64>,
    /// Tail bound: |φ(x)| ≤ A |x|^{−λ} for |x| ≥ R2.
    pub a: Option<f64>,
    pub lambda: Option<f64>,
    pub r2: Option<f64>,
    /// Repulsion: φ(x) ≥ Φ(|x|) = |x|^{−exponent} for |x| ≤ R1.
    pub r1: Option<f64>,
    pub rp_exponent: Option<f64>,
}

/// Superstability constants `D`, `K`, used only by the low-density check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Superstability {
    pub d: f64,
    pub k: f64,
}

/// A pair potential φ(x) = u(|x|) on R^d, optionally truncated and shifted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPotentialModel {
    dim: usize,
    kind: PotentialKind,
    cutoff: Option<f64>,
    shift: f64,
    slopes: Vec<f64>,
    pub declared: DeclaredConstants,
    pub ss: Superstability,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PairPotentialModel {
    pub fn new(dim: usize, kind: PotentialKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Precondition("dimension must be at least 1".into()));
        }
        let mut slopes = Vec::new();
        match &kind {
            PotentialKind::IdealGas => {}
            PotentialKind::SoftSphere { epsilon, sigma, exponent } => {
                positive("epsilon", *epsilon)?;
                positive("sigma", *sigma)?;
                positive("exponent", *exponent)?;
            }
            PotentialKind::LennardJones { epsilon, sigma } => {
                positive("epsilon", *epsilon)?;
                positive("sigma", *sigma)?;
            }
            PotentialKind::BoundedStep { height, radius } => {
                if !height.is_finite() {
                    return Err(Error::Precondition("step height must be finite".into()));
                }
                positive("step radius", *radius)?;
            }
            PotentialKind::UserTable { r, u } => {
                if r.len() != u.len() || r.len() < 2 {
                    return Err(Error::Precondition("table needs at least two (r, u) nodes of equal length".into()));
                }
                if r[0] <= 0.0 || r.windows(2).any(|w| !(w[1] > w[0])) || r.iter().chain(u).any(|v| !v.is_finite())
                {
                    return Err(Error::Precondition("table radii must be positive, finite and strictly increasing".into()));
                }
                slopes = table_slopes(r, u);
            }
        }
        let scale = energy_scale(&kind);
        let declared = if kind == PotentialKind::IdealGas {
            DeclaredConstants {
                b: Some(0.0),
                a: Some(0.0),
                lambda: Some(dim as f64 + 1.0),
                r2: Some(1.0),
                r1: None,
                rp_exponent: None,
            }
        } else {
            DeclaredConstants::default()
        };
        Ok(PairPotentialModel {
            dim,
            kind,
            cutoff: None,
            shift: 0.0,
            slopes,
            declared,
            ss: Superstability { d: 0.1 * scale, k: scale },
        })
    }

    pub fn ideal_gas(dim: usize) -> Self {
        Self::new(dim, PotentialKind::IdealGas).unwrap()
    }

    pub fn soft_sphere(dim: usize, epsilon: f64, sigma: f64, exponent: f64) -> Result<Self> {
        Self::new(dim, PotentialKind::SoftSphere { epsilon, sigma, exponent })
    }

    pub fn lennard_jones(dim: usize, epsilon: f64, sigma: f64) -> Result<Self> {
        Self::new(dim, PotentialKind::LennardJones { epsilon, sigma })
    }

    pub fn bounded_step(dim: usize, height: f64, radius: f64) -> Result<Self> {
        Self::new(dim, PotentialKind::BoundedStep { height, radius })
    }

    pub fn user_table(dim: usize, r: Vec<f64>, u: Vec<f64>) -> Result<Self> {
        Self::new(dim, PotentialKind::UserTable { r, u })
    }

    /// Truncate at `r_cut` and shift so the profile is continuous there.
    pub fn with_cutoff(mut self, r_cut: f64) -> Result<Self> {
        positive("cutoff", r_cut)?;
        self.cutoff = None;
        self.shift = 0.0;
        let s = self.raw(r_cut);
        if !s.is_finite() {
            return Err(Error::Precondition("potential is infinite at the cutoff".into()));
        }
        self.shift = s;
        self.cutoff = Some(r_cut);
        Ok(self)
    }

    pub fn with_declared(mut self, declared: DeclaredConstants) -> Self {
        self.declared = declared;
        self
    }

    pub fn with_superstability(mut self, d: f64, k: f64) -> Self {
        self.ss = Superstability { d, k };
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &PotentialKind {
        &self.kind
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.cutoff
    }

    pub fn is_ideal(&self) -> bool {
        self.kind == PotentialKind::IdealGas
    }

    /// Whether φ(0) = +∞.
    pub fn is_singular(&self) -> bool {
        matches!(self.kind, PotentialKind::SoftSphere { .. } | PotentialKind::LennardJones { .. })
    }

    /// Characteristic length (σ, step radius, last table node, or 1).
    pub fn length_scale(&self) -> f64 {
        match &self.kind {
            PotentialKind::IdealGas => 1.0,
            PotentialKind::SoftSphere { sigma, .. } | PotentialKind::LennardJones { sigma, .. } => *sigma,
            PotentialKind::BoundedStep { radius, .. } => *radius,
            PotentialKind::UserTable { r, .. } => *r.last().unwrap(),
        }
    }

    /// Characteristic energy (ε, |c|, max |u|, or 1).
    pub fn energy_scale(&self) -> f64 {
        energy_scale(&self.kind)
    }

    /// Radii where the profile has a kink or jump (cutoff included).
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = match &self.kind {
            PotentialKind::BoundedStep { radius, .. } => vec![*radius],
            PotentialKind::UserTable { r, .. } => r.clone(),
            _ => vec![],
        };
        if let Some(rc) = self.cutoff {
            b.retain(|x| *x < rc);
            b.push(rc);
        }
        b
    }

    fn raw(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::IdealGas => 0.0,
            PotentialKind::SoftSphere { epsilon, sigma, exponent } => {
                if r == 0.0 {
                    f64::INFINITY
                } else {
                    epsilon * (sigma / r).powf(*exponent)
                }
            }
            PotentialKind::LennardJones { epsilon, sigma } => {
                if r == 0.0 {
                    return f64::INFINITY;
                }
                let s6 = (sigma / r).powi(6);
                4.0 * epsilon * (s6 * s6 - s6)
            }
            PotentialKind::BoundedStep { height, radius } => {
                if r < *radius {
                    *height
                } else {
                    0.0
                }
            }
            PotentialKind::UserTable { r: rs, u } => table_eval(rs, u, &self.slopes, r).0,
        }
    }

    fn raw_derivative(&self, r: f64) -> f64 {
        match &self.kind {
            PotentialKind::IdealGas | PotentialKind::BoundedStep { .. } => 0.0,
            PotentialKind::SoftSphere { epsilon, sigma, exponent } => {
                -exponent * epsilon * (sigma / r).powf(*exponent) / r
            }
            PotentialKind::LennardJones { epsilon, sigma } => {
                let s6 = (sigma / r).powi(6);
                4.0 * epsilon * (-12.0 * s6 * s6 + 6.0 * s6) / r
            }
            PotentialKind::UserTable { r: rs, u } => table_eval(rs, u, &self.slopes, r).1,
        }
    }

    /// u(r) including truncation and shift; `+∞` at r = 0 for singular kinds.
    pub fn radial_value(&self, r: f64) -> f64 {
        match self.cutoff {
            Some(rc) if r >= rc => 0.0,
            _ => self.raw(r) - self.shift,
        }
    }

    /// u'(r) for r > 0 (zero beyond the cutoff).
    pub fn radial_derivative(&self, r: f64) -> f64 {
        match self.cutoff {
            Some(rc) if r >= rc => 0.0,
            _ => self.raw_derivative(r),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() == self.dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim, found: x.len() })
        }
    }

    /// φ(x).
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.radial_value(norm(x)))
    }

    /// ∇φ(x) for x ≠ 0.
    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        let mut g = vec![0.0; self.dim];
        self.gradient_into(x, &mut g)?;
        Ok(g)
    }

    /// ∇φ(x) written into `out`.
    pub fn gradient_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let r = norm(x);
        if r == 0.0 {
            return Err(Error::SingularPoint);
        }
        let c = self.radial_derivative(r) / r;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = c * xi;
        }
        Ok(())
    }

    /// φ(p − q) for two points given as slices.
    pub fn pair(&self, p: &[f64], q: &[f64]) -> f64 {
        self.radial_value(distance(p, q))
    }

    /// Σ_{i<j} φ(x_i − x_j) over flat coordinates; `+∞` for coincident
    /// points under a singular potential.
    pub fn points_energy(&self, coords: &[f64]) -> f64 {
        let d = self.dim;
        let n = coords.len() / d;
        let mut e = 0.0;
        for i in 0..n {
            let p = &coords[i * d..(i + 1) * d];
            for j in (i + 1)..n {
                e += self.pair(p, &coords[j * d..(j + 1) * d]);
            }
        }
        e
    }

    /// Σ_{j≠skip} φ(pos − x_j): the energy of one particle at `pos` against
    /// all stored particles except index `skip`.
    pub fn particle_energy(&self, coords: &[f64], pos: &[f64], skip: Option<usize>) -> f64 {
        let d = self.dim;
        let mut e = 0.0;
        for (j, q) in coords.chunks(d).enumerate() {
            if Some(j) != skip {
                e += self.pair(pos, q);
            }
        }
        e
    }

    /// E_φ(γ) = Σ_{{x,y}⊂γ} φ(x − y).
    pub fn energy(&self, gamma: &Configuration) -> Result<f64> {
        if gamma.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: gamma.dim() });
        }
        let e = self.points_energy(gamma.coords());
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::InfiniteEnergy)
        }
    }

    /// W_φ(γ, η) = Σ_{x∈γ, y∈η} φ(x − y).
    pub fn interaction_energy(&self, gamma: &Configuration, eta: &Configuration) -> Result<f64> {
        for c in [gamma, eta] {
            if c.dim() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, found: c.dim() });
            }
        }
        let mut e = 0.0;
        for p in gamma.points() {
            for q in eta.points() {
                e += self.pair(p, q);
            }
        }
        if e.is_finite() {
            Ok(e)
        } else {
            Err(Error::InfiniteEnergy)
        }
    }

    /// Radius beyond which the remaining integral runs on the transformed
    /// semi-infinite tail, or `None` when the profile vanishes there.
    fn support_end(&self) -> (f64, bool) {
        if let Some(rc) = self.cutoff {
            return (rc, false);
        }
        match &self.kind {
            PotentialKind::IdealGas => (0.0, false),
            PotentialKind::BoundedStep { radius, .. } => (*radius, false),
            PotentialKind::UserTable { r, .. } => (*r.last().unwrap(), false),
            PotentialKind::SoftSphere { sigma, .. } | PotentialKind::LennardJones { sigma, .. } => (4.0 * sigma, true),
        }
    }

    /// S_{d−1} ∫_0^∞ g(r) r^{d−1} dr, split at the profile's breakpoints.
    fn radial_integral(&self, g: impl Fn(f64) -> f64, tol: f64) -> Result<Estimate> {
        let d = self.dim as i32;
        let w = |r: f64| if d == 1 { g(r) } else { g(r) * r.powi(d - 1) };
        let (end, tail) = self.support_end();
        let mut breaks = self.breakpoints();
        if let PotentialKind::LennardJones { sigma, .. } | PotentialKind::SoftSphere { sigma, .. } = self.kind {
            breaks.push(sigma);
        }
        let t = Tolerance::relative(0.5 * tol).with_abs(1e-300);
        let mut total = Estimate { value: 0.0, error: 0.0 };
        if end > 0.0 {
            let e = quadrature::integrate(&w, 0.0, end, &breaks, &t)?;
            total.value += e.value;
            total.error += e.error;
        }
        if tail {
            let e = quadrature::integrate_to_infinity(&w, end, &t)?;
            total.value += e.value;
            total.error += e.error;
        }
        let s = sphere_area(self.dim);
        Ok(Estimate { value: s * total.value, error: s * total.error })
    }

    /// J(β) = ∫ |exp(−βφ(x)) − 1| dx with error ≤ `quad_tol · J`.
    pub fn mayer_integral(&self, beta: f64, quad_tol: f64) -> Result<Estimate> {
        if !(beta >= 0.0) {
            return Err(Error::Precondition(format!("beta must be nonnegative, got {beta}")));
        }
        if beta == 0.0 || self.is_ideal() {
            return Ok(Estimate { value: 0.0, error: 0.0 });
        }
        self.radial_integral(|r| (-beta * self.radial_value(r)).exp_m1().abs(), quad_tol)
    }

    /// Grid certificates for the conditions RP, T, BB, D and I.
    pub fn check_conditions(&self, beta: f64, grid: &ConditionGrid) -> ConditionReport {
        let radii = grid.radii();
        ConditionReport {
            entries: vec![
                self.check_rp(&radii),
                self.check_t(&radii, grid),
                self.check_bb(&radii),
                self.check_d(beta, &radii),
                self.check_i(beta, &radii),
            ],
        }
    }

    fn witness(&self, r: f64) -> Witness {
        let mut point = vec![0.0; self.dim];
        point[0] = r;
        Witness { point, value: self.radial_value(r) }
    }

    fn check_rp(&self, radii: &[f64]) -> ConditionEntry {
        let name = Condition::RP;
        let d = self.dim as f64;
        let exponent = self.declared.rp_exponent;
        let r1 = match (self.declared.r1, self.is_ideal()) {
            (Some(r1), _) => r1,
            (None, true) => *radii.last().unwrap(),
            (None, false) => return ConditionEntry::declared_only(name, "R1 not declared"),
        };
        let phi = |t: f64| match exponent {
            Some(a) => t.powf(-a),
            None => 0.0,
        };
        if exponent.is_none() && !self.is_ideal() {
            return ConditionEntry::declared_only(name, "repulsion exponent not declared");
        }
        if let Some(a) = exponent {
            if a <= d {
                return ConditionEntry::violated(
                    name,
                    self.witness(radii[0]),
                    format!("Φ(t) = t^-{a} does not satisfy Φ(t) t^d → ∞ for d = {d}"),
                );
            }
        }
        for &r in radii.iter().filter(|r| **r <= r1) {
            let u = self.radial_value(r);
            if !u.is_finite() || u < phi(r) {
                return ConditionEntry::violated(
                    name,
                    self.witness(r),
                    format!("φ = {u} below Φ = {} (or unbounded) at r = {r}", phi(r)),
                );
            }
        }
        let summary = match exponent {
            Some(a) => format!("φ ≥ |x|^-{a} on grid points up to R1 = {r1}"),
            None => "Φ ≡ 0: comparison vacuous; no Φ with Φ(t) t^d → ∞ exists for this potential".to_string(),
        };
        ConditionEntry::verified(name, summary)
    }

    fn check_t(&self, radii: &[f64], grid: &ConditionGrid) -> ConditionEntry {
        let name = Condition::T;
        let (Some(a), Some(lambda), Some(r2)) = (self.declared.a, self.declared.lambda, self.declared.r2) else {
            return ConditionEntry::declared_only(name, "A, lambda or R2 not declared");
        };
        if lambda <= self.dim as f64 {
            return ConditionEntry::violated(name, self.witness(r2), format!("lambda = {lambda} is not above d"));
        }
        let far = grid.r_max.max(10.0 * r2);
        let tail = ConditionGrid { r_min: r2, r_max: far, points: 256 }.radii();
        for &r in radii.iter().filter(|r| **r >= r2).chain(tail.iter()) {
            let u = self.radial_value(r).abs();
            let bound = a * r.powf(-lambda);
            if !(u <= bound * (1.0 + 1e-12) + 1e-300) {
                return ConditionEntry::violated(name, self.witness(r), format!("|φ| = {u} exceeds A r^-λ = {bound}"));
            }
        }
        ConditionEntry::verified(name, format!("|φ| ≤ {a} r^-{lambda} on [{r2}, {far}]"))
    }

    fn check_bb(&self, radii: &[f64]) -> ConditionEntry {
        let name = Condition::BB;
        let (rmin, umin) = radii
            .iter()
            .map(|&r| (r, self.radial_value(r)))
            .fold((0.0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let Some(b) = self.declared.b else {
            return ConditionEntry::declared_only(name, format!("B not declared; grid minimum {umin} at r = {rmin}"));
        };
        if umin < -b - 1e-12 * b.abs().max(1.0) {
            return ConditionEntry::violated(name, self.witness(rmin), format!("φ = {umin} below −B = {}", -b));
        }
        let mut e = ConditionEntry::verified(name, format!("grid minimum {umin} ≥ −B = {}", -b));
        e.value = Some(umin);
        e
    }

    fn check_d(&self, beta: f64, radii: &[f64]) -> ConditionEntry {
        let name = Condition::D;
        let scale = self.length_scale();
        let bps = self.breakpoints();
        // Jumps at known breakpoints.
        for &b in &bps {
            let lo = self.radial_value(b * (1.0 - 1e-9));
            let hi = self.radial_value(b * (1.0 + 1e-9));
            let slope = self.radial_derivative(b * (1.0 - 1e-9)).abs().max(self.radial_derivative(b * (1.0 + 1e-9)).abs());
            if (lo - hi).abs() > 1e-6 * (lo.abs() + hi.abs()).max(1e-300) + 4e-9 * b * slope + 1e-12 * self.energy_scale()
            {
                return ConditionEntry::violated(
                    name,
                    self.witness(b),
                    format!("jump of {} at r = {b}: not weakly differentiable", hi - lo),
                );
            }
        }
        let near_break = |r: f64, h: f64| bps.iter().any(|b| (r - b).abs() <= 10.0 * h + 1e-12 * scale);
        // Finite-difference consistency of the derivative.
        for &r in radii {
            let u = self.radial_value(r);
            if !u.is_finite() {
                continue;
            }
            let h = 1e-6 * r;
            if near_break(r, h) {
                continue;
            }
            let fd = (self.radial_value(r + h) - self.radial_value(r - h)) / (2.0 * h);
            let du = self.radial_derivative(r);
            if (fd - du).abs() > 1e-5 * du.abs() + 1e-8 * u.abs() / r + 1e-300 {
                return ConditionEntry::violated(
                    name,
                    self.witness(r),
                    format!("finite difference {fd} disagrees with derivative {du} at r = {r}"),
                );
            }
        }
        // Between grid points, increments must match the integrated derivative.
        for w in radii.windows(2) {
            let (a, b) = (w[0], w[1]);
            if bps.iter().any(|p| *p >= a && *p <= b) {
                continue;
            }
            let (ua, ub) = (self.radial_value(a), self.radial_value(b));
            if !(ua.is_finite() && ub.is_finite()) {
                continue;
            }
            let m = 0.5 * (a + b);
            let simpson = (b - a) / 6.0
                * (self.radial_derivative(a) + 4.0 * self.radial_derivative(m) + self.radial_derivative(b));
            let du = ub - ua;
            if (du - simpson).abs() > 1e-3 * (du.abs() + simpson.abs()) + 1e-9 * (ua.abs() + ub.abs()) + 1e-300 {
                return ConditionEntry::violated(
                    name,
                    self.witness(m),
                    format!("increment {du} on [{a}, {b}] not explained by the derivative ({simpson})"),
                );
            }
        }
        // ∫ |∇φ|^q e^{−βφ} dx for q = 1, 2, 3.
        let mut values = Vec::new();
        for q in 1..=3 {
            let g = |r: f64| {
                let u = self.radial_value(r);
                let w = (-beta * u).exp();
                if w == 0.0 {
                    0.0
                } else {
                    self.radial_derivative(r).abs().powi(q) * w
                }
            };
            match self.radial_integral(g, 1e-6) {
                Ok(e) if e.value.is_finite() => values.push(e.value),
                Ok(e) => {
                    return ConditionEntry::violated(name, self.witness(radii[0]), format!("q = {q} integral is {}", e.value))
                }
                Err(err) => {
                    let r = radii
                        .iter()
                        .copied()
                        .max_by(|x, y| g(*x).partial_cmp(&g(*y)).unwrap_or(std::cmp::Ordering::Equal))
                        .unwrap();
                    return ConditionEntry::violated(name, self.witness(r), format!("q = {q} integral: {err}"));
                }
            }
        }
        ConditionEntry::verified(
            name,
            format!(
                "gradient consistent on grid; ∫|∇φ|^q e^(−βφ) = {:.6e}, {:.6e}, {:.6e} for q = 1, 2, 3",
                values[0], values[1], values[2]
            ),
        )
    }

    fn check_i(&self, beta: f64, radii: &[f64]) -> ConditionEntry {
        let name = Condition::I;
        match self.mayer_integral(beta, 1e-8) {
            Ok(e) => {
                let mut entry = ConditionEntry::verified(name, format!("J(β) = {} ± {}", e.value, e.error));
                entry.value = Some(e.value);
                entry.error = Some(e.error);
                entry
            }
            Err(err) => {
                let r = *radii.last().unwrap();
                let mut entry = ConditionEntry::violated(name, self.witness(r), format!("J(β) not finite: {err}"));
                if let Error::QuadratureFailure { partial, error } = err {
                    entry.value = Some(partial);
                    entry.error = Some(error);
                }
                entry
            }
        }
    }
}

fn energy_scale(kind: &PotentialKind) -> f64 {
    match kind {
        PotentialKind::IdealGas => 1.0,
        PotentialKind::SoftSphere { epsilon, .. } | PotentialKind::LennardJones { epsilon, .. } => *epsilon,
        PotentialKind::BoundedStep { height, .. } => {
            if *height == 0.0 {
                1.0
            } else {
                height.abs()
            }
        }
        PotentialKind::UserTable { u, .. } => {
            let m = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            if m == 0.0 {
                1.0
            } else {
                m
            }
        }
    }
}

fn table_slopes(r: &[f64], u: &[f64]) -> Vec<f64> {
    let n = r.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (u[1] - u[0]) / (r[1] - r[0])
            } else if i == n - 1 {
                (u[n - 1] - u[n - 2]) / (r[n - 1] - r[n - 2])
            } else {
                let (h0, h1) = (r[i] - r[i - 1], r[i + 1] - r[i]);
                let (d0, d1) = ((u[i] - u[i - 1]) / h0, (u[i + 1] - u[i]) / h1);
                (h1 * d0 + h0 * d1) / (h0 + h1)
            }
        })
        .collect()
}

fn table_eval(r: &[f64], u: &[f64], m: &[f64], x: f64) -> (f64, f64) {
    let n = r.len();
    if x < r[0] {
        return (u[0], 0.0);
    }
    if x > r[n - 1] {
        return (0.0, 0.0);
    }
    let i = match r.partition_point(|v| *v <= x) {
        0 => 0,
        k if k >= n => n - 2,
        k => k - 1,
    };
    let h = r[i + 1] - r[i];
    let t = (x - r[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let v = h00 * u[i] + h10 * h * m[i] + h01 * u[i + 1] + h11 * h * m[i + 1];
    let dv = ((6.0 * t2 - 6.0 * t) * u[i] + (-6.0 * t2 + 6.0 * t) * u[i + 1]) / h
        + (3.0 * t2 - 4.0 * t + 1.0) * m[i]
        + (3.0 * t2 - 2.0 * t) * m[i + 1];
    (v, dv)
}

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance between two points.
pub fn distance(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => ball_volume(d - 2) * 2.0 * std::f64::consts::PI / d as f64,
    }
}

/// Surface area of the unit sphere S^{d−1} ⊂ R^d.
pub fn sphere_area(d: usize) -> f64 {
    d as f64 * ball_volume(d)
}

/// Log-spaced radii used by [`PairPotentialModel::check_conditions`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionGrid {
    pub r_min: f64,
    pub r_max: f64,
    pub points: usize,
}

impl ConditionGrid {
    /// 512 log-spaced radii in `(1e−4 σ, 10 σ)`.
    pub fn default_for(model: &PairPotentialModel) -> Self {
        let s = model.length_scale();
        ConditionGrid { r_min: 1e-4 * s, r_max: 10.0 * s, points: 512 }
    }

    pub fn radii(&self) -> Vec<f64> {
        let n = self.points.max(2);
        let (a, b) = (self.r_min.ln(), self.r_max.ln());
        (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    RP,
    T,
    BB,
    D,
    I,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionStatus {
    VerifiedOnGrid,
    DeclaredOnly,
    Violated,
}

/// Displacement at which a condition fails, with φ there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEntry {
    pub name: Condition,
    pub status: ConditionStatus,
    pub witness: Option<Witness>,
    pub summary: String,
    pub value: Option<f64>,
    pub error: Option<f64>,
}

impl ConditionEntry {
    fn verified(name: Condition, summary: impl Into<String>) -> Self {
        ConditionEntry {
            name,
            status: ConditionStatus::VerifiedOnGrid,
            witness: None,
            summary: summary.into(),
            value: None,
            error: None,
        }
    }

    fn declared_only(name: Condition, summary: impl Into<String>) -> Self {
        ConditionEntry { status: ConditionStatus::DeclaredOnly, ..Self::verified(name, summary) }
    }

    fn violated(name: Condition, witness: Witness, summary: impl Into<String>) -> Self {
        ConditionEntry { status: ConditionStatus::Violated, witness: Some(witness), ..Self::verified(name, summary) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub entries: Vec<ConditionEntry>,
}

impl ConditionReport {
    pub fn get(&self, name: Condition) -> &ConditionEntry {
        self.entries.iter().find(|e| e.name == name).expect("every condition is reported")
    }

    pub fn all_verified(&self) -> bool {
        self.entries.iter().all(|e| e.status == ConditionStatus::VerifiedOnGrid)
    }

    pub fn violations(&self) -> impl Iterator<Item = &ConditionEntry> {
        self.entries.iter().filter(|e| e.status == ConditionStatus::Violated)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::BoxDomain;

    fn ss(d: usize) -> PairPotentialModel {
        PairPotentialModel::soft_sphere(d, 1.0, 1.0, 12.0).unwrap()
    }

    #[test]
    fn ideal_gas_is_zero() {
        let p = PairPotentialModel::ideal_gas(2);
        assert_eq!(p.evaluate(&[0.3, -1.0]).unwrap(), 0.0);
        assert_eq!(p.gradient(&[0.3, -1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn lj_special_points() {
        let p = PairPotentialModel::lennard_jones(3, 1.0, 1.0).unwrap();
        let rmin = 2f64.powf(1.0 / 6.0);
        assert!((p.evaluate(&[0.0, rmin, 0.0]).unwrap() + 1.0).abs() < 1e-14);
        assert_eq!(p.evaluate(&[0.0, 0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn soft_sphere_value_matches_high_precision() {
        // (1/0.9)^12 evaluated with 50 significant digits.
        let exact = 3.5407061614721497695336509027664653167483523488281;
        let v = ss(1).evaluate(&[0.9]).unwrap();
        assert!((v - exact).abs() / exact < 1e-15);
    }

    #[test]
    fn soft_sphere_gradient_at_unit_distance() {
        let g = ss(3).gradient(&[1.0, 0.0, 0.0]).unwrap();
        assert!((g[0] + 12.0).abs() < 1e-13);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn singular_point() {
        assert_eq!(ss(2).evaluate(&[0.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(ss(2).gradient(&[0.0, 0.0]), Err(Error::SingularPoint));
        assert_eq!(ss(2).evaluate(&[1.0]), Err(Error::DimensionMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn finite_difference_at_1_3_sigma() {
        let models = [
            PairPotentialModel::ideal_gas(2),
            ss(2),
            PairPotentialModel::lennard_jones(2, 1.0, 1.0).unwrap(),
            PairPotentialModel::lennard_jones(2, 1.0, 1.0).unwrap().with_cutoff(2.5).unwrap(),
            PairPotentialModel::user_table(2, vec![0.5, 1.0, 2.0, 3.0], vec![4.0, 1.0, -0.2, 0.0]).unwrap(),
        ];
        for m in &models {
            let s = m.length_scale();
            let x = [1.3 * s * 0.6, 1.3 * s * 0.8];
            let g = m.gradient(&x).unwrap();
            for k in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (m.evaluate(&xp).unwrap() - m.evaluate(&xm).unwrap()) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-5 * g[k].abs().max(1e-6), "{:?}: {fd} vs {}", m.kind(), g[k]);
            }
        }
    }

    #[test]
    fn cutoff_shift_is_continuous() {
        let p = PairPotentialModel::lennard_jones(1, 1.0, 1.0).unwrap().with_cutoff(2.5).unwrap();
        assert!(p.radial_value(2.5 - 1e-12).abs() < 1e-10);
        assert_eq!(p.radial_value(3.0), 0.0);
    }

    #[test]
    fn energies() {
        let dom = BoxDomain::new(vec![5.0]).unwrap();
        let p = PairPotentialModel::lennard_jones(1, 1.0, 1.0).unwrap();
        assert_eq!(p.energy(&Configuration::empty(dom.clone())).unwrap(), 0.0);
        let one = Configuration::sym(dom.clone(), &[vec![1.0]]).unwrap();
        assert_eq!(p.energy(&one).unwrap(), 0.0);
        let three = Configuration::sym(dom.clone(), &[vec![1.0], vec![2.2], vec![3.1]]).unwrap();
        let brute = p.radial_value(1.2) + p.radial_value(2.1) + p.radial_value(0.9);
        assert!((p.energy(&three).unwrap() - brute).abs() < 1e-14);
        let eta = Configuration::sym(dom.clone(), &[vec![4.0]]).unwrap();
        assert_eq!(p.interaction_energy(&one, &eta).unwrap(), p.radial_value(3.0));
        assert_eq!(p.interaction_energy(&one, &Configuration::empty(dom)).unwrap(), 0.0);
    }

    #[test]
    fn mayer_closed_forms() {
        assert_eq!(PairPotentialModel::ideal_gas(3).mayer_integral(1.0, 1e-10).unwrap().value, 0.0);
        let (c, a, beta) = (0.7, 0.4, 1.3);
        let step = PairPotentialModel::bounded_step(1, c, a).unwrap();
        let e = step.mayer_integral(beta, 1e-10).unwrap();
        let exact = 2.0 * a * (1.0 - (-beta * c).exp());
        assert!((e.value - exact).abs() <= e.error.max(1e-15));
        // In d = 3 the ball volume enters.
        let step3 = PairPotentialModel::bounded_step(3, c, a).unwrap();
        let e3 = step3.mayer_integral(beta, 1e-10).unwrap();
        let exact3 = ball_volume(3) * a.powi(3) * (1.0 - (-beta * c).exp());
        assert!((e3.value - exact3).abs() < 1e-10 * exact3);
    }

    #[test]
    fn mayer_rejects_negative_beta() {
        assert!(ss(1).mayer_integral(-1.0, 1e-8).is_err());
    }

    #[test]
    fn ball_volumes() {
        assert!((ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-14);
        assert_eq!(sphere_area(1), 2.0);
    }

    #[test]
    fn conditions_ideal_gas() {
        let p = PairPotentialModel::ideal_gas(2);
        let r = p.check_conditions(1.0, &ConditionGrid::default_for(&p));
        assert!(r.all_verified(), "{r:#?}");
    }

    #[test]
    fn conditions_soft_sphere() {
        let p = ss(1).with_declared(DeclaredConstants {
            b: Some(0.0),
            a: Some(1.0),
            lambda: Some(12.0),
            r2: Some(1.0),
            r1: Some(1.0),
            rp_exponent: Some(3.0),
        });
        let r = p.check_conditions(1.0, &ConditionGrid::default_for(&p));
        assert!(r.all_verified(), "{r:#?}");
    }

    #[test]
    fn conditions_lj_bounded_below() {
        let p = PairPotentialModel::lennard_jones(3, 1.0, 1.0)
            .unwrap()
            .with_declared(DeclaredConstants { b: Some(1.0), ..Default::default() });
        let r = p.check_conditions(1.0, &ConditionGrid::default_for(&p));
        assert_eq!(r.get(Condition::BB).status, ConditionStatus::VerifiedOnGrid);
        assert_eq!(r.get(Condition::D).status, ConditionStatus::VerifiedOnGrid, "{r:#?}");
        assert_eq!(r.get(Condition::I).status, ConditionStatus::VerifiedOnGrid, "{:?}", r.get(Condition::I));
        assert_eq!(r.get(Condition::RP).status, ConditionStatus::DeclaredOnly);

        let tight = p.clone().with_declared(DeclaredConstants { b: Some(0.5), ..Default::default() });
        let r = tight.check_conditions(1.0, &ConditionGrid::default_for(&tight));
        let bb = r.get(Condition::BB);
        assert_eq!(bb.status, ConditionStatus::Violated);
        assert!(bb.witness.is_some());
    }

    #[test]
    fn step_is_not_weakly_differentiable() {
        let p = PairPotentialModel::bounded_step(1, 1.0, 0.5).unwrap();
        let r = p.check_conditions(1.0, &ConditionGrid::default_for(&p));
        let d = r.get(Condition::D);
        assert_eq!(d.status, ConditionStatus::Violated);
        assert!((d.witness.as_ref().unwrap().point[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rp_violation_has_witness() {
        let p = ss(1).with_declared(DeclaredConstants { r1: Some(2.0), rp_exponent: Some(3.0), ..Default::default() });
        let r = p.check_conditions(1.0, &ConditionGrid::default_for(&p));
        let e = r.get(Condition::RP);
        assert_eq!(e.status, ConditionStatus::Violated);
        assert!(e.witness.as_ref().unwrap().point[0] > 1.0);
    }

    #[test]
    fn table_interpolates_nodes() {
        let p = PairPotentialModel::user_table(1, vec![0.5, 1.0, 2.0], vec![3.0, 1.0, 0.0]).unwrap();
        assert_eq!(p.radial_value(1.0), 1.0);
        assert_eq!(p.radial_value(0.1), 3.0);
        assert_eq!(p.radial_value(2.5), 0.0);
        assert!(PairPotentialModel::user_table(1, vec![1.0, 0.5], vec![0.0, 0.0]).is_err());
    }
}

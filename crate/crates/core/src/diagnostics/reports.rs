//! Flattening of typed experiment results into [`DiagnosticReport`]s.
//! Exact identities become hard checks; everything estimated by sampling is
//! a statistical check that only marks the report.

use serde::Serialize;

use super::ibp::IbpResidual;
use super::moments::MomentComparison;
use super::process::{IncrementReport, InvarianceReport, MartingaleReport, QvReport, Z_NAMES};
use super::DiagnosticReport;
use crate::gibbs::ensembles::EnsembleReport;
use crate::gibbs::ruelle::RuelleReport;

/// Relative Kirkwood–Salsburg residuals at one order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsOrder {
    pub order: usize,
    pub residuals: Vec<f64>,
}

pub const KS_TOLERANCE: f64 = 1e-6;

pub fn ruelle<I: Serialize>(r: &RuelleReport, inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("ruelle", inputs);
    for e in &r.entries {
        rep.stat(&format!("zeta{}_N{}", e.order, e.n_particles), e.zeta, None);
        rep.stat(&format!("xi{}_N{}", e.order, e.n_particles), e.xi, None);
    }
    for s in &r.summary {
        let name = format!("zeta{}_ratio", s.order);
        rep.stat(&name, s.zeta_max / s.zeta_min, None);
        rep.check(&format!("improved bound stable, order {}", s.order), &name, "finite and < 3", s.stable, false);
    }
    rep.with_details(r);
    rep
}

pub fn ks<I: Serialize>(orders: &[KsOrder], inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("ks", inputs);
    for o in orders {
        let worst = o.residuals.iter().cloned().fold(0.0, f64::max);
        let name = format!("ks_residual_n{}", o.order);
        rep.stat(&name, worst, None);
        let ok = o.residuals.iter().all(|r| r.is_finite() && *r < KS_TOLERANCE);
        rep.check(&format!("Kirkwood-Salsburg order {}", o.order), &name, "< 1e-6", ok, true);
    }
    rep.with_details(&orders);
    rep
}

pub fn ibp<I: Serialize>(rs: &[IbpResidual], inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("ibp", inputs);
    for (i, r) in rs.iter().enumerate() {
        let name = format!("ibp_residual_{i}");
        rep.stat(&name, r.residual.mean, Some(r.residual.se));
        rep.stat(&format!("ibp_z_{i}"), r.z, None);
        rep.check(&format!("integration by parts, triple {i}"), &name, "|z| < 3", r.within, false);
    }
    rep.with_details(&rs);
    rep
}

pub fn martingale<I: Serialize>(rs: &[MartingaleReport], inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("martingale", inputs);
    for (i, r) in rs.iter().enumerate() {
        for lv in &r.levels {
            for (z, res) in Z_NAMES.iter().zip(&lv.residuals) {
                rep.rung(lv.dt, &format!("martingale_{i}_{z}"), res.mean, Some(res.se));
            }
        }
        let name = format!("martingale_max_z_{i}");
        rep.stat(&name, r.levels[0].max_z, None);
        rep.check(&format!("martingale residual, function {i}"), &name, "every |z| < 3", r.levels[0].within, false);
        rep.check(&format!("improving under dt halving, function {i}"), &name, "differences contract", r.improving.iter().all(|b| *b), false);
        if r.insufficient_replicas {
            rep.check(&format!("replica count, function {i}"), &name, "enough replicas", false, false);
        }
    }
    rep.with_details(&rs);
    rep
}

pub fn qv<I: Serialize>(r: &QvReport, inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("qv", inputs);
    for lv in &r.levels {
        rep.rung(lv.dt, "qv_c", lv.c.mean, Some(lv.c.se));
    }
    let c = r.levels[0].c;
    rep.stat("qv_c", c.mean, Some(c.se));
    rep.stat("qv_halving_change", r.halving_change, None);
    rep.check("quadratic variation constant", "qv_c", "in [1.9, 2.1]", r.in_band, false);
    rep.with_details(r);
    rep
}

pub fn increments<I: Serialize>(r: &IncrementReport, inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("increments", inputs);
    for e in &r.entries {
        rep.stat(&format!("alpha_N{}", e.n), e.alpha, None);
        rep.stat(&format!("c_hat_N{}", e.n), e.c_hat, None);
    }
    rep.stat("c_ratio", r.c_ratio, None);
    rep.check("Hölder exponent", "alpha", "95% CI within [0.4, 0.6]", r.alpha_in_band, false);
    rep.check(&format!("constant stable over N = {}..{}", r.n_range.0, r.n_range.1), "c_ratio", "<= 2", r.c_stable, false);
    rep.with_details(r);
    rep
}

/// `identity_error` is the largest relative gap between the expanded and
/// the direct second and third powers on the sampled configurations.
pub fn smoment<I: Serialize>(r: &MomentComparison, identity_error: f64, inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("smoment", inputs);
    rep.stat("s_moment_mcmc", r.mcmc.value, Some(r.mcmc.error));
    rep.stat("s_moment_quadrature", r.quadrature.value, Some(r.quadrature.error));
    rep.stat("s_moment_z", r.z, None);
    rep.stat("expansion_error", identity_error, None);
    rep.check("pair-moment expansion", "expansion_error", "< 1e-12", identity_error < 1e-12, true);
    rep.check("moment identity", "s_moment_z", "< 3", r.agree, false);
    rep.with_details(r);
    rep
}

pub fn ensembles<I: Serialize>(r: &EnsembleReport, inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("ensembles", inputs);
    rep.stat("activity", r.z, Some(r.activity.limit.se));
    rep.stat("canonical_density", r.canonical_density, None);
    rep.stat("grand_density", r.grand_density.mean, Some(r.grand_density.se));
    rep.stat("density_rel_diff", r.density_rel_diff, None);
    rep.stat("profile_max_z", r.profile_max_z, None);
    rep.stat("regime_bound", r.regime.bound, None);
    rep.check("density within 5%", "density_rel_diff", "< 0.05", r.density_agrees, false);
    rep.check("pair profiles within 3 SE", "profile_max_z", "< 3", r.profiles_agree, false);
    rep.check("low-density regime", "regime_bound", "rho below the bound", r.regime.in_regime, false);
    rep.with_details(r);
    rep
}

pub fn invariance<I: Serialize>(r: &InvarianceReport, inputs: &I) -> DiagnosticReport {
    let mut rep = DiagnosticReport::new("invariance", inputs);
    for lv in &r.levels {
        rep.rung(lv.dt, "discrepancy", lv.discrepancy, None);
    }
    rep.stat("invariance_max_z", r.levels[0].max_z, None);
    rep.stat("halving_change", r.halving_change, None);
    rep.check("histograms agree", "invariance_max_z", "< 3", r.within, false);
    rep.check("stable under dt halving", "halving_change", "< 0.5", r.stable, false);
    rep.with_details(r);
    rep
}

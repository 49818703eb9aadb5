//! Canonical versus grand-canonical comparison at the activity obtained from
//! the canonical schedule.

use serde::{Deserialize, Serialize};

use super::correlation::{correlation_estimate, correlation_estimate_states, CorrelationGrid};
use super::gcmc::{grand_canonical_sample, GcmcParams};
use super::mcmc::{sample_gibbs, McmcParams};
use super::ratio::{estimate_activity, ActivityEstimate, RatioMethod};
use super::NVSchedule;
use crate::error::Result;
use crate::potential::PairPotentialModel;
use crate::rng::derive_seed;
use crate::stats::MeanSe;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleParams {
    /// Superstability constant K of the low-density check; the potential's
    /// own value when absent.
    pub k_constant: Option<f64>,
    pub mcmc: McmcParams,
    pub gcmc: GcmcParams,
    pub insertions: usize,
    pub bins: usize,
    /// Upper edge of the pair-distance profile; half the smallest side when
    /// absent.
    pub r_max: Option<f64>,
    pub quad_tol: f64,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        EnsembleParams {
            k_constant: None,
            mcmc: McmcParams::default(),
            gcmc: GcmcParams::default(),
            insertions: 8,
            bins: 20,
            r_max: None,
            quad_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeCheck {
    pub rho: f64,
    pub k: f64,
    /// Mayer integral J(β).
    pub j: f64,
    /// 1/(2 e^{2βK+1} J(β)); infinite when J = 0.
    pub bound: f64,
    pub in_regime: bool,
}

pub fn low_density_check(rho: f64, beta: f64, potential: &PairPotentialModel, k: f64, quad_tol: f64) -> Result<RegimeCheck> {
    let j = potential.mayer_integral(beta, quad_tol)?.value;
    let bound = if j > 0.0 { 1.0 / (2.0 * (2.0 * beta * k + 1.0).exp() * j) } else { f64::INFINITY };
    Ok(RegimeCheck { rho, k, j, bound, in_regime: rho < bound })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBin {
    pub lo: f64,
    pub hi: f64,
    /// Normalized pair-distance profiles (each integrates to one).
    pub canonical: MeanSe,
    pub grand: MeanSe,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub regime: RegimeCheck,
    pub activity: ActivityEstimate,
    /// Activity used for the grand-canonical run (the extrapolated limit).
    pub z: f64,
    pub n: usize,
    pub canonical_density: f64,
    pub grand_density: MeanSe,
    /// |ρ_gc − ρ_can|/ρ_can.
    pub density_rel_diff: f64,
    pub profile: Vec<ProfileBin>,
    pub profile_max_z: f64,
    /// Fraction of non-empty bins with |z| ≤ 3.
    pub profile_fraction_within: f64,
    /// Σ k̂^{(2)}_gc |R| / Σ k̂^{(2)}_can |R|; informational, since
    /// E[n(n−1)] exceeds N(N−1) at finite N.
    pub amplitude_ratio: f64,
    pub density_agrees: bool,
    pub profiles_agree: bool,
    /// Pass/fail only inside the low-density regime.
    pub verdict: Option<bool>,
}

/// Canonical k̂^{(1)}, k̂^{(2)} at the largest schedule entry against a
/// grand-canonical run at the extrapolated activity.
pub fn ensembles_compare(
    schedule: &NVSchedule,
    beta: f64,
    potential: &PairPotentialModel,
    params: &EnsembleParams,
) -> Result<EnsembleReport> {
    let k = params.k_constant.unwrap_or(potential.ss.k);
    let regime = low_density_check(schedule.rho, beta, potential, k, params.quad_tol)?;
    let method = RatioMethod::WidomInsertion { mcmc: params.mcmc.clone(), insertions: params.insertions };
    let activity = estimate_activity(schedule, beta, potential, &method)?;
    let z = activity.limit.mean;

    let last = schedule.entries.len() - 1;
    let ens = schedule.ensemble(last, beta, potential)?;
    let lmin = ens.domain.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    let grid = CorrelationGrid::pair_distance(params.r_max.unwrap_or(0.5 * lmin), params.bins);

    let mcmc = McmcParams { seed: derive_seed(params.mcmc.seed, 0x43414e), ..params.mcmc.clone() };
    let can = sample_gibbs(&ens, &mcmc)?;
    let k1 = correlation_estimate(&can, 1, &CorrelationGrid::Cells { per_axis: 1 })?;
    let canonical_density = k1.bins[0].value;
    let k2c = correlation_estimate(&can, 2, &grid)?;

    let gp = GcmcParams { seed: derive_seed(params.gcmc.seed, 0x4743), ..params.gcmc.clone() };
    let gc = grand_canonical_sample(&ens.domain, beta, potential, z, &gp)?;
    let grand_density = gc.density();
    let k2g = correlation_estimate_states(&ens.domain, &gc.state_chains(), 2, &grid)?;

    let nc = k2c.normalized();
    let ng = k2g.normalized();
    let mut profile = Vec::with_capacity(nc.len());
    let (mut max_z, mut within, mut counted) = (0.0f64, 0usize, 0usize);
    for ((b, c), g) in k2c.bins.iter().zip(&nc).zip(&ng) {
        let (lo, hi) = match b.label {
            super::correlation::BinLabel::Distance { lo, hi } => (lo, hi),
            _ => (f64::NAN, f64::NAN),
        };
        let zz = c.z_against(g);
        if !(b.empty && g.mean == 0.0) {
            counted += 1;
            if zz <= 3.0 {
                within += 1;
            }
            max_z = max_z.max(zz);
        }
        profile.push(ProfileBin { lo, hi, canonical: *c, grand: *g, z: zz });
    }
    let mass = |e: &super::correlation::CorrelationEstimate| e.bins.iter().map(|b| b.value * b.measure).sum::<f64>();
    let amplitude_ratio = mass(&k2g) / mass(&k2c);
    let density_rel_diff = (grand_density.mean - canonical_density).abs() / canonical_density;
    let fraction = if counted > 0 { within as f64 / counted as f64 } else { 1.0 };
    let density_agrees = density_rel_diff < 0.05;
    let profiles_agree = max_z <= 3.0;
    let verdict = regime.in_regime.then_some(density_agrees && profiles_agree);
    Ok(EnsembleReport {
        regime,
        activity,
        z,
        n: ens.n,
        canonical_density,
        grand_density,
        density_rel_diff,
        profile,
        profile_max_z: max_z,
        profile_fraction_within: fraction,
        amplitude_ratio,
        density_agrees,
        profiles_agree,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_gate() {
        let pot = PairPotentialModel::soft_sphere(1, 1.0, 1.0, 12.0).unwrap();
        let r = low_density_check(0.1, 0.5, &pot, 1.0, 1e-8).unwrap();
        assert!(!r.in_regime);
        assert!(r.bound > 0.0 && r.bound < 0.1);
        let ideal = low_density_check(5.0, 1.0, &PairPotentialModel::ideal_gas(1), 0.0, 1e-8).unwrap();
        assert!(ideal.in_regime);
    }

    #[test]
    fn ideal_gas_densities_agree() {
        let pot = PairPotentialModel::ideal_gas(1);
        let s = NVSchedule::cubic(0.5, 1, &[2, 3, 4]).unwrap();
        let params = EnsembleParams {
            mcmc: McmcParams { sweeps: 4000, burn_in: 200, seed: 2, ..Default::default() },
            gcmc: GcmcParams { sweeps: 20_000, burn_in: 500, seed: 2, ..Default::default() },
            bins: 8,
            ..Default::default()
        };
        let r = ensembles_compare(&s, 1.0, &pot, &params).unwrap();
        assert_eq!(r.z, 0.5);
        assert!(r.grand_density.z_to(0.5) < 3.5, "{:?}", r.grand_density);
        assert!(r.verdict.is_some());
    }
}

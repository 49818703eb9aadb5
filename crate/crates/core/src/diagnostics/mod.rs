//! Numerical verification experiments: moment identities, integration by
//! parts, the martingale problem, increment moments and N/V sweeps.

pub mod catalog;
pub mod ibp;
pub mod moments;
pub mod process;
pub mod reports;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::configspace::testfn::Bump;
use crate::configspace::MetricFamily;
use crate::dynamics::{CylinderFunction, SdeParams, SquashedQuadratic};
use crate::error::{Error, Result};
use crate::gibbs::ensembles::{ensembles_compare, EnsembleParams};
use crate::gibbs::ratio::{partition_ratio, RatioMethod};
use crate::gibbs::ruelle::{verify_ruelle_bound, RuelleParams};
use crate::gibbs::{sample_gibbs, CanonicalEnsemble, McmcParams, NVSchedule};
use crate::potential::PairPotentialModel;
use crate::rng::derive_seed;

pub use catalog::{standard_cylinders, standard_ibp_triples, IbpTriple};
pub use ibp::{b_v_phi, ibp_residual, l_v_phi, Cutoff, IbpResidual, InteractionTerm, VectorField};
pub use moments::{compare_s_moment, pair_moment_expansion, pair_power_direct, s_statistic_moment, Bracket, MomentMethod, Weight};
pub use process::{
    equilibrium_invariance, increment_moment_diagnostic, increment_sweep, martingale_ladder, martingale_ladder_many, martingale_residual, qv_ladder,
    quadratic_variation_check, IncrementParams, InvarianceParams, LadderParams,
};

/// Hex SHA-256 of the JSON encoding of `inputs`.
pub fn digest<T: Serialize>(inputs: &T) -> String {
    let bytes = serde_json::to_vec(inputs).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistic {
    pub name: String,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Name of the statistic the check reads.
    pub statistic: String,
    pub threshold: String,
    pub passed: bool,
    /// Hard checks are exact identities; their failure fails a run.
    /// Statistical checks only mark the report.
    pub hard: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LadderRow {
    pub dt: f64,
    pub statistic: String,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub experiment: String,
    pub inputs_digest: String,
    pub statistics: Vec<Statistic>,
    pub checks: Vec<Check>,
    pub ladder: Vec<LadderRow>,
    /// The full typed result of the experiment.
    pub details: serde_json::Value,
}

impl DiagnosticReport {
    pub fn new<T: Serialize>(experiment: &str, inputs: &T) -> Self {
        DiagnosticReport {
            experiment: experiment.into(),
            inputs_digest: digest(inputs),
            statistics: Vec::new(),
            checks: Vec::new(),
            ladder: Vec::new(),
            details: serde_json::Value::Null,
        }
    }

    pub fn stat(&mut self, name: &str, value: f64, se: Option<f64>) -> &mut Self {
        self.statistics.push(Statistic { name: name.into(), value, se });
        self
    }

    pub fn check(&mut self, name: &str, statistic: &str, threshold: &str, passed: bool, hard: bool) -> &mut Self {
        self.checks.push(Check { name: name.into(), statistic: statistic.into(), threshold: threshold.into(), passed, hard });
        self
    }

    pub fn rung(&mut self, dt: f64, statistic: &str, value: f64, se: Option<f64>) -> &mut Self {
        self.ladder.push(LadderRow { dt, statistic: statistic.into(), value, se });
        self
    }

    pub fn with_details<T: Serialize>(&mut self, details: &T) -> &mut Self {
        self.details = serde_json::to_value(details).unwrap_or(serde_json::Value::Null);
        self
    }

    pub fn hard_failure(&self) -> bool {
        self.checks.iter().any(|c| c.hard && !c.passed)
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// name,value,se rows.
    pub fn statistics_csv(&self) -> String {
        let mut s = String::from("statistic,value,se\n");
        for st in &self.statistics {
            s.push_str(&format!("{},{:?},{}\n", st.name, st.value, st.se.map_or(String::new(), |v| format!("{v:?}"))));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepExperiment {
    Ruelle,
    SMoment,
    Ibp,
    Martingale,
    Increments,
    Activity,
    Ensembles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepParams {
    pub mcmc: McmcParams,
    pub ruelle: RuelleParams,
    pub ladder: LadderParams,
    pub increments: IncrementParams,
    pub ensembles: EnsembleParams,
    pub insertions: usize,
    pub seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            mcmc: McmcParams { sweeps: 10_000, burn_in: 1000, ..Default::default() },
            ruelle: RuelleParams::default(),
            ladder: LadderParams {
                sde: SdeParams { dt: 1e-4, horizon: 0.1, stride: 1, replicas: 128, ..Default::default() },
                levels: 1,
                lag: 100,
                ..Default::default()
            },
            increments: IncrementParams::default(),
            ensembles: EnsembleParams::default(),
            insertions: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub n: usize,
    pub volume: f64,
    pub statistics: Vec<Statistic>,
    /// Failures of individual experiments at this entry.
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub n: usize,
    pub value: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub statistic: String,
    pub rows: Vec<TrendRow>,
    /// Strictly increasing over at least three entries with last/first > 2.
    pub growth_flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub trends: Vec<Trend>,
}

impl SweepReport {
    /// Flat trend table keyed by (N, statistic).
    pub fn trend_csv(&self) -> String {
        let mut s = String::from("n,statistic,value,se\n");
        for t in &self.trends {
            for r in &t.rows {
                s.push_str(&format!("{},{},{:?},{}\n", r.n, t.statistic, r.value, r.se.map_or(String::new(), |v| format!("{v:?}"))));
            }
        }
        s
    }
}

fn growth_flag(rows: &[TrendRow]) -> bool {
    rows.len() >= 3
        && rows.windows(2).all(|w| w[1].value > w[0].value)
        && rows[0].value > 0.0
        && rows[rows.len() - 1].value > 2.0 * rows[0].value
}

/// A bump of radius a quarter of the smallest side at the box center.
pub fn central_bump(ens: &CanonicalEnsemble) -> Bump {
    let lmin = ens.domain.lengths().iter().cloned().fold(f64::INFINITY, f64::min);
    Bump::new(ens.domain.center(), 0.25 * lmin)
}

fn entry_statistics(
    schedule: &NVSchedule,
    j: usize,
    beta: f64,
    potential: &PairPotentialModel,
    exp: SweepExperiment,
    p: &SweepParams,
) -> Result<Vec<Statistic>> {
    let ens = schedule.ensemble(j, beta, potential)?;
    let seed = derive_seed(p.seed, (j as u64) << 8 | exp as u64);
    let mcmc = McmcParams { seed, ..p.mcmc.clone() };
    let st = |name: &str, value: f64, se: Option<f64>| Statistic { name: name.into(), value, se };
    match exp {
        SweepExperiment::Ruelle => {
            let one = NVSchedule::new(schedule.rho, vec![schedule.entries[j].clone()], f64::INFINITY)?;
            let r = verify_ruelle_bound(&one, beta, potential, &[2], &RuelleParams { mcmc: mcmc.clone(), ..p.ruelle.clone() })?;
            Ok(vec![st("zeta2", r.entries[0].zeta, None), st("xi2", r.entries[0].xi, None)])
        }
        SweepExperiment::SMoment => {
            let fam = MetricFamily::new(ens.dim(), beta)?;
            let m = s_statistic_moment(
                &ens,
                &fam,
                Weight::Default,
                MomentMethod::Mcmc { sweeps: mcmc.sweeps, burn_in: mcmc.burn_in, chains: mcmc.chains, seed },
            )?;
            Ok(vec![st("s_moment", m.value, Some(m.error))])
        }
        SweepExperiment::Ibp => {
            let b = central_bump(&ens);
            let mut dir = vec![0.0; ens.dim()];
            dir[0] = 1.0;
            let v = VectorField::Directional { center: b.center.clone(), radius: b.radius, direction: dir };
            let one = CylinderFunction::new(SquashedQuadratic::constant(1, 1.0), vec![b])?;
            let s = sample_gibbs(&ens, &mcmc)?;
            let r = ibp_residual(&one, &one, &v, potential, beta, &s)?;
            Ok(vec![st("ibp_residual", r.residual.mean, Some(r.residual.se))])
        }
        SweepExperiment::Martingale => {
            let f = CylinderFunction {
                g: SquashedQuadratic::slot(1, 0, Some(2.0)),
                fs: vec![central_bump(&ens)],
            };
            let lp = LadderParams {
                sde: SdeParams { seed, ..p.ladder.sde.clone() },
                mcmc: McmcParams { seed, ..p.ladder.mcmc.clone() },
                ..p.ladder.clone()
            };
            let r = martingale_ladder(&ens, &f, &lp)?;
            Ok(vec![st("martingale_max_z", r.levels[0].max_z, None)])
        }
        SweepExperiment::Increments => {
            let one = NVSchedule::new(schedule.rho, vec![schedule.entries[j].clone()], f64::INFINITY)?;
            let fam = MetricFamily::new(ens.dim(), beta)?;
            let ip = IncrementParams { sde: SdeParams { seed, ..p.increments.sde.clone() }, ..p.increments.clone() };
            let r = increment_sweep(&one, beta, potential, &fam, &ip)?;
            let e = &r.entries[0];
            Ok(vec![st("increment_alpha", e.alpha, None), st("increment_c", e.c_hat, None)])
        }
        SweepExperiment::Activity => {
            let r = partition_ratio(&ens, &RatioMethod::WidomInsertion { mcmc, insertions: p.insertions })?;
            let n = ens.n as f64;
            Ok(vec![st("activity", n * r.mean, Some(n * r.se))])
        }
        SweepExperiment::Ensembles => {
            if j == 0 {
                return Err(Error::InvalidSchedule("the ensemble comparison needs a preceding entry".into()));
            }
            let prefix = NVSchedule::new(schedule.rho, schedule.entries[..=j].to_vec(), f64::INFINITY)?;
            let ep = EnsembleParams {
                mcmc: McmcParams { seed, ..p.ensembles.mcmc.clone() },
                gcmc: crate::gibbs::gcmc::GcmcParams { seed, ..p.ensembles.gcmc.clone() },
                ..p.ensembles.clone()
            };
            let r = ensembles_compare(&prefix, beta, potential, &ep)?;
            Ok(vec![st("density_rel_diff", r.density_rel_diff, None), st("profile_max_z", r.profile_max_z, None)])
        }
    }
}

/// Runs the selected experiments at schedule entry `j`; failures are
/// recorded in the entry rather than returned.
pub fn sweep_entry(
    schedule: &NVSchedule,
    j: usize,
    beta: f64,
    potential: &PairPotentialModel,
    experiments: &[SweepExperiment],
    params: &SweepParams,
) -> SweepEntry {
    let (n, dom) = &schedule.entries[j];
    let mut statistics = Vec::new();
    let mut errors = Vec::new();
    for &e in experiments {
        match entry_statistics(schedule, j, beta, potential, e, params) {
            Ok(s) => statistics.extend(s),
            Err(err) => errors.push(format!("{e:?}: {err}")),
        }
    }
    SweepEntry { n: *n, volume: dom.volume(), statistics, errors }
}

/// Trend tables across finished entries, one per statistic in order of
/// first appearance.
pub fn assemble_sweep(entries: Vec<SweepEntry>) -> SweepReport {
    let mut names: Vec<String> = Vec::new();
    for e in &entries {
        for s in &e.statistics {
            if !names.contains(&s.name) {
                names.push(s.name.clone());
            }
        }
    }
    let trends = names
        .into_iter()
        .map(|name| {
            let rows: Vec<TrendRow> = entries
                .iter()
                .filter_map(|e| e.statistics.iter().find(|s| s.name == name).map(|s| TrendRow { n: e.n, value: s.value, se: s.se }))
                .collect();
            Trend { growth_flag: growth_flag(&rows), statistic: name, rows }
        })
        .collect();
    SweepReport { entries, trends }
}

/// Runs the selected experiments at every schedule entry. Failures are
/// recorded per entry and the sweep continues.
pub fn nv_sweep(
    schedule: &NVSchedule,
    beta: f64,
    potential: &PairPotentialModel,
    experiments: &[SweepExperiment],
    params: &SweepParams,
) -> SweepReport {
    let entries = (0..schedule.entries.len()).map(|j| sweep_entry(schedule, j, beta, potential, experiments, params)).collect();
    assemble_sweep(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_gas_sweep_is_flat() {
        let s = NVSchedule::cubic(0.5, 1, &[2, 3, 4]).unwrap();
        let p = SweepParams { mcmc: McmcParams { sweeps: 2000, burn_in: 200, ..Default::default() }, ..Default::default() };
        let r = nv_sweep(&s, 1.0, &PairPotentialModel::ideal_gas(1), &[SweepExperiment::Activity, SweepExperiment::Ensembles], &p);
        let act = r.trends.iter().find(|t| t.statistic == "activity").unwrap();
        assert!(act.rows.iter().all(|row| (row.value - 0.5).abs() < 1e-12));
        assert!(r.trends.iter().all(|t| !t.growth_flag));
        // The first entry has no predecessor for the comparison; the sweep
        // records the failure and continues.
        assert_eq!(r.entries[0].errors.len(), 1);
        assert!(r.entries[2].errors.is_empty());
        assert!(r.trend_csv().starts_with("n,statistic,value,se\n"));
    }

    #[test]
    fn report_flags() {
        let mut r = DiagnosticReport::new("x", &[1, 2, 3]);
        r.stat("a", 1.0, None).check("exact", "a", "== 1", true, true).check("stat", "a", "< 3 SE", false, false);
        assert!(!r.hard_failure() && !r.all_passed());
        assert_eq!(r.inputs_digest, digest(&[1, 2, 3]));
        assert_eq!(r.inputs_digest.len(), 64);
    }

    #[test]
    fn growth_detection() {
        let rows = |v: &[f64]| v.iter().enumerate().map(|(i, x)| TrendRow { n: i + 2, value: *x, se: None }).collect::<Vec<_>>();
        assert!(growth_flag(&rows(&[1.0, 2.0, 3.0])));
        assert!(!growth_flag(&rows(&[1.0, 1.1, 1.2])));
        assert!(!growth_flag(&rows(&[1.0, 3.0])));
    }
}

//! The experiment configuration: one JSON document, unknown keys rejected,
//! every validation error tagged with the key path it concerns.

use std::fmt;
use std::path::{Path, PathBuf};

use gibbslab::configspace::testfn::Bump;
use gibbslab::configspace::{BoxDomain, Configuration, MetricFamily, PhiFunction};
use gibbslab::diagnostics::process::{IncrementParams, LadderParams};
use gibbslab::diagnostics::{SweepExperiment, SweepParams, VectorField, Weight};
use gibbslab::dynamics::{CylinderFunction, SdeParams};
use gibbslab::gibbs::ensembles::EnsembleParams;
use gibbslab::gibbs::ruelle::RuelleParams;
use gibbslab::gibbs::{CanonicalEnsemble, McmcParams, NVSchedule};
use gibbslab::potential::{DeclaredConstants, PotentialKind};
use gibbslab::PairPotentialModel;
use serde::{Deserialize, Serialize};

/// A validation failure at a key path such as `potential.epsilon`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl fmt::Display) -> Self {
        ConfigError { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at `{}`: {}", self.path, self.message)
    }
}

type Checked<T> = Result<T, ConfigError>;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Root seed; every stream in the run derives from it.
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub potential: Option<PotentialBlock>,
    #[serde(default)]
    pub ensemble: Option<EnsembleBlock>,
    #[serde(default)]
    pub metric: MetricBlock,
    #[serde(default)]
    pub mcmc: McmcParams,
    #[serde(default)]
    pub sde: SdeBlock,
    #[serde(default)]
    pub schedule: Option<ScheduleBlock>,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KindName {
    IdealGas,
    SoftSphere,
    LennardJones,
    BoundedStep,
    UserTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialBlock {
    pub kind: KindName,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub exponent: Option<f64>,
    /// Bounded step only.
    #[serde(default)]
    pub height: Option<f64>,
    #[serde(default)]
    pub radius: Option<f64>,
    /// User table only.
    #[serde(default)]
    pub r: Option<Vec<f64>>,
    #[serde(default)]
    pub u: Option<Vec<f64>>,
    #[serde(default)]
    pub cutoff: Option<f64>,
    #[serde(default)]
    pub declared: DeclaredBlock,
    #[serde(default)]
    pub ss: Option<SsBlock>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredBlock {
    #[serde(rename = "B", default)]
    pub b: Option<f64>,
    #[serde(rename = "A", default)]
    pub a: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(rename = "R1", default)]
    pub r1: Option<f64>,
    #[serde(rename = "R2", default)]
    pub r2: Option<f64>,
    #[serde(default)]
    pub rp_exponent: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SsBlock {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleBlock {
    pub n: usize,
    /// Box side lengths; their count is the dimension.
    pub lengths: Vec<f64>,
    pub beta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleBlock {
    pub rho: f64,
    #[serde(default = "one")]
    pub dim: usize,
    /// Explicit particle numbers; exclusive with `growth`.
    #[serde(default)]
    pub n: Option<Vec<usize>>,
    #[serde(default)]
    pub growth: Option<Growth>,
    /// Inverse temperature; falls back to `ensemble.beta`.
    #[serde(default)]
    pub beta: Option<f64>,
}

/// N = start, start + step, … (count entries).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Growth {
    pub start: usize,
    #[serde(default = "one")]
    pub step: usize,
    pub count: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricBlock {
    pub k_max: usize,
    /// Φ of the metric; t^{−(d+1)} when absent.
    pub phi: Option<PhiFunction>,
    /// ζ for the q_k weights; q_k = 1 when absent.
    pub zeta: Option<f64>,
    pub r_samples: usize,
}

impl Default for MetricBlock {
    fn default() -> Self {
        MetricBlock { k_max: gibbslab::configspace::metric::DEFAULT_K_MAX, phi: None, zeta: None, r_samples: 4096 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeBlock {
    pub dt: f64,
    pub horizon: f64,
    /// Per-particle drift cap; 10⁴ ε/σ when absent.
    pub drift_cap: Option<f64>,
    /// Set to false to run without a drift cap.
    pub capped: bool,
    pub stride: usize,
    pub replicas: usize,
    pub noise: bool,
    pub initial: InitialMode,
}

impl Default for SdeBlock {
    fn default() -> Self {
        let p = SdeParams::default();
        SdeBlock {
            dt: p.dt,
            horizon: p.horizon,
            drift_cap: None,
            capped: true,
            stride: p.stride,
            replicas: p.replicas,
            noise: p.noise,
            initial: InitialMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialMode {
    /// Equilibrium states from the Metropolis sampler (the `mcmc` block),
    /// `spacing` sweeps apart.
    Gibbs {
        #[serde(default = "default_spacing")]
        spacing: usize,
    },
    /// One configuration record per line (`d L1..Ld N x…`); a single line
    /// is shared by every replica.
    File { path: PathBuf },
}

fn default_spacing() -> usize {
    20
}

impl Default for InitialMode {
    fn default() -> Self {
        InitialMode::Gibbs { spacing: default_spacing() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsBlock {
    /// Experiments run by `sweep`.
    pub experiments: Vec<SweepExperiment>,
    pub ruelle: RuelleParams,
    pub ruelle_orders: Vec<usize>,
    pub ks: KsBlock,
    pub ibp: IbpBlock,
    pub ladder: LadderParams,
    /// Cylinder functions of `verify martingale`; the standard three when
    /// absent.
    pub martingale_functions: Option<Vec<CylinderFunction>>,
    /// Test function of `verify qv`; a bump at the box center when absent.
    pub qv_bump: Option<Bump>,
    pub increments: IncrementParams,
    pub smoment: SmomentBlock,
    pub ensembles: EnsembleParams,
    pub sweep: SweepParams,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        DiagnosticsBlock {
            experiments: vec![SweepExperiment::Ruelle, SweepExperiment::Activity],
            ruelle: RuelleParams::default(),
            ruelle_orders: vec![2],
            ks: KsBlock::default(),
            ibp: IbpBlock::default(),
            ladder: LadderParams::default(),
            martingale_functions: None,
            qv_bump: None,
            increments: IncrementParams::default(),
            smoment: SmomentBlock::default(),
            ensembles: EnsembleParams::default(),
            sweep: SweepParams::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KsBlock {
    pub orders: Vec<usize>,
    /// Random evaluation tuples per order.
    pub points: usize,
    pub quad_tol: f64,
}

impl Default for KsBlock {
    fn default() -> Self {
        KsBlock { orders: vec![1, 2], points: 4, quad_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TripleBlock {
    pub f: CylinderFunction,
    pub g: CylinderFunction,
    pub v: VectorField,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IbpBlock {
    /// The standard three triples when absent.
    pub triples: Option<Vec<TripleBlock>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SmomentBlock {
    pub weight: Weight,
    pub quad_tol: f64,
    /// Sampled configurations on which the pair-moment expansion is checked
    /// against direct powers.
    pub identity_samples: usize,
}

impl Default for SmomentBlock {
    fn default() -> Self {
        SmomentBlock { weight: Weight::Default, quad_tol: 1e-6, identity_samples: 50 }
    }
}

/// Reads and deserializes a config file. `seed` replaces (or supplies) the
/// root seed.
pub fn load(path: &Path, seed: Option<u64>) -> Checked<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at("--config", format!("{}: {e}", path.display())))?;
    parse(&text, seed)
}

pub fn parse(text: &str, seed: Option<u64>) -> Checked<ExperimentConfig> {
    let mut value: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::at("(document)", e))?;
    if let (Some(s), Some(obj)) = (seed, value.as_object_mut()) {
        obj.insert("seed".into(), s.into());
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // A missing key is reported at its parent; name the key itself.
        match inner.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(key) if path == "." => ConfigError::at(key, inner.clone()),
            Some(key) => ConfigError::at(format!("{path}.{key}"), inner.clone()),
            None => ConfigError::at(path, inner),
        }
    })
}

fn require<'a, T>(v: &'a Option<T>, path: &str) -> Checked<&'a T> {
    v.as_ref().ok_or_else(|| ConfigError::at(path, "required by this subcommand but missing"))
}

impl PotentialBlock {
    pub fn build(&self, dim: usize) -> Checked<PairPotentialModel> {
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| ConfigError::at(format!("potential.{key}"), "required for this kind"));
        let kind = match self.kind {
            KindName::IdealGas => PotentialKind::IdealGas,
            KindName::SoftSphere => PotentialKind::SoftSphere {
                epsilon: self.epsilon.unwrap_or(1.0),
                sigma: self.sigma.unwrap_or(1.0),
                exponent: self.exponent.unwrap_or(12.0),
            },
            KindName::LennardJones => {
                PotentialKind::LennardJones { epsilon: self.epsilon.unwrap_or(1.0), sigma: self.sigma.unwrap_or(1.0) }
            }
            KindName::BoundedStep => PotentialKind::BoundedStep { height: need(self.height, "height")?, radius: need(self.radius, "radius")? },
            KindName::UserTable => PotentialKind::UserTable {
                r: self.r.clone().ok_or_else(|| ConfigError::at("potential.r", "required for this kind"))?,
                u: self.u.clone().ok_or_else(|| ConfigError::at("potential.u", "required for this kind"))?,
            },
        };
        let mut model = PairPotentialModel::new(dim, kind).map_err(|e| ConfigError::at("potential", e))?;
        if let Some(rc) = self.cutoff {
            model = model.with_cutoff(rc).map_err(|e| ConfigError::at("potential.cutoff", e))?;
        }
        let d = &self.declared;
        if d.b.is_some() || d.a.is_some() || d.lambda.is_some() || d.r1.is_some() || d.r2.is_some() || d.rp_exponent.is_some() {
            model = model.with_declared(DeclaredConstants {
                b: d.b,
                a: d.a,
                lambda: d.lambda,
                r2: d.r2,
                r1: d.r1,
                rp_exponent: d.rp_exponent,
            });
        }
        if let Some(ss) = &self.ss {
            if !(ss.d > 0.0 && ss.k.is_finite()) {
                return Err(ConfigError::at("potential.ss", "D must be positive and K finite"));
            }
            model = model.with_superstability(ss.d, ss.k);
        }
        Ok(model)
    }
}

impl ExperimentConfig {
    pub fn potential(&self, dim: usize) -> Checked<PairPotentialModel> {
        require(&self.potential, "potential")?.build(dim)
    }

    pub fn canonical(&self) -> Checked<CanonicalEnsemble> {
        let e = require(&self.ensemble, "ensemble")?;
        let domain = BoxDomain::new(e.lengths.clone()).map_err(|err| ConfigError::at("ensemble.lengths", err))?;
        if !(e.beta >= 0.0 && e.beta.is_finite()) {
            return Err(ConfigError::at("ensemble.beta", "must be finite and non-negative"));
        }
        let pot = self.potential(domain.dim())?;
        CanonicalEnsemble::new(e.n, domain, e.beta, pot).map_err(|err| ConfigError::at("ensemble", err))
    }

    /// The schedule, its β and the potential in the schedule's dimension.
    pub fn schedule(&self) -> Checked<(NVSchedule, f64, PairPotentialModel)> {
        let s = require(&self.schedule, "schedule")?;
        let ns: Vec<usize> = match (&s.n, &s.growth) {
            (Some(ns), None) => ns.clone(),
            (None, Some(g)) => (0..g.count).map(|i| g.start + i * g.step).collect(),
            _ => return Err(ConfigError::at("schedule", "give exactly one of `n` and `growth`")),
        };
        if ns.is_empty() {
            return Err(ConfigError::at("schedule.n", "empty schedule"));
        }
        let beta = s
            .beta
            .or(self.ensemble.as_ref().map(|e| e.beta))
            .ok_or_else(|| ConfigError::at("schedule.beta", "missing (and no ensemble.beta to fall back on)"))?;
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(ConfigError::at("schedule.beta", "must be finite and non-negative"));
        }
        let sched = NVSchedule::cubic(s.rho, s.dim, &ns).map_err(|e| ConfigError::at("schedule", e))?;
        Ok((sched, beta, self.potential(s.dim)?))
    }

    pub fn metric(&self, dim: usize, beta: f64, potential: &PairPotentialModel, seed: u64) -> Checked<MetricFamily> {
        let m = &self.metric;
        let phi = m.phi.unwrap_or(PhiFunction::Power { exponent: dim as f64 + 1.0 });
        let fam = MetricFamily::with_phi(dim, beta, phi, m.k_max).map_err(|e| ConfigError::at("metric", e))?;
        match m.zeta {
            Some(z) => fam.with_r_weights(potential, beta, z, m.r_samples, seed).map_err(|e| ConfigError::at("metric.zeta", e)),
            None => Ok(fam),
        }
    }

    pub fn sde_params(&self, potential: &PairPotentialModel, seed: u64) -> Checked<SdeParams> {
        let b = &self.sde;
        let p = SdeParams {
            dt: b.dt,
            horizon: b.horizon,
            drift_cap: if b.capped { Some(b.drift_cap.unwrap_or_else(|| SdeParams::default_cap(potential))) } else { None },
            seed,
            stride: b.stride,
            replicas: b.replicas,
            noise: b.noise,
        };
        p.validate().map_err(|e| ConfigError::at("sde", e))?;
        if p.replicas == 0 {
            return Err(ConfigError::at("sde.replicas", "must be at least 1"));
        }
        Ok(p)
    }

    /// Explicit initial states from the `sde.initial` file, checked against
    /// the ensemble.
    pub fn initial_states(&self, ens: &CanonicalEnsemble, replicas: usize) -> Checked<Option<Vec<Vec<f64>>>> {
        let InitialMode::File { path } = &self.sde.initial else {
            return Ok(None);
        };
        let key = "sde.initial.path";
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::at(key, format!("{}: {e}", path.display())))?;
        let mut states = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#')) {
            let c = Configuration::from_record(line).map_err(|e| ConfigError::at(key, format!("line {}: {e}", i + 1)))?;
            if c.domain() != &ens.domain || c.len() != ens.n {
                return Err(ConfigError::at(key, format!("line {}: box or particle number differs from the ensemble", i + 1)));
            }
            if ens.potential.energy(&c).map_or(true, |e| !e.is_finite()) {
                return Err(ConfigError::at(key, format!("line {}: infinite energy", i + 1)));
            }
            states.push(c.coords().to_vec());
        }
        match states.len() {
            0 => Err(ConfigError::at(key, "no configurations in file")),
            1 => Ok(Some(vec![states[0].clone(); replicas])),
            k if k == replicas => Ok(Some(states)),
            k => Err(ConfigError::at(key, format!("{k} configurations for {replicas} replicas"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_seed_names_the_key() {
        let e = parse(r#"{"potential": {"kind": "ideal-gas"}}"#, None).unwrap_err();
        assert_eq!(e.path, "seed");
        assert!(parse(r#"{"potential": {"kind": "ideal-gas"}}"#, Some(3)).is_ok());
    }

    #[test]
    fn unknown_and_mistyped_keys_have_paths() {
        let e = parse(r#"{"seed": 1, "potential": {"kind": "soft-sphere", "epsilom": 1}}"#, None).unwrap_err();
        assert_eq!(e.path, "potential.epsilom");
        assert!(e.message.contains("unknown field"));
        let e = parse(r#"{"seed": 1, "mcmc": {"sweeps": "many"}}"#, None).unwrap_err();
        assert_eq!(e.path, "mcmc.sweeps");
        let e = parse(r#"{"seed": 1, "ensemble": {"n": 2, "lengths": [1.0]}}"#, None).unwrap_err();
        assert_eq!(e.path, "ensemble.beta");
    }

    #[test]
    fn semantic_errors_have_paths() {
        let c = parse(r#"{"seed": 1, "potential": {"kind": "bounded-step", "height": 1}, "ensemble": {"n": 2, "lengths": [2], "beta": 1}}"#, None)
            .unwrap();
        assert_eq!(c.canonical().unwrap_err().path, "potential.radius");
        let c = parse(r#"{"seed": 1, "potential": {"kind": "ideal-gas"}, "ensemble": {"n": 2, "lengths": [-2], "beta": 1}}"#, None).unwrap();
        assert_eq!(c.canonical().unwrap_err().path, "ensemble.lengths");
        let c = parse(r#"{"seed": 1, "potential": {"kind": "ideal-gas"}, "schedule": {"rho": 0.5, "n": [2], "growth": {"start": 2, "count": 2}}}"#, None)
            .unwrap();
        assert_eq!(c.schedule().unwrap_err().path, "schedule");
    }

    #[test]
    fn potential_keys() {
        let c = parse(
            r#"{"seed": 1, "potential": {"kind": "lennard-jones", "epsilon": 2, "sigma": 1, "cutoff": 2.5,
                "declared": {"B": 2, "A": 8, "lambda": 6, "R1": 0.5, "R2": 1.5}, "ss": {"D": 0.2, "K": 2}}}"#,
            None,
        )
        .unwrap();
        let m = c.potential(1).unwrap();
        assert_eq!(m.cutoff(), Some(2.5));
        assert_eq!(m.declared.b, Some(2.0));
        assert_eq!(m.ss.k, 2.0);
    }
}

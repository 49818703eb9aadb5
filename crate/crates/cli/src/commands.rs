//! The four subcommands. Each one validates the whole configuration and
//! builds every input before the first byte is written, then writes its
//! numeric artifacts deterministically. Wall-clock data goes only to
//! `metadata.json`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use gibbslab::configspace::Configuration;
use gibbslab::diagnostics::reports::{self, KsOrder};
use gibbslab::diagnostics::{
    assemble_sweep, central_bump, compare_s_moment, digest, ibp_residual, increment_sweep, martingale_ladder_many,
    pair_moment_expansion, pair_power_direct, qv_ladder, standard_cylinders, standard_ibp_triples, sweep_entry, DiagnosticReport,
    MomentMethod, SweepEntry, SweepParams,
};
use gibbslab::dynamics::io::{write_binary, write_text};
use gibbslab::dynamics::{gibbs_initial_states, simulate_replicas, CylinderFunction};
use gibbslab::gibbs::ensembles::ensembles_compare;
use gibbslab::gibbs::ruelle::{kirkwood_salsburg_residual, random_points, verify_ruelle_bound};
use gibbslab::gibbs::{sample_gibbs, McmcParams};
use gibbslab::rng::derive_seed;
use gibbslab::Error;
use serde::Serialize;
use serde_json::json;

use crate::config::{ConfigError, ExperimentConfig, InitialMode};

/// Stream tags under the root seed.
const TAG_SAMPLE: u64 = 1;
const TAG_SIMULATE: u64 = 2;
const TAG_INITIAL: u64 = 3;
const TAG_METRIC: u64 = 4;
const TAG_VERIFY: u64 = 16;
const TAG_SWEEP: u64 = 64;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    /// An experiment's prerequisites are not met by the configuration.
    Prerequisite(String),
    Runtime(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Prerequisite(_) => 2,
            CliError::Runtime(_) | CliError::Io(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Prerequisite(m) => write!(f, "prerequisite not met: {m}"),
            CliError::Runtime(m) => write!(f, "run aborted: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Precondition(_)
            | Error::DimensionCap { .. }
            | Error::DimensionMismatch { .. }
            | Error::InvalidSchedule(_)
            | Error::InsufficientSamples(_) => CliError::Prerequisite(e.to_string()),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

/// Run status after artifacts are written.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    HardFailure,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::HardFailure => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Ruelle,
    Ks,
    Ibp,
    Martingale,
    Qv,
    Increments,
    Smoment,
    Ensembles,
}

impl Experiment {
    fn name(self) -> &'static str {
        match self {
            Experiment::Ruelle => "ruelle",
            Experiment::Ks => "ks",
            Experiment::Ibp => "ibp",
            Experiment::Martingale => "martingale",
            Experiment::Qv => "qv",
            Experiment::Increments => "increments",
            Experiment::Smoment => "smoment",
            Experiment::Ensembles => "ensembles",
        }
    }
}

/// Output location and run metadata shared by all commands.
pub struct Run {
    pub out: PathBuf,
    pub workers: Option<usize>,
    pub config_path: PathBuf,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Run {
    fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
        // Write then rename so an interrupted run never leaves a torn file.
        let tmp = path.with_extension("partial");
        fs::write(&tmp, bytes).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| io_err(&path, e))
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        s.push('\n');
        self.write(rel, s.as_bytes())
    }

    fn metadata(&self, command: &str) -> Result<(), CliError> {
        let now = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        self.write_json(
            "metadata.json",
            &json!({
                "command": command,
                "version": env!("CARGO_PKG_VERSION"),
                "created_unix": now,
                "workers": self.workers.unwrap_or_else(rayon::current_num_threads),
                "config": self.config_path.display().to_string(),
            }),
        )
    }

    fn report(&self, rep: &DiagnosticReport) -> Result<Outcome, CliError> {
        self.write_json("report.json", rep)?;
        self.write("statistics.csv", rep.statistics_csv().as_bytes())?;
        if !rep.ladder.is_empty() {
            let mut s = String::from("dt,statistic,value,se\n");
            for r in &rep.ladder {
                s.push_str(&format!("{:?},{},{:?},{}\n", r.dt, r.statistic, r.value, opt(r.se)));
            }
            self.write("ladder.csv", s.as_bytes())?;
        }
        for c in &rep.checks {
            eprintln!("{} {}: {} ({})", if c.passed { "pass" } else { "FAIL" }, c.name, c.threshold, if c.hard { "hard" } else { "statistical" });
        }
        Ok(if rep.hard_failure() { Outcome::HardFailure } else { Outcome::Success })
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| format!("{x:?}"))
}

/// Digest of everything that determines a command's numbers.
fn inputs_digest<T: Serialize>(command: &str, cfg: &ExperimentConfig, extra: &T) -> String {
    let mut c = cfg.clone();
    c.output = None;
    digest(&json!({ "command": command, "config": c, "extra": extra }))
}

fn check_mcmc(p: &McmcParams) -> Result<(), ConfigError> {
    if p.chains == 0 {
        return Err(ConfigError::at("mcmc.chains", "must be at least 1"));
    }
    if p.thin == 0 {
        return Err(ConfigError::at("mcmc.thin", "must be at least 1"));
    }
    if !(p.step > 0.0) {
        return Err(ConfigError::at("mcmc.step", "must be positive"));
    }
    Ok(())
}

pub fn sample(cfg: &ExperimentConfig, run: &Run) -> Result<Outcome, CliError> {
    let ens = cfg.canonical()?;
    check_mcmc(&cfg.mcmc)?;
    let p = McmcParams { seed: derive_seed(cfg.seed, TAG_SAMPLE), ..cfg.mcmc.clone() };
    eprintln!("sampling N = {} in {:?} with {} chains", ens.n, ens.domain.lengths(), p.chains);
    let s = sample_gibbs(&ens, &p)?;

    let d = ens.dim();
    let mut csv = String::from("chain,index");
    for i in 0..ens.n {
        for a in 0..d {
            csv.push_str(&format!(",x{i}_{a}"));
        }
    }
    csv.push('\n');
    for (c, ch) in s.chains.iter().enumerate() {
        for (k, x) in ch.states.iter().enumerate() {
            csv.push_str(&format!("{c},{k}"));
            for v in x {
                csv.push_str(&format!(",{v:?}"));
            }
            csv.push('\n');
        }
    }
    let summary = json!({
        "command": "sample",
        "inputs_digest": inputs_digest("sample", cfg, &()),
        "n": ens.n,
        "lengths": ens.domain.lengths(),
        "beta": ens.beta,
        "samples": s.len(),
        "acceptance": s.acceptance(),
        "chains": s.chains.iter().map(|c| json!({ "samples": c.states.len(), "acceptance": c.acceptance, "step": c.step })).collect::<Vec<_>>(),
    });
    run.write("samples.csv", csv.as_bytes())?;
    run.write_json("summary.json", &summary)?;
    run.metadata("sample")?;
    eprintln!("acceptance {:.4}, {} samples", s.acceptance(), s.len());
    Ok(Outcome::Success)
}

pub fn simulate(cfg: &ExperimentConfig, run: &Run) -> Result<Outcome, CliError> {
    let ens = cfg.canonical()?;
    let params = cfg.sde_params(&ens.potential, derive_seed(cfg.seed, TAG_SIMULATE))?;
    let explicit = cfg.initial_states(&ens, params.replicas)?;
    let init = match (&cfg.sde.initial, explicit) {
        (_, Some(x)) => x,
        (InitialMode::Gibbs { spacing }, None) => {
            check_mcmc(&cfg.mcmc)?;
            let mcmc = McmcParams { seed: derive_seed(cfg.seed, TAG_INITIAL), ..cfg.mcmc.clone() };
            gibbs_initial_states(&ens, &mcmc, params.replicas, *spacing)?
        }
        (InitialMode::File { .. }, None) => unreachable!("file mode always yields states"),
    };
    eprintln!("simulating {} replicas, {} steps of dt = {}", params.replicas, params.steps(), params.dt);
    let trajs = simulate_replicas(&init, &ens.domain, &ens.potential, ens.beta, &params)?;

    let mut per = Vec::with_capacity(trajs.len());
    for (r, t) in trajs.iter().enumerate() {
        let mut bin = Vec::new();
        write_binary(t, &mut bin)?;
        let mut txt = Vec::new();
        write_text(t, &mut txt)?;
        run.write(&format!("trajectories/replica_{r:04}.bin"), &bin)?;
        run.write(&format!("trajectories/replica_{r:04}.txt"), &txt)?;
        let c = t.totals();
        per.push(json!({
            "replica": r,
            "steps": t.steps,
            "records": t.states.len(),
            "reflections": c.reflections,
            "capped_steps": c.capped,
            "redraws": c.redraws,
            "capped_fraction": t.capped_fraction(),
            "biased": t.biased(),
        }));
    }
    let biased = trajs.iter().any(|t| t.biased());
    let summary = json!({
        "command": "simulate",
        "inputs_digest": inputs_digest("simulate", cfg, &()),
        "dt": params.dt,
        "horizon": params.horizon,
        "drift_cap": params.drift_cap,
        "replicas": per,
        "biased": biased,
    });
    run.write_json("summary.json", &summary)?;
    run.metadata("simulate")?;
    if biased {
        eprintln!("warning: capped-step fraction above threshold; summary flagged biased");
    }
    Ok(Outcome::Success)
}

fn experiment_seed(cfg: &ExperimentConfig, e: Experiment) -> u64 {
    derive_seed(cfg.seed, TAG_VERIFY + e as u64)
}

fn user_cylinder(f: &CylinderFunction, dim: usize, path: &str) -> Result<CylinderFunction, ConfigError> {
    let c = CylinderFunction::new(f.g.clone(), f.fs.clone()).map_err(|e| ConfigError::at(path, e))?;
    if c.dim() != dim {
        return Err(ConfigError::at(path, format!("test functions live in dimension {}, the box in {dim}", c.dim())));
    }
    Ok(c)
}

pub fn verify(cfg: &ExperimentConfig, exp: Experiment, run: &Run) -> Result<Outcome, CliError> {
    let seed = experiment_seed(cfg, exp);
    let diag = &cfg.diagnostics;
    let digest_inputs = json!({ "experiment": exp.name() });
    let rep = match exp {
        Experiment::Ruelle => {
            let (sched, beta, pot) = cfg.schedule()?;
            if diag.ruelle_orders.is_empty() || diag.ruelle_orders.contains(&0) {
                return Err(ConfigError::at("diagnostics.ruelle_orders", "orders must be positive").into());
            }
            let p = gibbslab::gibbs::ruelle::RuelleParams {
                mcmc: McmcParams { seed, ..diag.ruelle.mcmc.clone() },
                ..diag.ruelle.clone()
            };
            let r = verify_ruelle_bound(&sched, beta, &pot, &diag.ruelle_orders, &p)?;
            let mut csv = String::from("n,volume,order,method,xi,zeta\n");
            for e in &r.entries {
                csv.push_str(&format!("{},{:?},{},{},{:?},{:?}\n", e.n_particles, e.volume, e.order, e.method, e.xi, e.zeta));
            }
            run.write("trend.csv", csv.as_bytes())?;
            reports::ruelle(&r, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Ks => {
            let ens = cfg.canonical()?;
            let k = &diag.ks;
            if let Some(&bad) = k.orders.iter().find(|&&n| n == 0 || n > ens.n) {
                return Err(ConfigError::at("diagnostics.ks.orders", format!("order {bad} outside 1..={}", ens.n)).into());
            }
            let mut orders = Vec::new();
            for (i, &n) in k.orders.iter().enumerate() {
                let pts = random_points(&ens.domain, n, k.points, derive_seed(seed, i as u64));
                orders.push(KsOrder { order: n, residuals: kirkwood_salsburg_residual(&ens, n, &pts, k.quad_tol)? });
            }
            reports::ks(&orders, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Ibp => {
            let ens = cfg.canonical()?;
            check_mcmc(&cfg.mcmc)?;
            let triples: Vec<(CylinderFunction, CylinderFunction, gibbslab::diagnostics::VectorField)> = match &diag.ibp.triples {
                Some(ts) => ts
                    .iter()
                    .enumerate()
                    .map(|(i, t)| {
                        let base = format!("diagnostics.ibp.triples[{i}]");
                        let f = user_cylinder(&t.f, ens.dim(), &format!("{base}.f"))?;
                        let g = user_cylinder(&t.g, ens.dim(), &format!("{base}.g"))?;
                        t.v.validate().map_err(|e| ConfigError::at(format!("{base}.v"), e))?;
                        if !t.v.inside(&ens.domain) {
                            return Err(ConfigError::at(format!("{base}.v"), "vector field is supported outside the box"));
                        }
                        Ok((f, g, t.v.clone()))
                    })
                    .collect::<Result<_, ConfigError>>()?,
                None => standard_ibp_triples(&ens.domain).into_iter().map(|t| (t.f, t.g, t.v)).collect(),
            };
            let s = sample_gibbs(&ens, &McmcParams { seed, ..cfg.mcmc.clone() })?;
            let rs = triples
                .iter()
                .map(|(f, g, v)| ibp_residual(f, g, v, &ens.potential, ens.beta, &s))
                .collect::<gibbslab::Result<Vec<_>>>()?;
            reports::ibp(&rs, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Martingale => {
            let ens = cfg.canonical()?;
            let fs = match &diag.martingale_functions {
                Some(fs) => fs
                    .iter()
                    .enumerate()
                    .map(|(i, f)| user_cylinder(f, ens.dim(), &format!("diagnostics.martingale_functions[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?,
                None => standard_cylinders(&ens.domain),
            };
            let lp = seeded_ladder(&diag.ladder, seed);
            let rs = martingale_ladder_many(&ens, &fs, &lp)?;
            reports::martingale(&rs, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Qv => {
            let ens = cfg.canonical()?;
            let bump = diag.qv_bump.clone().unwrap_or_else(|| central_bump(&ens));
            if bump.center.len() != ens.dim() {
                return Err(ConfigError::at("diagnostics.qv_bump", "dimension differs from the box").into());
            }
            let r = qv_ladder(&ens, &bump, &seeded_ladder(&diag.ladder, seed))?;
            reports::qv(&r, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Increments => {
            let (sched, beta, pot) = cfg.schedule()?;
            let fam = cfg.metric(sched.entries[0].1.dim(), beta, &pot, derive_seed(cfg.seed, TAG_METRIC))?;
            let ip = gibbslab::diagnostics::IncrementParams {
                sde: gibbslab::dynamics::SdeParams { seed, ..diag.increments.sde.clone() },
                mcmc: McmcParams { seed, ..diag.increments.mcmc.clone() },
                ..diag.increments.clone()
            };
            let r = increment_sweep(&sched, beta, &pot, &fam, &ip)?;
            reports::increments(&r, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Smoment => {
            let ens = cfg.canonical()?;
            check_mcmc(&cfg.mcmc)?;
            let fam = cfg.metric(ens.dim(), ens.beta, &ens.potential, derive_seed(cfg.seed, TAG_METRIC))?;
            let sm = &diag.smoment;
            let mc = MomentMethod::Mcmc { sweeps: cfg.mcmc.sweeps, burn_in: cfg.mcmc.burn_in, chains: cfg.mcmc.chains, seed };
            let quad = MomentMethod::CorrelationQuadrature { quad_tol: sm.quad_tol };
            let r = compare_s_moment(&ens, &fam, sm.weight, mc, quad)?;
            let err = expansion_error(&ens, &fam, sm.weight, sm.identity_samples, seed)?;
            reports::smoment(&r, err, &inputs_digest("verify", cfg, &digest_inputs))
        }
        Experiment::Ensembles => {
            let (sched, beta, pot) = cfg.schedule()?;
            let e = &diag.ensembles;
            let ep = gibbslab::gibbs::ensembles::EnsembleParams {
                mcmc: McmcParams { seed, ..e.mcmc.clone() },
                gcmc: gibbslab::gibbs::gcmc::GcmcParams { seed: derive_seed(seed, 1), ..e.gcmc.clone() },
                ..e.clone()
            };
            let r = ensembles_compare(&sched, beta, &pot, &ep)?;
            reports::ensembles(&r, &inputs_digest("verify", cfg, &digest_inputs))
        }
    };
    let outcome = run.report(&rep)?;
    run.metadata(&format!("verify {}", exp.name()))?;
    Ok(outcome)
}

fn seeded_ladder(p: &gibbslab::diagnostics::LadderParams, seed: u64) -> gibbslab::diagnostics::LadderParams {
    gibbslab::diagnostics::LadderParams {
        sde: gibbslab::dynamics::SdeParams { seed, ..p.sde.clone() },
        mcmc: McmcParams { seed: derive_seed(seed, 1), ..p.mcmc.clone() },
        ..p.clone()
    }
}

/// Largest relative gap between the f^{[n,p]} expansion and the direct
/// power of the pair statistic, over random configurations (up to seven
/// points) and p = 2, 3.
fn expansion_error(
    ens: &gibbslab::gibbs::CanonicalEnsemble,
    fam: &gibbslab::configspace::MetricFamily,
    weight: gibbslab::diagnostics::Weight,
    count: usize,
    seed: u64,
) -> Result<f64, CliError> {
    let m = ens.n.min(7);
    let f = |x: &[f64], y: &[f64]| {
        let r = gibbslab::potential::distance(x, y);
        (fam.scale * fam.phi.value(r)).exp() * weight.value(x) * weight.value(y)
    };
    let mut worst: f64 = 0.0;
    for coords in random_points(&ens.domain, m, count, seed) {
        let c = Configuration::from_flat(ens.domain.clone(), coords)?;
        for p in [2, 3] {
            let direct = pair_power_direct(&f, &c, p);
            if !direct.is_finite() || direct == 0.0 {
                continue;
            }
            let e = pair_moment_expansion(&f, &c, p)?;
            worst = worst.max(((e - direct) / direct).abs());
        }
    }
    Ok(worst)
}

/// One finished schedule entry on disk, keyed by the content hash of what
/// produced it.
#[derive(Serialize, serde::Deserialize)]
struct StoredEntry {
    hash: String,
    entry: SweepEntry,
}

pub fn sweep(cfg: &ExperimentConfig, run: &Run) -> Result<Outcome, CliError> {
    let (sched, beta, pot) = cfg.schedule()?;
    let experiments = cfg.diagnostics.experiments.clone();
    if experiments.is_empty() {
        return Err(ConfigError::at("diagnostics.experiments", "no experiments selected").into());
    }
    let params = SweepParams { seed: derive_seed(cfg.seed, TAG_SWEEP), ..cfg.diagnostics.sweep.clone() };
    let mut entries = Vec::with_capacity(sched.entries.len());
    let mut reused = 0;
    for j in 0..sched.entries.len() {
        let n = sched.entries[j].0;
        let rel = format!("entries/{j:03}_N{n}/entry.json");
        // Entry j depends on the whole prefix of the schedule (the ensemble
        // comparison reads earlier entries), so the hash covers it.
        let hash = digest(&json!({
            "config": inputs_digest("sweep", cfg, &()),
            "prefix": sched.entries[..=j],
            "experiments": experiments,
        }));
        let stored = fs::read(run.out.join(&rel)).ok().and_then(|b| serde_json::from_slice::<StoredEntry>(&b).ok());
        let entry = match stored {
            Some(s) if s.hash == hash => {
                reused += 1;
                eprintln!("entry {j} (N = {n}): up to date, skipped");
                s.entry
            }
            _ => {
                eprintln!("entry {j} (N = {n}): running");
                let e = sweep_entry(&sched, j, beta, &pot, &experiments, &params);
                for err in &e.errors {
                    eprintln!("entry {j} (N = {n}): {err}");
                }
                run.write_json(&rel, &StoredEntry { hash, entry: e.clone() })?;
                e
            }
        };
        entries.push(entry);
    }
    let report = assemble_sweep(entries);
    run.write("trend.csv", report.trend_csv().as_bytes())?;
    let failed: usize = report.entries.iter().map(|e| e.errors.len()).sum();
    run.write_json(
        "summary.json",
        &json!({
            "command": "sweep",
            "inputs_digest": inputs_digest("sweep", cfg, &()),
            "rho": sched.rho,
            "beta": beta,
            "experiments": experiments,
            "entries": report.entries,
            "trends": report.trends,
            "failed_experiments": failed,
        }),
    )?;
    run.metadata("sweep")?;
    eprintln!("{} entries ({} reused), {} failed experiment runs", report.entries.len(), reused, failed);
    Ok(Outcome::Success)
}

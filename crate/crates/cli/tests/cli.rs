use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn gibbslab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gibbslab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(dir: &Path, args: &[&str], config: &Path, out: &str) -> (i32, PathBuf, String) {
    let out_dir = dir.join(out);
    let mut all: Vec<&str> = args.to_vec();
    let (c, o) = (config.to_str().unwrap().to_string(), out_dir.to_str().unwrap().to_string());
    all.extend(["--config", &c, "--out", &o]);
    let res = gibbslab(&all);
    (res.status.code().unwrap(), out_dir, String::from_utf8_lossy(&res.stderr).into_owned())
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

const IDEAL: &str = r#"{"seed": 5, "potential": {"kind": "ideal-gas"}, "ensemble": {"n": 3, "lengths": [2.0], "beta": 1.0},
    "mcmc": {"sweeps": 300, "burn_in": 50, "chains": 2}}"#;

const SOFT: &str = r#"{"seed": 9, "potential": {"kind": "soft-sphere"}, "ensemble": {"n": 3, "lengths": [3.0], "beta": 1.0},
    "mcmc": {"sweeps": 500, "burn_in": 100, "chains": 2}, "sde": {"dt": 1e-3, "horizon": 0.05, "stride": 5, "replicas": 2},
    "schedule": {"rho": 0.5, "n": [2, 3, 4, 5, 6]},
    "diagnostics": {"ruelle": {"mcmc": {"sweeps": 500, "burn_in": 100}}}}"#;

#[test]
fn ideal_gas_sample_accepts_everything_and_is_reproducible() {
    let t = TempDir::new().unwrap();
    let c = write_config(t.path(), "c.json", IDEAL);
    let (code, a, _) = run(t.path(), &["sample"], &c, "a");
    assert_eq!(code, 0);
    assert_eq!(json(&a.join("summary.json"))["acceptance"], 1.0);
    let (_, b, _) = run(t.path(), &["sample", "--workers", "1"], &c, "b");
    assert_eq!(fs::read(a.join("samples.csv")).unwrap(), fs::read(b.join("samples.csv")).unwrap());
    assert_eq!(fs::read(a.join("summary.json")).unwrap(), fs::read(b.join("summary.json")).unwrap());
    assert!(a.join("metadata.json").exists());
}

#[test]
fn seed_override_changes_the_stream() {
    let t = TempDir::new().unwrap();
    let c = write_config(t.path(), "c.json", IDEAL);
    let (_, a, _) = run(t.path(), &["sample"], &c, "a");
    let (_, b, _) = run(t.path(), &["sample", "--seed", "6"], &c, "b");
    assert_ne!(fs::read(a.join("samples.csv")).unwrap(), fs::read(b.join("samples.csv")).unwrap());
}

#[test]
fn config_errors_name_the_key_and_write_nothing() {
    let t = TempDir::new().unwrap();
    let c = write_config(t.path(), "c.json", r#"{"potential": {"kind": "ideal-gas"}}"#);
    let (code, out, err) = run(t.path(), &["sample"], &c, "o");
    assert_eq!(code, 2);
    assert!(err.contains("`seed`"), "{err}");
    assert!(!out.exists());

    let c = write_config(t.path(), "d.json", &IDEAL.replace("\"beta\"", "\"betta\""));
    let (code, out, err) = run(t.path(), &["sample"], &c, "o");
    assert_eq!(code, 2);
    assert!(err.contains("`ensemble.betta`"), "{err}");
    assert!(!out.exists());

    let c = write_config(t.path(), "e.json", &IDEAL.replace("\"sweeps\": 300", "\"sweeps\": -3"));
    let (code, _, err) = run(t.path(), &["sample"], &c, "o");
    assert_eq!(code, 2);
    assert!(err.contains("`mcmc.sweeps`"), "{err}");
}

#[test]
fn zero_horizon_echoes_an_explicit_initial_state() {
    let t = TempDir::new().unwrap();
    let init = write_config(t.path(), "init.txt", "1 3.0 3 0.5 1.5 2.5\n");
    let body = SOFT.replace(
        r#""sde": {"dt": 1e-3, "horizon": 0.05, "stride": 5, "replicas": 2}"#,
        &format!(r#""sde": {{"dt": 1e-3, "horizon": 0.0, "replicas": 2, "initial": {{"mode": "file", "path": {:?}}}}}"#, init),
    );
    let c = write_config(t.path(), "c.json", &body);
    let (code, out, err) = run(t.path(), &["simulate"], &c, "o");
    assert_eq!(code, 0, "{err}");
    let txt = fs::read_to_string(out.join("trajectories/replica_0001.txt")).unwrap();
    let last = txt.lines().last().unwrap();
    assert_eq!(last, "0 0 0 0 0.5 1.5 2.5");
    assert_eq!(json(&out.join("summary.json"))["replicas"][0]["records"], 1);
}

#[test]
fn simulation_is_deterministic_and_flags_bias() {
    let t = TempDir::new().unwrap();
    let c = write_config(t.path(), "c.json", SOFT);
    let (code, a, _) = run(t.path(), &["simulate"], &c, "a");
    assert_eq!(code, 0);
    let (_, b, _) = run(t.path(), &["simulate"], &c, "b");
    for f in ["trajectories/replica_0000.bin", "trajectories/replica_0001.txt", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(json(&a.join("summary.json"))["biased"], false);

    // A drift cap far below typical forces caps most steps.
    let capped = SOFT.replace(r#""replicas": 2}"#, r#""replicas": 2, "drift_cap": 1e-3}"#);
    let c = write_config(t.path(), "capped.json", &capped);
    let (code, o, _) = run(t.path(), &["simulate"], &c, "capped");
    assert_eq!(code, 0);
    let s = json(&o.join("summary.json"));
    assert_eq!(s["biased"], true);
    assert!(s["replicas"][0]["capped_fraction"].as_f64().unwrap() > 1e-3);
}

#[test]
fn verify_ks_on_ideal_gas_has_zero_residual() {
    let t = TempDir::new().unwrap();
    let c = write_config(t.path(), "c.json", IDEAL);
    let (code, out, _) = run(t.path(), &["verify", "ks"], &c, "o");
    assert_eq!(code, 0);
    let rep = json(&out.join("report.json"));
    for s in rep["statistics"].as_array().unwrap() {
        assert!(s["value"].as_f64().unwrap() < 1e-12);
    }
    assert!(fs::read_to_string(out.join("statistics.csv")).unwrap().starts_with("statistic,value,se\n"));
}

#[test]
fn failed_hard_invariant_exits_one() {
    let t = TempDir::new().unwrap();
    // A coarse quadrature tolerance cannot meet the 1e−6 residual bound.
    let body = SOFT.replace(r#""diagnostics": {"#, r#""diagnostics": {"ks": {"orders": [1], "points": 2, "quad_tol": 0.3}, "#);
    let c = write_config(t.path(), "c.json", &body);
    let (code, out, _) = run(t.path(), &["verify", "ks"], &c, "o");
    assert_eq!(code, 1);
    assert!(out.join("report.json").exists());
}

#[test]
fn ibp_field_outside_the_box_is_a_precondition_error() {
    let t = TempDir::new().unwrap();
    let triple = r#""ibp": {"triples": [{"f": {"g": {"scale": null, "constant": 0, "linear": [1], "quadratic": [0]},
        "fs": [{"center": [1.5], "radius": 0.5, "amplitude": 1}]},
        "g": {"g": {"scale": null, "constant": 1, "linear": [0], "quadratic": [0]},
        "fs": [{"center": [1.5], "radius": 0.5, "amplitude": 1}]},
        "v": {"kind": "directional", "center": [2.8], "radius": 0.5, "direction": [1]}}]}, "#;
    let c = write_config(t.path(), "c.json", &SOFT.replace(r#""diagnostics": {"#, &format!(r#""diagnostics": {{{triple}"#)));
    let (code, out, err) = run(t.path(), &["verify", "ibp"], &c, "o");
    assert_eq!(code, 2);
    assert!(err.contains("diagnostics.ibp.triples[0].v") && err.contains("outside"), "{err}");
    assert!(!out.exists());
}

#[test]
fn verify_ruelle_writes_one_trend_row_per_entry() {
    let t = TempDir::new().unwrap();
    let c = write_config(t.path(), "c.json", SOFT);
    let (code, out, err) = run(t.path(), &["verify", "ruelle"], &c, "o");
    assert_eq!(code, 0, "{err}");
    let csv = fs::read_to_string(out.join("trend.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.iter().map(|r| r.split(',').next().unwrap()).collect::<Vec<_>>(), ["2", "3", "4", "5", "6"]);
}

#[test]
fn one_entry_sweep_matches_verify() {
    let t = TempDir::new().unwrap();
    // N·d = 3 stays on the deterministic quadrature path.
    let body = SOFT.replace(r#""n": [2, 3, 4, 5, 6]"#, r#""n": [3]"#).replace(r#""diagnostics": {"#, r#""diagnostics": {"experiments": ["ruelle"], "#);
    let c = write_config(t.path(), "c.json", &body);
    let (code, v, _) = run(t.path(), &["verify", "ruelle"], &c, "v");
    assert_eq!(code, 0);
    let (code, s, _) = run(t.path(), &["sweep"], &c, "s");
    assert_eq!(code, 0);
    let verify = json(&v.join("report.json"));
    let zeta_v = verify["statistics"].as_array().unwrap().iter().find(|s| s["name"] == "zeta2_N3").unwrap()["value"].as_f64().unwrap();
    let sweep = json(&s.join("summary.json"));
    let stats = sweep["entries"][0]["statistics"].as_array().unwrap();
    let zeta_s = stats.iter().find(|s| s["name"] == "zeta2").unwrap()["value"].as_f64().unwrap();
    assert_eq!(zeta_v, zeta_s);
}

#[test]
fn sweep_isolates_failures_and_resumes() {
    let t = TempDir::new().unwrap();
    let body = r#"{"seed": 2, "potential": {"kind": "ideal-gas"}, "schedule": {"rho": 0.5, "n": [2, 3, 4], "beta": 1.0},
        "diagnostics": {"experiments": ["activity", "ensembles"],
            "sweep": {"mcmc": {"sweeps": 300, "burn_in": 50},
                      "ensembles": {"mcmc": {"sweeps": 300, "burn_in": 50}, "gcmc": {"sweeps": 300, "burn_in": 50}}}}}"#;
    let c = write_config(t.path(), "c.json", body);
    let (code, out, err) = run(t.path(), &["sweep"], &c, "o");
    assert_eq!(code, 0, "{err}");
    let s = json(&out.join("summary.json"));
    // The comparison needs a predecessor, so entry 0 fails; the rest run.
    assert_eq!(s["entries"][0]["errors"].as_array().unwrap().len(), 1);
    assert!(s["entries"][2]["errors"].as_array().unwrap().is_empty());
    for (j, n) in [(0, 2), (1, 3), (2, 4)] {
        assert!(out.join(format!("entries/{j:03}_N{n}/entry.json")).exists());
    }
    let trend = fs::read_to_string(out.join("trend.csv")).unwrap();
    assert_eq!(trend.lines().filter(|l| l.contains(",activity,")).count(), 3);

    let before = fs::read_to_string(out.join("summary.json")).unwrap();
    let (code, _, err) = run(t.path(), &["sweep"], &c, "o");
    assert_eq!(code, 0);
    assert_eq!(err.matches("skipped").count(), 3, "{err}");
    assert_eq!(before, fs::read_to_string(out.join("summary.json")).unwrap());

    // A changed config invalidates the stored entries.
    let c2 = write_config(t.path(), "c2.json", &body.replace(r#""seed": 2"#, r#""seed": 3"#));
    let (_, _, err) = run(t.path(), &["sweep"], &c2, "o");
    assert_eq!(err.matches("skipped").count(), 0, "{err}");
}

//! End-to-end runs of the job pipelines on small configurations.

use std::path::Path;

use fpsusy::config::RunConfig;
use fpsusy::runner::{apply_overrides, run, RunOptions, Subcommand};
use serde_json::Value;

fn config(text: &str) -> RunConfig {
    RunConfig::from_json(text).unwrap()
}

fn opts(out: &Path) -> RunOptions {
    RunOptions {
        out: Some(out.to_path_buf()),
        ..RunOptions::default()
    }
}

fn invariants(v: &Value) -> Vec<(String, bool)> {
    v["invariants"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| (i["invariant"].as_str().unwrap().to_string(), i["passed"].as_bool().unwrap()))
        .collect()
}

const CIRCLE: &str = r#"{
  "schema_version": 1,
  "grid": {"kind": "circle", "nodes": 48},
  "theta": 0.5,
  "flow": {"name": "circle-drive", "params": {"v": 1.0, "b": 0.0}},
  "jobs": {"spectrum": {"theta_sweep": [0.2, 0.4]}, "correlate": {"t": [0.5, 1.0, 1.5, 2.0]}}
}"#;

const OU: &str = r#"{
  "schema_version": 1,
  "grid": {"kind": "line", "nodes": 200, "lo": -6.0, "hi": 6.0},
  "theta": 1.0,
  "flow": {"name": "ou", "params": {"omega0": 1.0}},
  "seed": 5,
  "jobs": {
    "partition": {"t": [0.5, 1.0, 2.0]},
    "evolve": {"t": 2.0, "dt": 0.05, "initial": {"kind": "gaussian", "center": [0.5], "width": [0.7]}},
    "simulate": {"samples": 4000, "steps": 1000, "dt": 0.01, "zero_mode_l1": 0.2},
    "nicolai": {"draws": 3, "brackets": 2000}
  }
}"#;

#[test]
fn index_on_the_circle_vanishes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Subcommand::Index, Some(&config(CIRCLE)), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    let r = &out.report["results"]["index"];
    assert_eq!(r["euler_characteristic"], 0);
    for w in r["values"].as_array().unwrap() {
        assert!(w["trace"].as_f64().unwrap().abs() <= 1e-6);
        assert!(w["residual"].as_f64().unwrap() <= 1e-6);
    }
}

#[test]
fn partition_matches_the_harmonic_oscillator() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Subcommand::Partition, Some(&config(OU)), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    for v in out.report["results"]["partition"]["values"].as_array().unwrap() {
        let t = v["t"].as_f64().unwrap();
        let exact = 1.0 / (t / 2.0).tanh();
        assert!((v["z"].as_f64().unwrap() - exact).abs() / exact <= 0.02);
    }
    let csv = std::fs::read_to_string(dir.path().join("partition.csv")).unwrap();
    assert!(csv.starts_with("t,z,z_im,lower_bound,harmonic\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn spectrum_writes_scatter_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Subcommand::Spectrum, Some(&config(CIRCLE)), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    let spec = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    assert!(spec.starts_with("sector,re,im,class,partner\n"));
    assert_eq!(spec.lines().count(), 1 + 2 * 48);
    assert!(!spec.contains('\r'));
    let sweep = std::fs::read_to_string(dir.path().join("gap_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    let r = &out.report["results"]["spectrum"];
    let names: Vec<String> = invariants(r).into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"nilpotency".to_string()));
    assert!(names.contains(&"conjugation-closure".to_string()));
    assert!(r["gap_sweep"]["slope"].as_f64().unwrap() > 0.0);
}

#[test]
fn correlate_recovers_drift_and_diffusion() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Subcommand::Correlate, Some(&config(CIRCLE)), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    let r = &out.report["results"]["correlate"];
    assert_eq!(invariants(r).len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("correlation.csv")).unwrap();
    assert!(csv.starts_with("t,re,im\n"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn evolve_and_simulate_pass_their_checks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(OU);
    let out = run(Subcommand::Evolve, Some(&cfg), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    assert!(dir.path().join("evolution_log.csv").exists());
    let out = run(Subcommand::Simulate, Some(&cfg), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    let names: Vec<String> = invariants(&out.report["results"]["simulate"]).into_iter().map(|(n, _)| n).collect();
    assert!(names.contains(&"ou-stationary-variance".to_string()));
    assert!(dir.path().join("moments.json").exists());
}

#[test]
fn nicolai_winding_is_one_on_every_draw() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(Subcommand::Nicolai, Some(&config(OU)), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    let csv = std::fs::read_to_string(dir.path().join("winding.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[3].parse::<i64>().unwrap().abs(), 1);
    }
    assert!(dir.path().join("solutions/solutions_5.json").exists());
}

#[test]
fn cpd_check_on_a_product_density() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        r#"{
          "schema_version": 1,
          "grid": {"kind": "square", "nodes": 20, "lo": -2.5, "hi": 2.5},
          "theta": 1.0,
          "flow": {"name": "ou", "params": {"omega0": 1.0, "omega1": 1.5}},
          "jobs": {"cpd": {"known": 1, "t": 0.5, "dt": 0.05, "samples": 3}}
        }"#,
    );
    let out = run(Subcommand::CpdCheck, Some(&cfg), &opts(dir.path())).unwrap();
    assert!(out.passed(), "{:?}", out.failures);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cpd_report.json")).unwrap()).unwrap();
    assert!(report["factorization_residual"].as_f64().unwrap() <= 1e-10);
    // t = 0 plus one row per sample
    assert_eq!(report["evolution"]["samples"].as_array().unwrap().len(), 4);
}

#[test]
fn violated_invariants_are_reported_with_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(OU);
    cfg.jobs.evolve.mass_drift = 1e-300;
    cfg.jobs.evolve.zero_mode_l1 = Some(1e-12);
    let out = run(Subcommand::Evolve, Some(&cfg), &opts(dir.path())).unwrap();
    assert_eq!(out.exit_code(), 1);
    let f = out.failures.iter().find(|f| f.invariant == "zero-mode-l1").unwrap();
    assert!(f.measured.unwrap() > 1e-12);
    assert_eq!(f.tolerance, Some(1e-12));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
    assert!(!report["failures"].as_array().unwrap().is_empty());
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let cfg = config(OU);
    run(Subcommand::Simulate, Some(&cfg), &opts(a.path())).unwrap();
    run(Subcommand::Simulate, Some(&cfg), &opts(b.path())).unwrap();
    let ra = std::fs::read(a.path().join("report.json")).unwrap();
    let rb = std::fs::read(b.path().join("report.json")).unwrap();
    assert_eq!(ra, rb);
    assert!(a.path().join("metadata.json").exists());
}

#[test]
fn overrides_are_validated() {
    let mut cfg = config(OU);
    let mut o = RunOptions {
        seed: Some(99),
        tol_zero: Some(1e-9),
        ..RunOptions::default()
    };
    apply_overrides(&mut cfg, &o).unwrap();
    assert_eq!(cfg.seed, 99);
    assert_eq!(cfg.tolerances.tol_zero, 1e-9);
    o.eps_gamma = Some(-1.0);
    match apply_overrides(&mut cfg, &o) {
        Err(fpsusy::Error::Config { pointer, .. }) => assert_eq!(pointer, "/tolerances/eps_gamma"),
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn subcommands_parse_by_name() {
    for c in Subcommand::ALL {
        assert_eq!(c.as_str().parse::<Subcommand>().unwrap(), c);
    }
    assert!("bogus".parse::<Subcommand>().is_err());
}

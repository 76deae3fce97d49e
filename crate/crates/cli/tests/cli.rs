use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CIRCLE: &str = r#"{
  "schema_version": 1,
  "grid": { "kind": "circle", "nodes": 32 },
  "theta": 0.5,
  "flow": { "name": "circle-drive", "params": { "v": 0.7, "b": 0.5 } },
  "seed": 11,
  "output": "out",
  "jobs": { "index": { "t": [0.5, 2.0] } }
}"#;

const OU: &str = r#"{
  "schema_version": 1,
  "grid": { "kind": "line", "nodes": 120, "lo": -5.0, "hi": 5.0 },
  "theta": 1.0,
  "flow": { "name": "ou", "params": { "omega0": 1.0 } },
  "seed": 2,
  "output": "out",
  "jobs": { "index": { "t": [0.5, 2.0] } }
}"#;

fn fpsusy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpsusy")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn passing_run_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CIRCLE);
    let out = dir.path().join("run");
    let o = fpsusy(&["index", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.json").is_file());
    assert!(out.join("metadata.json").is_file());
}

#[test]
fn malformed_config_names_the_offending_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.json", &CIRCLE.replace("\"nodes\": 32", "\"nodes\": \"many\""));
    let o = fpsusy(&["index", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/grid/nodes"), "{err}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = fpsusy(&["spectra"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CIRCLE);
    let reports: Vec<Vec<u8>> = ["a", "b"]
        .iter()
        .map(|name| {
            let out = dir.path().join(name);
            let o = fpsusy(&["index", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "4"]);
            assert_eq!(o.status.code(), Some(0));
            fs::read(out.join("report.json")).unwrap()
        })
        .collect();
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn tightened_tolerance_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", OU);
    let out = dir.path().join("strict");
    // below round-off the single zero mode is no longer counted
    let o = fpsusy(&["index", "--config", &cfg, "--out", out.to_str().unwrap(), "--tol-zero", "1e-300"]);
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(o.status.code(), Some(1), "{err}");
    assert!(err.contains("FAIL"), "{err}");
}

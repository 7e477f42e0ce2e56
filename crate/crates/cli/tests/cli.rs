use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn thermoshift(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermoshift")).args(args).output().expect("binary runs")
}

fn run_config(name: &str, out: &Path) -> Output {
    let cfg = configs().join(name);
    thermoshift(&["run", cfg.to_str().unwrap(), "--out-dir", out.to_str().unwrap()])
}

fn summary(out: &Path, stem: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join(format!("{stem}.summary.json"))).unwrap()).unwrap()
}

#[test]
fn symmetric_two_well_splits_evenly() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("symmetric-two-well.json", dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(dir.path(), "symmetric-two-well");
    let delta: Vec<f64> = s["delta"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(delta.len(), 2);
    assert!(delta.iter().all(|d| (d - 0.5).abs() < 1e-9), "{delta:?}");
    assert_eq!(s["all_passed"], Value::Bool(true));
}

#[test]
fn four_state_table_has_twenty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("metastable-4state.json", dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("metastable-4state.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# columns:"));
    assert!(lines.next().unwrap().starts_with("eps,lambda,"));
    assert_eq!(lines.count(), 20);
    let s = summary(dir.path(), "metastable-4state");
    assert!((s["delta"][0].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-6);
}

#[test]
fn missing_q_schedule_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_config("bad-config-missing-Q.json", dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("q_schedule"));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn missing_config_file_is_an_input_error() {
    let out = thermoshift(&["run", "/nonexistent/config.json"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn interval_run_passes_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run_config("interval-asymmetric.json", a.path()).status.code(), Some(0));
    let out = Command::new(env!("CARGO_BIN_EXE_thermoshift"))
        .env("THERMOSHIFT_THREADS", "1")
        .args(["run", configs().join("interval-asymmetric.json").to_str().unwrap(), "--out-dir", b.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let read = |d: &Path| std::fs::read(d.join("interval-asymmetric.summary.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn verify_prints_pass_counts() {
    let out = thermoshift(&["verify", "complement-identities", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("PASS schur-frobenius-residual: 100/100"), "{text}");
}

#[test]
fn verify_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = thermoshift(&["verify", "coupling-identities", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["suite"], "coupling-identities");
    assert_eq!(v["all_passed"], Value::Bool(true));
}

#[test]
fn unknown_suite_and_bad_thread_count_exit_3() {
    assert_eq!(thermoshift(&["verify", "nope"]).status.code(), Some(3));
    let out = Command::new(env!("CARGO_BIN_EXE_thermoshift")).env("THERMOSHIFT_THREADS", "zero").arg("schema").output().unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn schema_is_json() {
    let out = thermoshift(&["schema"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["experiment-config", "shift", "potential", "family", "interval-system"] {
        assert!(v.get(key).is_some(), "{key}");
    }
}

use std::process::{Command, Output};

use serde_json::Value;

fn islandwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_islandwalk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(args: &[&str]) -> Value {
    let out = islandwalk(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn close(v: &Value, x: f64) -> bool {
    (v.as_f64().unwrap() - x).abs() <= 1e-12
}

#[test]
fn check_sample_quad_holds() {
    let v = json(&["check", "--params", "0.8,0.3,0.5,0.6"]);
    assert_eq!(v["holds"], Value::Bool(true));
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 6);
    for k in ["gamma0", "gamma1", "lhs", "rhs", "holds", "drift_bound"] {
        assert!(keys.contains(&k), "{k}");
    }
}

#[test]
fn check_rule_0011() {
    let v = json(&["check", "--ca", "0011", "--eps", "0.1"]);
    assert_eq!(v["holds"], Value::Bool(true));
    assert!(close(&v["lhs"], 1.2));
    assert!(close(&v["rhs"], 0.8));
}

#[test]
fn check_zero_r_reports_infinite_bound() {
    let v = json(&["check", "--ca", "0000", "--eps", "0.2"]);
    assert_eq!(v["drift_bound"], Value::String("inf".into()));
}

#[test]
fn ca1000_bound() {
    let v = json(&["ca1000", "--eps", "0.25"]);
    assert!(close(&v["drift_bound"], 1.375));
    assert!(close(&v["drift_1110"], 1.375));
}

#[test]
fn help_exits_zero() {
    assert!(islandwalk(&["--help"]).status.success());
    assert!(islandwalk(&["sweep", "--help"]).status.success());
}

#[test]
fn exit_codes() {
    assert_eq!(islandwalk(&["check", "--params", "0.8,0.3"]).status.code(), Some(2));
    assert_eq!(islandwalk(&["check", "--ca", "0011"]).status.code(), Some(2));
    assert_eq!(islandwalk(&["check", "--ca", "1000", "--eps", "0.7"]).status.code(), Some(2));
    assert_eq!(islandwalk(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(islandwalk(&["check", "--params", "0,0,1,1"]).status.code(), Some(3));
    let bad = islandwalk(&["check", "--params", "0.8,0.3,0.5,0.6", "-o", "/nonexistent/dir/out.json"]);
    assert_eq!(bad.status.code(), Some(4));
    assert!(!bad.stderr.is_empty());
}

#[test]
fn seeded_runs_are_deterministic() {
    for args in [
        &["island", "--params", "0.8,0.3,0.5,0.6", "--horizon", "200", "--seed", "3"][..],
        &["drift", "--ca", "0001", "--eps", "0.1", "--steps", "5000", "--seed", "4"],
        &["envelope", "--params", "0.8,0.3,0.5,0.6", "--n", "50", "--seed", "5"],
        &["volume", "--samples", "20000", "--seed", "6", "--jobs", "2"],
        &["ca1000", "--eps", "0.2", "--steps", "10000", "--seed", "7"],
    ] {
        let a = islandwalk(args);
        let b = islandwalk(args);
        assert!(a.status.success(), "{args:?}: {}", String::from_utf8_lossy(&a.stderr));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn sweep_csv_header_and_rows() {
    let out = islandwalk(&["sweep", "--codes", "0011,1000", "--grid", "0.1,0.2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "code,eps,gamma0,gamma1,lhs,rhs,holds,drift_bound");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("0011,1.0000000000000001e-1,"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, r#"{"ca": "0011", "eps": 0.3, "format": "json"}"#).unwrap();
    let path = cfg.to_str().unwrap();
    let v = json(&["check", "--config", path]);
    assert!(close(&v["lhs"], 1.6));
    let v = json(&["check", "--config", path, "--eps", "0.1"]);
    assert!(close(&v["lhs"], 1.2));
    let v = json(&["check", "--config", path, "--params", "0.8,0.3,0.5,0.6"]);
    assert!(close(&v["lhs"], 1.5));
    std::fs::write(&cfg, r#"{"bogus": 1}"#).unwrap();
    assert_eq!(islandwalk(&["check", "--config", path]).status.code(), Some(2));
}

#[test]
fn envelope_pgm_output() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("env.pgm");
    let out = islandwalk(&[
        "envelope", "--params", "0.8,0.3,0.5,0.6", "--n", "40", "--format", "pgm", "-o",
        img.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let bytes = std::fs::read(&img).unwrap();
    assert!(bytes.starts_with(b"P5\n40 "));
}

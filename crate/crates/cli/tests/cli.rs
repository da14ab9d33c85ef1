//! Exit codes, output files and reproducibility of the `extcalc` binary.

use std::process::{Command, Output};

fn extcalc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_extcalc")).args(args).env_remove("EXTCALC_SEED").output().expect("binary runs")
}

fn report(path: &std::path::Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn passing_suite_exits_zero_and_writes_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stenger.json");
    let o = extcalc(&["--suite", "stenger", "--seed", "7", "--trials", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = report(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["seed"], 7);
    assert_eq!(v["passed"], true);
}

#[test]
fn identical_configs_give_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let paths: Vec<_> = (0..2).map(|k| dir.path().join(format!("r{k}.json"))).collect();
    for p in &paths {
        let o = extcalc(&["--suite", "juni18a_roundtrip", "--seed", "3", "--trials", "4", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    let strip = |mut v: serde_json::Value| {
        v["wall_time_ms"] = serde_json::Value::Null;
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(strip(report(&paths[0])), strip(report(&paths[1])));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let o = Command::new(env!("CARGO_BIN_EXE_extcalc"))
        .args(["--suite", "l1", "--trials", "2"])
        .env("EXTCALC_SEED", "41")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["seed"], 41);
}

#[test]
fn failing_suite_exits_one() {
    // The exit-space suite reports a nontrivial H_1 intersection at finite
    // indices; the report is still written.
    let o = extcalc(&["--suite", "aug06a"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["passed"], false);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(extcalc(&["--suite", "bogus"]).status.code(), Some(2));
    assert_eq!(extcalc(&[]).status.code(), Some(2));
    assert_eq!(extcalc(&["--suite", "l1", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(extcalc(&["--suite", "l1", "--tol-rank", "-1"]).status.code(), Some(2));
    assert_eq!(extcalc(&["--grid", "default", "--model", "torus:3"]).status.code(), Some(2));
    assert_eq!(extcalc(&["--suite", "l1", "--grid", "default"]).status.code(), Some(2));
    assert_eq!(extcalc(&["--trials", "many"]).status.code(), Some(2));
}

#[test]
fn grid_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let o = extcalc(&["--grid", "x=0;y=1,2", "--model", "restricted:1:0@2", "--lambda", "1,2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "re_z,im_z,route,rows,cols,entries,bound_slack,condition,flag");
    assert_eq!(lines.len(), 1 + 2 * 2);
    assert!(lines[1].starts_with("0,1,via_nz,2,2,"));
}

#[test]
fn empty_grid_is_header_only() {
    let o = extcalc(&["--grid", "empty"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "re_z,im_z,route,rows,cols,entries,bound_slack,condition,flag\n");
}

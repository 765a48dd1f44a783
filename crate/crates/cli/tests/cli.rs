use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(format!("{name}.toml"))
}

fn locvna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_locvna")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8")
}

fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

#[test]
fn verify_s1_passes() {
    let o = locvna(&["--strict", "verify", path(&fixture("s1"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("PASS DEC = DIAG'"), "{text}");
}

#[test]
fn json_report_round_trips() {
    let o = locvna(&["--json", "verify", path(&fixture("s1"))]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let report = locvna::scenario::run::Report::from_json(&text).expect("report parses");
    assert!(report.passed);
    assert_eq!(report.to_json().trim(), text.trim());
}

#[test]
fn parse_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "version = 1\n[poset\n").unwrap();
    let o = locvna(&["verify", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn check_failure_exits_1_only_when_strict() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("negative.toml");
    let text = std::fs::read_to_string(fixture("s1")).unwrap().replace("\"2\" = \"2\"", "\"2\" = \"-2\"");
    std::fs::write(&bad, text).unwrap();
    assert_eq!(locvna(&["--strict", "verify", bad.to_str().unwrap()]).status.code(), Some(2));

    // a semantic failure: a fiber that shrinks along the order
    let shrink = dir.path().join("shrink.toml");
    let text = std::fs::read_to_string(fixture("s1")).unwrap().replace("dims = { a = 1, b = 2 }", "dims = { a = 2, b = 1 }");
    std::fs::write(&shrink, text).unwrap();
    assert_eq!(locvna(&["verify", shrink.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(locvna(&["--strict", "verify", shrink.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn random_is_deterministic() {
    let a = locvna(&["--seed", "11", "random", "--levels", "3", "--atoms", "4"]);
    let b = locvna(&["--seed", "11", "random", "--levels", "3", "--atoms", "4"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    let c = locvna(&["--seed", "12", "random", "--levels", "3", "--atoms", "4"]);
    assert_ne!(stdout(&a), stdout(&c));
}

#[test]
fn random_batch_writes_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = locvna(&["--strict", "random", "--count", "5", "--out", out, "--run"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("5/5 scenarios passed"));
    let written = dir.path().join("random-3.toml");
    let o = locvna(&["--strict", "verify", written.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn commutant_of_diag_is_dec() {
    let o = locvna(&["--json", "commutant", path(&fixture("s1")), "--of", "diag"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["dim"], 2);
    assert_eq!(v["commutant_dim"], 3);
    assert_eq!(v["commutant_equals_dec"], true);
    assert_eq!(v["double_commutant_equal"], false);
    let o = locvna(&["--json", "commutant", path(&fixture("s1")), "--of", "dec"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["double_commutant_equal"], true);
    assert_eq!(locvna(&["commutant", path(&fixture("s1")), "--of", "nope"]).status.code(), Some(2));
}

#[test]
fn classify_fixture_operators() {
    let o = locvna(&["--json", "classify", path(&fixture("lbo-not-dec"))]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["locally_bounded"], true);
    assert_eq!(v[0]["decomposable"], false);
    let o = locvna(&["--json", "classify", path(&fixture("diagonal")), "--operator", "M"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v[0]["diagonalizable"], true);
}

#[test]
fn validate_reports_sigma() {
    let o = locvna(&["--json", "validate", path(&fixture("counting"))]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["valid"], true);
    assert_eq!(v["sigma0_equals_sigma"], true);
    assert_eq!(v["dim"], 7);
}

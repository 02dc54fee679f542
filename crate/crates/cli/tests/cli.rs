use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn freelab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freelab")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn certifies_small_circle() {
    let out = freelab(&["search", "circle", "--n", "12"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["outcome"], "certified");
    assert_eq!(v["target"]["kind"], "theorem32");
}

#[test]
fn counterexample_is_a_successful_outcome() {
    let out = freelab(&["search", "circle", "--n", "5", "--target", "5/2", "--no-heuristics"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["outcome"], "counterexample");
    assert!(v["system"].is_object());
}

#[test]
fn budget_exhaustion_checkpoints_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("frontier.json");
    let out = freelab(&["search", "circle", "--n", "20", "--budget-nodes", "40", "--checkpoint", path(&ck)]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["outcome"], "indeterminate");
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(&ck).unwrap()).unwrap();
    assert!(!saved["frontier"].as_array().unwrap().is_empty());

    let resumed = freelab(&["search", "circle", "--n", "20", "--budget-nodes", "40", "--resume", path(&ck)]);
    assert_eq!(resumed.status.code(), Some(2));
    assert!(json(&resumed)["nodes_explored"].as_u64().unwrap() > saved["nodes_explored"].as_u64().unwrap());
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(freelab(&["bogus"]).status.code(), Some(64));
    assert_eq!(freelab(&["search", "circle"]).status.code(), Some(64));
    assert_eq!(freelab(&["--threads", "0", "space", "circle", "--n", "4"]).status.code(), Some(64));
    assert_eq!(freelab(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_space_is_rejected_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    std::fs::write(&f, r#"{"points":["0","a"],"dist":[[0,1],[2,0]],"base":0}"#).unwrap();
    let out = freelab(&["space", "validate", "--file", path(&f)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(json(&out)["valid"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("d(0,1) != d(1,0)"));

    let syn = dir.path().join("syntax.json");
    std::fs::write(&syn, "{\"points\":[\"0\",\"a\"],\n \"dist\": [[0,1],[1,0]], \"base\": }").unwrap();
    let out = freelab(&["space", "validate", "--file", path(&syn)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("syntax.json:2:33"));
}

#[test]
fn triangle_violation_names_the_triple() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("tri.json");
    std::fs::write(&f, r#"{"points":["0","a","b"],"dist":[[0,1,5],[1,0,1],[5,1,0]],"base":0}"#).unwrap();
    let out = freelab(&["norm", "--space", path(&f), "--measure", "a:1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("d(0,2) > d(0,1) + d(1,2)"));
}

#[test]
fn norm_reports_primal_and_dual() {
    let dir = tempfile::tempdir().unwrap();
    let c4 = dir.path().join("c4.json");
    assert!(freelab(&["space", "circle", "--n", "4", "-o", path(&c4)]).status.success());
    let out = freelab(&["norm", "--space", path(&c4), "--measure", "x1:1,x3:-1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["primal"], "2");
    assert_eq!(v["dual"], "2");
    assert_eq!(v["agree"], true);
}

#[test]
fn extensional_verify_passes() {
    let out = freelab(&["extensional", "verify", "--k", "2", "--trials", "1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["all_passed"], true);
}

#[test]
fn experiment_csv_output() {
    let out = freelab(&["--format", "csv", "experiment", "dichotomy", "--k", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("system,branch,"));
}

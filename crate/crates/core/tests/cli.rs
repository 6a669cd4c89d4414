use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn jgw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jgw"))
        .args(args)
        .env_remove("JGW_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const CLOUD: &str = "x,y,cluster\n0,0,a\n1,0.2,a\n0.3,1.5,a\n2,2.2,b\n-1,0.7,b\n0.5,-1,b\n";

#[test]
fn solve_self_match() {
    let dir = TempDir::new().unwrap();
    let cloud = write(&dir, "cloud.csv", CLOUD);
    let coupling = dir.path().join("mu.csv");
    let report = dir.path().join("report.json");
    let out = jgw(&[
        "solve", "--source", s(&cloud), "--target", s(&cloud), "--epsilon", "2e-4", "--epsilon-start", "4e-3",
        "--out-coupling", s(&coupling), "--out-report", s(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json = stdout_json(&out);
    assert!(json["objective"].as_f64().unwrap() <= 1e-3);
    let saved: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(saved["objective"], json["objective"]);
    assert!(fs::read_to_string(&coupling).unwrap().starts_with("source_index,target_index,mass"));
}

#[test]
fn zero_eta_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cloud = write(&dir, "cloud.csv", CLOUD);
    let out = jgw(&["solve", "--source", s(&cloud), "--target", s(&cloud), "--eta", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("eta"), "{err}");
    assert_eq!(err.trim().lines().count(), 1);
}

#[test]
fn missing_file_names_the_path() {
    let out = jgw(&["solve", "--source", "/nonexistent/a.csv", "--target", "/nonexistent/b.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/a.csv"));
}

#[test]
fn bad_usage_exits_one() {
    assert_eq!(jgw(&["solve"]).status.code(), Some(1));
    assert_eq!(jgw(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(jgw(&["--help"]).status.code(), Some(0));
}

#[test]
fn iteration_cap_exits_two() {
    let dir = TempDir::new().unwrap();
    let cloud = write(&dir, "cloud.csv", CLOUD);
    let other = write(&dir, "other.csv", "x,y,cluster\n0,0,a\n3,0,a\n0,1,a\n5,5,b\n5,6,b\n");
    let out = jgw(&["solve", "--source", s(&cloud), "--target", s(&other), "--iters", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout_json(&out)["converged"], Value::Bool(false));
}

fn without_runtime(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("runtime_ms");
    v
}

#[test]
fn spiral_without_noise_and_determinism() {
    let out = jgw(&["bench-spiral", "--n-spiral", "30", "--n-noise", "0"]);
    assert!(out.status.code() == Some(0) || out.status.code() == Some(2));
    assert_eq!(stdout_json(&out)["noise_mass_fraction"].as_f64(), Some(0.0));

    let args = ["bench-spiral", "--n-spiral", "30", "--n-noise", "15", "--seed", "3"];
    let (a, b) = (jgw(&args), jgw(&args));
    assert_eq!(without_runtime(stdout_json(&a)), without_runtime(stdout_json(&b)));
}

#[test]
fn clusters_bench_reports_mass_matrix() {
    let out = jgw(&["bench-clusters", "--n-per-letter", "10", "--epsilon", "5e-3"]);
    let json = stdout_json(&out);
    let cm = json["cluster_mass_matrix"].as_array().unwrap();
    assert_eq!(cm.len(), 3);
    let total: f64 = cm.iter().flat_map(|r| r.as_array().unwrap()).map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-6);
}

#[test]
fn converge_emits_one_row_per_n() {
    let args = ["converge", "--n-list", "6", "--seeds", "1"];
    let out = jgw(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,median_objective");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("6,"));
    assert_eq!(String::from_utf8(jgw(&args).stdout).unwrap(), text);
}

#[test]
fn align_identity_scenario() {
    let dir = TempDir::new().unwrap();
    let cloud = write(&dir, "cloud.csv", "x,y,cluster\n0,0,a\n1,0,a\n0,2,a\n5,5,b\n7,5,b\n5,6,b\n6,8,b\n");
    let mut plan = String::from("source_index,target_index,mass\n");
    for i in 0..7 {
        plan.push_str(&format!("{i},{i},{}\n", [1.0 / 6.0, 1.0 / 8.0][usize::from(i >= 3)]));
    }
    let coupling = write(&dir, "mu.csv", &plan);
    let truth = write(
        &dir,
        "truth.json",
        r#"[{"rotation":[1,0,0,1],"translation":[0,0],"cluster":"a"},{"rotation":[1,0,0,1],"translation":[0,0],"cluster":"b"}]"#,
    );
    let out_path = dir.path().join("transforms.json");
    let out = jgw(&[
        "align", "--source", s(&cloud), "--target", s(&cloud), "--coupling", s(&coupling),
        "--out", s(&out_path), "--truth", s(&truth),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let records = stdout_json(&out);
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 2);
    for r in records {
        assert!(r["rotational_error_deg"].as_f64().unwrap() < 1e-6);
    }
    assert!(out_path.exists());
}

#[test]
fn plot_draws_one_edge_per_source_point() {
    let dir = TempDir::new().unwrap();
    let cloud = write(&dir, "cloud.csv", CLOUD);
    let mut plan = String::from("source_index,target_index,mass\n");
    for i in 0..6 {
        plan.push_str(&format!("{i},{i},{}\n", 1.0 / 6.0));
    }
    let coupling = write(&dir, "mu.csv", &plan);
    let svg = dir.path().join("plot.svg");
    let out = jgw(&[
        "plot", "--source", s(&cloud), "--target", s(&cloud), "--coupling", s(&coupling),
        "--out", s(&svg), "--top-k", "1",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<line").count(), 6);
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let cloud = write(&dir, "cloud.csv", CLOUD);
    let out = Command::new(env!("CARGO_BIN_EXE_jgw"))
        .args(["solve", "--source", s(&cloud), "--target", s(&cloud)])
        .env("JGW_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("threads"));
}

//! End-to-end tests of the command-line interface, run against the built
//! binary.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn feemarket(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feemarket"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("feemarket-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn simulate_writes_trace_summary_and_manifest() {
    let dir = temp_dir("simulate");
    let out = feemarket(&[
        "simulate",
        "--scenario",
        "excess-uniform",
        "--seed",
        "1",
        "--steps",
        "300",
        "-o",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));

    let trace = fs::read_to_string(dir.join("excess-uniform.trace.csv")).unwrap();
    assert!(trace.starts_with("t,n,q,sold,welfare_achieved,welfare_opt,revenue,utilization\n"));
    assert_eq!(trace.lines().count(), 301);

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("excess-uniform.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["seed"], 1);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["name"], "excess-uniform");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn simulate_is_reproducible_from_the_manifest_seed() {
    let dir_a = temp_dir("repro-a");
    let dir_b = temp_dir("repro-b");
    for dir in [&dir_a, &dir_b] {
        let out = feemarket(&[
            "simulate",
            "--scenario",
            "excess-exponential",
            "--seed",
            "7",
            "--steps",
            "250",
            "-o",
            dir.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = fs::read(dir_a.join("excess-exponential.trace.csv")).unwrap();
    let b = fs::read(dir_b.join("excess-exponential.trace.csv")).unwrap();
    assert_eq!(a, b, "same config and seed must give byte-identical traces");
    fs::remove_dir_all(&dir_a).ok();
    fs::remove_dir_all(&dir_b).ok();
}

#[test]
fn config_file_round_trips_and_fills_defaults() {
    let dir = temp_dir("config");
    let path = dir.join("scenario.json");
    fs::write(
        &path,
        r#"{
            "name": "mini",
            "mechanism": {"kind": "twdpp"},
            "demand": {"kind": "constant", "n": 20},
            "values": {"kind": "uniform", "lo": 0.0, "hi": 100.0},
            "m": 10,
            "horizon": 120
        }"#,
    )
    .unwrap();
    let out = feemarket(&["simulate", "--config", path.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    // Defaults filled: alpha 1/16, delta 1, seed 1.
    assert_eq!(manifest["config"]["alpha"], 0.0625);
    assert_eq!(manifest["config"]["delta"], 1.0);
    assert_eq!(manifest["config"]["seed"], 1);
    assert_eq!(manifest["config"]["horizon"], 120);
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_config_exits_3_listing_all_violations() {
    let dir = temp_dir("invalid");
    let path = dir.join("bad.json");
    fs::write(
        &path,
        r#"{
            "name": "bad",
            "mechanism": {"kind": "twdpp"},
            "demand": {"kind": "constant", "n": 20},
            "values": {"kind": "uniform", "lo": 0.0, "hi": 100.0},
            "alpha": 1.5,
            "q0": -3.0
        }"#,
    )
    .unwrap();
    let out = feemarket(&["simulate", "--config", path.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.contains("alpha"), "{err}");
    assert!(err.contains("q0"), "{err}");
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_config_key_is_rejected_by_name() {
    let dir = temp_dir("unknown-key");
    let path = dir.join("key.json");
    fs::write(
        &path,
        r#"{
            "name": "k",
            "mechanism": {"kind": "twdpp"},
            "demand": {"kind": "constant", "n": 20},
            "values": {"kind": "uniform", "lo": 0.0, "hi": 100.0},
            "horizont": 10
        }"#,
    )
    .unwrap();
    let out = feemarket(&["simulate", "--config", path.to_str().unwrap(), "-o", dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("horizont"), "{}", stderr(&out));
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = feemarket(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_scenario_name_exits_3() {
    let out = feemarket(&["simulate", "--scenario", "nope", "-o", "/tmp"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("nope"));
}

#[test]
fn fixedpoint_builtin_f1_reports_the_root() {
    let out = feemarket(&["fixedpoint", "--builtin", "f1", "--alpha", "0.4", "--x0", "0.1"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let x_star: f64 = text
        .lines()
        .find(|l| l.starts_with("x_star"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!((x_star - 3.0).abs() < 1e-4, "{text}");
    assert!(text.contains("converged   true"));
}

#[test]
fn fixedpoint_writes_trajectory_csv() {
    let dir = temp_dir("fp");
    let out = feemarket(&[
        "fixedpoint",
        "--builtin",
        "f2",
        "--alpha",
        "0.4",
        "--x0",
        "4.0",
        "-o",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    assert!(csv.starts_with("iteration,x\n0,4.00000000\n"), "{csv}");
    assert!(dir.join("manifest.json").exists());
    fs::remove_dir_all(&dir).ok();
}

#[test]
fn check_ic_second_price_prints_a_counterexample() {
    let out = feemarket(&["check-ic", "--mechanism", "second-price", "--trials", "60"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("dsic_holds   false"), "{text}");
    assert!(text.contains("dsic counterexample"), "{text}");
    assert!(text.contains("best_block"), "{text}");
}

#[test]
fn check_ic_posted_rm_holds() {
    let out = feemarket(&["check-ic", "--mechanism", "posted-rm", "--trials", "60"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("ic_holds     true"), "{text}");
    assert!(text.contains("dsic_holds   true"), "{text}");
}

#[test]
fn list_scenarios_names_all_builtins() {
    let out = feemarket(&["list-scenarios"]);
    assert!(out.status.success());
    let text = stdout(&out);
    for name in [
        "excess-uniform",
        "excess-exponential",
        "excess-pareto",
        "under-demand",
        "shock",
        "pointmass-instability",
        "pointmass-undersupply",
    ] {
        assert!(text.contains(name), "missing {name}: {text}");
    }
}

#[test]
fn curves_emits_grid_csv() {
    let dir = temp_dir("curves");
    let out = feemarket(&[
        "curves",
        "--scenario",
        "excess-uniform",
        "--grid",
        "8",
        "--samples",
        "400",
        "-o",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = fs::read_to_string(dir.join("curves.csv")).unwrap();
    assert!(csv.starts_with("q,demand_mean,demand_se,revenue_mean,revenue_se,kernel_ttw_mean,kernel_ttw_se\n"));
    assert_eq!(csv.lines().count(), 9);
    fs::remove_dir_all(&dir).ok();
}

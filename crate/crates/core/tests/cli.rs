use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn drrp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drrp")).args(args).current_dir(dir).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn bad_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&drrp(&["frobnicate"], dir.path())), 1);
    assert_eq!(code(&drrp(&["run", "missing.json"], dir.path())), 1);
    fs::write(dir.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&drrp(&["run", "bad.json"], dir.path())), 1);
    assert_eq!(code(&drrp(&["generate", "--stations", "5"], dir.path())), 1);
    assert_eq!(code(&drrp(&["--help"], dir.path())), 0);
}

#[test]
fn generate_run_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let grid = configs().join("grid.toml");
    let out = drrp(&["generate", "--config", grid.to_str().unwrap(), "--stations", "4", "--seed", "3", "--out-dir", "inst"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let inst = fs::read_dir(p.join("inst")).unwrap().next().unwrap().unwrap().path();
    let out = drrp(&["run", inst.to_str().unwrap(), "--method", "M2-I", "--iters", "5", "--eval-scenarios", "5", "--out-dir", "run"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["plan_routes.csv", "plan_actions.csv", "iterations.csv", "theta.csv", "manifest.json"] {
        assert!(p.join("run").join(f).exists(), "{f} missing");
    }
    let out = drrp(
        &["evaluate", inst.to_str().unwrap(), "run/plan_actions.csv", "--routes", "run/plan_routes.csv", "--eval-scenarios", "5", "--seed", "2"],
        p,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rate = v["rate_mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&rate));
    assert_eq!(code(&drrp(&["run", inst.to_str().unwrap(), "--method", "M9"], p)), 1);
}

#[test]
fn suite_writes_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("smoke.toml");
    let out = drrp(&["suite", "--config", cfg.to_str().unwrap(), "--out-dir", "suite"], dir.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let runs = fs::read_to_string(dir.path().join("suite/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 3);
    assert!(dir.path().join("suite/service_rate_deltas.csv").exists());
    fs::write(dir.path().join("bad.toml"), "[grid]\nsizes = [5]\n").unwrap();
    assert_eq!(code(&drrp(&["suite", "--config", "bad.toml"], dir.path())), 1);
}

#[test]
fn ingest_bins_trips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    fs::write(p.join("stations.csv"), "station_id,capacity\nA,10\nB,10\n").unwrap();
    fs::write(
        p.join("trips.csv"),
        "start_station,end_station,start_time,duration_seconds\nA,B,2024-01-02 08:10:00,300\nA,B,2024-01-03 08:12:00,320\nB,Q,2024-01-03 08:12:00,320\n",
    )
    .unwrap();
    let out = drrp(&["ingest", "trips.csv", "--stations", "stations.csv", "--day-start", "08:00", "--out-dir", "o"], p);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rates = fs::read_to_string(p.join("o/rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 2, "{rates}");
}

use std::path::PathBuf;
use std::process::{Command, Output};

fn landscape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_landscape"))
        .args(args)
        .env("LANDSCAPE_WORKERS", "2")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("landscape-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn full_run_on_f1_exits_zero() {
    let dir = scratch("full");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "fixture = f1\ntransforms = identity\nsamples = 1000\nrc_samples = 500\n").unwrap();
    let out = landscape(&["full", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["passed"], true);
    assert_eq!(json["gd"]["params"]["lambda"], 1.0);
    assert!(json.get("wall_time_ms").is_none());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn timing_flag_adds_wall_time() {
    let out = landscape(&["minimize", "--fixture", "f1", "--timing"]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["wall_time_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn config_errors_exit_two_with_field_name() {
    let out = landscape(&["minimize", "--architecture", "linear", "--r", "2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("`r`"), "{err}");
    let out = landscape(&["check-gd", "--architecture", "tree"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_then_minimize_from_file() {
    let dir = scratch("gen");
    let fix = dir.join("pair.txt");
    let out = landscape(&["gen", "--d", "3", "--m", "3", "--seed", "4", "--output", fix.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&fix).unwrap();
    assert!(text.starts_with("3 3\n"));
    let out = landscape(&["minimize", "--fixture", fix.to_str().unwrap(), "--architecture", "nonlinear"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["certificate"]["holds"], true);
    assert_eq!(json["data"]["d"], 3);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn csv_output_to_file() {
    let dir = scratch("csv");
    let path = dir.join("gd.csv");
    let out = landscape(&[
        "check-gd", "--fixture", "f1", "--samples", "300", "--format", "csv", "--output", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&path).unwrap();
    assert_eq!(csv.lines().filter(|l| l.starts_with("gd,")).count(), 300);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn identical_invocations_are_byte_identical() {
    let args = ["full", "--architecture", "nonlinear", "--d", "2", "--seed", "11", "--samples", "800"];
    let a = landscape(&args);
    let b = landscape(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn missing_fixture_file_exits_two() {
    let out = landscape(&["minimize", "--fixture", "/nonexistent/pair.txt"]);
    assert_eq!(out.status.code(), Some(2));
}

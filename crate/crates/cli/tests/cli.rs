use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn aks_flow(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aks-flow"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn simulate_writes_csv_and_metadata() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(
        &["simulate", "--preset", "toda", "--n", "3", "--t-end", "5", "--samples", "500", "--out", "run"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("# aks-flow csv v1"));
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 1 + 2 * 9 + 2 + 3);
    assert_eq!(lines.clone().count(), 500);
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 5.0);

    let meta: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("run/run.json")).unwrap()).unwrap();
    assert_eq!(meta["samples"], 500);
    assert!(meta["drift"]["spectral_drift"].as_f64().unwrap() <= 1e-8);
    assert!(meta["drift"]["hamiltonian_drift"].as_f64().unwrap() <= 1e-8);
    assert_eq!(meta["rng_seed"], stdout_json(&out)["rng_seed"]);
}

#[test]
fn simulate_at_zero_time_emits_the_seed_orbit_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(&["simulate", "--preset", "toda", "--t-end", "0", "--out", "z"], dir.path());
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.path().join("z/trajectory.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    let v: Vec<f64> = rows[0].split(',').map(|x| x.parse().unwrap()).collect();
    // μ = 0 and ν is the Jacobi matrix.
    assert!(v[1..10].iter().all(|x| x.abs() <= 1e-12));
    let jacobi = [0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0];
    for (a, b) in v[10..19].iter().zip(jacobi) {
        assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
    }
    assert!((v[19] - 2.0).abs() <= 1e-12);
}

#[test]
fn malformed_config_fails_without_partial_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\n  \"preset\": \"toda\",\n  \"t_end\": oops\n}").unwrap();
    let out = aks_flow(&["simulate", "--config", "bad.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert!(!dir.path().join("o").exists());

    std::fs::write(dir.path().join("unknown.json"), "{\"stepsize\": 0.1}").unwrap();
    let out = aks_flow(&["simulate", "--config", "unknown.json", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stepsize"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn off_level_set_start_is_a_solver_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(
        &["simulate", "--preset", "toda", "--n", "2", "--sigma0", "[[0,1],[0,0]]", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("cfg.json"),
        r#"{"preset": "toda", "n": 2, "t_end": 2.0, "samples": 7, "nu": [[0.3, 1.2], [1.2, -0.3]]}"#,
    )
    .unwrap();
    let out = aks_flow(&["simulate", "--config", "cfg.json", "--samples", "4", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta = stdout_json(&out);
    assert_eq!(meta["samples"], 4);
    assert_eq!(meta["t_end"], 2.0);
    assert_eq!(meta["system"]["n"], 2);
    assert_eq!(meta["system"]["nu"][0][1], 1.2);
}

#[test]
fn matrix_flags_accept_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("nu.json"), "[[0.5, 0.2], [0.2, -0.5]]").unwrap();
    let out = aks_flow(&["compare", "--preset", "toda", "--n", "2", "--nu", "@nu.json"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["system"]["nu"][1][0], 0.2);
}

#[test]
fn compare_reports_small_deviation_and_fourth_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(&["compare", "--preset", "toda", "--n", "3", "--out", "cmp.json"], dir.path());
    assert!(out.status.success());
    let report = &stdout_json(&out)["report"];
    assert!(report["sup_deviation"].as_f64().unwrap() <= 1e-6);
    let order = report["order_estimate"].as_f64().unwrap();
    assert!((3.7..=4.3).contains(&order), "order {order}");
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("cmp.json")).unwrap()).unwrap();
    assert_eq!(saved["report"]["sup_deviation"], report["sup_deviation"]);
}

#[test]
fn compare_at_zero_time_has_zero_deviation() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(&["compare", "--preset", "toda", "--t-end", "0"], dir.path());
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["report"]["sup_deviation"], 0.0);
}

#[test]
fn check_list_enumerates_without_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(&["check", "--list"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["lie.structure", "geometry.pullback", "gnh.cascade", "reduced.isospectral"] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn check_passes_on_toda_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = aks_flow(&["check", "--preset", "toda", "--n", "3", "--rng-seed", "11"], dir.path());
    let b = aks_flow(&["check", "--preset", "toda", "--n", "3", "--rng-seed", "11"], dir.path());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let report = stdout_json(&a);
    let checks = report["battery"]["checks"].as_array().unwrap();
    assert!(checks.iter().all(|c| c["status"] != "fail"));
    assert!(checks.iter().any(|c| c["status"] == "skipped" && c["reason"].as_str().unwrap().contains("--verify-fd")));
}

#[test]
fn break_sign_fails_the_pullback_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(&["check", "--preset", "gl-lu", "--n", "2", "--break-sign"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let report = stdout_json(&out);
    let pullback = report["battery"]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "geometry.pullback")
        .unwrap()
        .clone();
    assert_eq!(pullback["status"], "fail");
    assert!(pullback["max_residual"].as_f64().unwrap() >= 1e-2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("geometry.pullback"));
}

#[test]
fn verify_fd_runs_the_finite_difference_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = aks_flow(&["check", "--preset", "gl-lu", "--n", "2", "--verify-fd", "--out", "check.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("check.json")).unwrap()).unwrap();
    let checks = saved["battery"]["checks"].as_array().unwrap();
    for name in ["geometry.m_derivative_fd", "geometry.closedness", "gnh.finite_differences"] {
        let c = checks.iter().find(|c| c["name"] == name).unwrap();
        assert_eq!(c["status"], "pass", "{name}");
    }
}

#[test]
fn invalid_arguments_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["simulate", "--n", "1"][..],
        &["compare", "--h", "-0.1"][..],
        &["simulate", "--nu", "[[1,2]]"][..],
        &["check", "--mu", "not json"][..],
    ] {
        let out = aks_flow(args, dir.path());
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

use std::path::Path;
use std::process::{Command, Output};

fn cconvex(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cconvex"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.json");
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn redacted(report: &str) -> String {
    let mut v: serde_json::Value = serde_json::from_str(report).unwrap();
    v["started_unix"] = 0.into();
    for (_, t) in v["timings"].as_object_mut().unwrap().iter_mut() {
        *t = 0.0.into();
    }
    serde_json::to_string_pretty(&v).unwrap()
}

#[test]
fn certify_sphere_exits_zero_and_prints_only_the_report_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let o = cconvex(&["certify", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.trim(), out.join("report.json").to_str().unwrap());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let min = report["stages"]["certify"]["result"]["min_eigenvalue"]
        .as_f64()
        .unwrap();
    assert!((min - 1.0).abs() < 1e-9);
}

#[test]
fn trace_on_degenerate_model_exits_two_with_rank_drop() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"hypersurface": {"kind": "quartic_model", "n": 2}}"#,
    );
    let out = dir.path().join("o");
    let o = cconvex(&["trace", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("RankDrop"));
}

#[test]
fn saddle_certification_fails_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"hypersurface": {"kind": "saddle_model", "n": 2}}"#,
    );
    let out = dir.path().join("o");
    let o = cconvex(&["certify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invalid_config_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"budgets": {"probe_budget": -1}}"#);
    let o = cconvex(&[
        "run",
        "--config",
        &cfg,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("ConfigInvalid"));
    assert!(o.stdout.is_empty());
}

#[test]
fn printed_defaults_round_trip() {
    let o = cconvex(&["--print-defaults"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let parsed = cconvex::ScenarioConfig::from_str(&text).unwrap();
    assert_eq!(parsed, cconvex::ScenarioConfig::default());
}

#[test]
fn oracle_writes_sphere_reference_values() {
    let dir = tempfile::tempdir().unwrap();
    let o = cconvex(&["oracle", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("oracle.json")).unwrap())
            .unwrap();
    assert_eq!(v["morse_index"], 2);
    assert!((v["critical_length"].as_f64().unwrap() - std::f64::consts::TAU).abs() < 1e-15);
}

#[test]
fn run_is_deterministic_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let mut reports = Vec::new();
    for threads in ["1", "8"] {
        let o = cconvex(&["run", "--seed", "11", "--threads", threads, "--out", out]);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&o.stderr)
        );
        reports.push(std::fs::read_to_string(Path::new(out).join("report.json")).unwrap());
    }
    assert_eq!(redacted(&reports[0]), redacted(&reports[1]));
}

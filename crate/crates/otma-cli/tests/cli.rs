//! End-to-end checks of the `otma` binary: exit codes, output files, and
//! config-file precedence.

use std::path::Path;
use std::process::Command;

fn otma() -> Command {
    Command::new(env!("CARGO_BIN_EXE_otma"))
}

fn read_json(path: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(path).expect("output file exists");
    serde_json::from_str(&text).expect("valid json")
}

#[test]
fn run_writes_all_fields_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let output = otma()
        .args(["run", "--experiment", "gallery:square", "--nx", "17", "--ny", "16"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    for name in ["u.csv", "map.csv", "report.json", "error.csv"] {
        assert!(out.join(name).is_file(), "missing {name}");
    }
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["converged"], serde_json::Value::Bool(true));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("map error"), "stdout: {stdout}");
}

#[test]
fn unknown_experiment_fails() {
    let dir = tempfile::tempdir().unwrap();
    let output = otma()
        .args(["run", "--experiment", "nonsense"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("unknown experiment"), "stderr: {stderr}");
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"experiment": "gallery:square", "nx": 13, "ny": 12}"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = otma()
        .args(["run", "--experiment", "ellipse", "--nx", "64", "--ny", "64"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(
        stdout.contains("gallery:square") && stdout.contains("13x13"),
        "config should win over flags; stdout: {stdout}"
    );
}

#[test]
fn custom_target_drops_reference_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{
            "experiment": "gallery:square",
            "nx": 13,
            "ny": 12,
            "target": {"kind": "circle", "center": [0.0, 0.0], "radius": 0.8}
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let output = otma()
        .args(["run"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    assert!(out.join("map.csv").is_file());
    assert!(
        !out.join("error.csv").exists(),
        "custom targets have no reference map to compare against"
    );
}

#[test]
fn validate_reports_discrepancy() {
    let dir = tempfile::tempdir().unwrap();
    let output = otma()
        .args([
            "validate",
            "--experiment",
            "gallery:square",
            "--nx",
            "17",
            "--ny",
            "16",
            "--m",
            "36",
        ])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("assignment discrepancy"), "stdout: {stdout}");
}

#[test]
fn table_writes_csv_grid() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("tab");
    let output = otma()
        .args(["table", "--experiment", "identity", "--nx", "9,13", "--ny", "8"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("nx,8"));
    assert_eq!(lines.clone().count(), 2, "one row per nx; got: {text}");
    for line in lines {
        assert!(line.starts_with("9,") || line.starts_with("13,"), "{line}");
    }
}

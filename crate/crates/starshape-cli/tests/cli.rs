//! End-to-end tests of the binary: flag handling, exit codes, artifact
//! emission. Fixtures run at reduced sample densities on coarse grids so
//! the whole file stays in test-suite time.

use std::path::Path;
use std::process::{Command, Output};

fn starshape(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_starshape"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

/// Flat chart, in-window perturbation sizes, coarse grid, light sampling.
const QUICK: &str = r#"{
    "n": 2, "d": 2, "eps": [4e-3, 1e-3],
    "manifold": {"kind": "euclidean"},
    "nonlinearity": {"kind": "constant-one"},
    "seed": 7, "boundary_samples": 600, "kernel_centers": 12,
    "grid_spacing": 0.1
}"#;

#[test]
fn malformed_config_exits_two_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n": 2, "d": 2, "eps": [1e-3, 1e-2],
            "manifold": {"kind": "euclidean"},
            "nonlinearity": {"kind": "constant-one"}}"#,
    );
    let out = starshape(&["--config", &cfg, "domain"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("strictly decreasing"), "{stderr}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"n": 2, "d": 2, "eps": [1e-3], "mystery": true,
            "manifold": {"kind": "euclidean"},
            "nonlinearity": {"kind": "constant-one"}}"#,
    );
    let out = starshape(&["--config", &cfg, "profile"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("unknown field"), "{stderr}");
}

#[test]
fn unknown_format_is_a_usage_error() {
    let out = starshape(&["--format", "pdf", "theorem1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn profile_reports_the_closed_form_identities() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out = starshape(&["--config", &cfg, "--seed", "123", "profile"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["n"], 2);
    assert_eq!(doc["separation_points"], serde_json::json!([1.0, 2.0]));
    assert_eq!(doc["leading_mixed_coefficient"], 6.0);
    assert_eq!(doc["harmonic"], true);
    assert_eq!(doc["passed"], true);
}

#[test]
fn domain_walks_every_scale_and_emits_figures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out_dir = dir.path().join("artifacts");
    let out = starshape(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "svg",
        "domain",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["passed"], true);
    let scales = doc["scales"].as_array().unwrap();
    assert_eq!(scales.len(), 2);
    for scale in scales {
        assert_eq!(scale["admissibility"]["admissible"], true);
        assert_eq!(scale["superlevel"]["count"], 2);
        assert_eq!(scale["critical_points"].as_array().unwrap().len(), 3);
    }
    assert!(out_dir.join("domain_0.svg").exists());
    assert!(out_dir.join("domain_1.svg").exists());
    assert!(out_dir.join("domain.json").exists());
}

#[test]
fn theorem1_passes_on_the_quick_fixture_and_emits_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out_dir = dir.path().join("artifacts");
    let out = starshape(&[
        "--config",
        &cfg,
        "--out",
        out_dir.to_str().unwrap(),
        "--format",
        "json",
        "--format",
        "csv",
        "theorem1",
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("clause a: PASS"), "{stdout}");
    assert!(stdout.contains("clause b: PASS"), "{stdout}");
    assert!(stdout.contains("clause c: PASS"), "{stdout}");
    assert!(stdout.contains("all clauses pass"), "{stdout}");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["all_passed"], true);
    assert_eq!(report["config"]["seed"], 7);

    let csv = std::fs::read_to_string(out_dir.join("critical_points.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 1 + 2 * 3, "comment, header, three points per scale");
}

#[test]
fn failing_sweep_exits_one_with_fail_verdicts() {
    // The first perturbation size is outside the bounded regime, so its
    // geometric stages fail and the aggregate verdicts must report it.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{
            "n": 2, "d": 2, "eps": [1e-2, 1e-3],
            "manifold": {"kind": "euclidean"},
            "nonlinearity": {"kind": "constant-one"},
            "seed": 7, "boundary_samples": 600, "kernel_centers": 12,
            "grid_spacing": 0.1
        }"#,
    );
    let out = starshape(&["--config", &cfg, "theorem1"]);
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), QUICK);
    let out_dir = dir.path().join("artifacts");
    let out = starshape(&[
        "--config",
        &cfg,
        "--seed",
        "99",
        "--out",
        out_dir.to_str().unwrap(),
        "theorem1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert_eq!(report["config"]["seed"], 99);
}

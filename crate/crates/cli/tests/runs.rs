//! End-to-end runs of small scenarios through the library entry points and
//! the binary.

use std::path::Path;
use std::process::Command;

use levy_parametrix_cli::compare::compare_runs;
use levy_parametrix_cli::config::{ScenarioConfig, Stage};
use levy_parametrix_cli::runner::{run, Manifest};
use serde_json::{json, Value};

fn cauchy_model(b3: f64, amplitude: Option<f64>) -> Value {
    let mut terms = vec![json!({"state": {"kind": "constant", "value": 1.0}, "weight": "unit"})];
    if let Some(a) = amplitude {
        terms.push(json!({"state": {"kind": "saturating", "amplitude": a, "exponent": 1.0}, "weight": "unit"}));
    }
    json!({
        "dimension": 1,
        "density": {"kind": "power_law", "alpha": 1.0, "scale": 1.0},
        "modulation": {"terms": terms},
        "drift": {"kind": "zero"},
        "constants": {"beta": 2.0, "lambda": 0.5, "b1": 1.0, "b2": 1.0 + amplitude.unwrap_or(0.0), "b3": b3},
        "symmetric": true
    })
}

fn small_config() -> Value {
    json!({
        "name": "small-cauchy",
        "model": cauchy_model(0.0, None),
        "grid": {"dimension": 1, "half_width": 16.0, "nodes": 512},
        "solver": {"y_stride": 32},
        "ladder": [0.25, 0.49, 0.5, 0.51],
        "stages": ["validate", "profile", "solve", "oracle"],
        "oracle": {"times": [0.5], "x0": [[0.0]], "n_paths": 4000, "epsilon": 0.05},
        "seed": 11,
        "tolerances": {"ks": 0.03}
    })
}

fn load(value: &Value) -> ScenarioConfig {
    ScenarioConfig::from_json(&value.to_string(), None).unwrap()
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn small_scenario_passes_and_records_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let outcome = run(&load(&small_config()), &[], dir.path()).unwrap();
    let failing: Vec<_> = outcome.summary.checks.iter().filter(|c| !c.pass).collect();
    assert!(failing.is_empty(), "{failing:?}");
    assert!(outcome.summary.checks.iter().any(|c| c.id == "solve.closed_form"));
    let m = manifest(dir.path());
    let files: Vec<_> = m.artifacts.iter().map(|a| a.file.as_str()).collect();
    for expected in ["p.bin", "p.csv", "summary.json", "validation.json", "profile.csv", "oracle_0.json"] {
        assert!(files.contains(&expected), "{expected} missing from {files:?}");
    }
    assert!(!files.contains(&"timings.json") && !files.contains(&"manifest.json"));
    let timings: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("timings.json")).unwrap()).unwrap();
    assert!(timings["solve"].as_f64().unwrap() >= 0.0);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let config = load(&small_config());
    run(&config, &[], a.path()).unwrap();
    run(&config, &[], b.path()).unwrap();
    assert_eq!(manifest(a.path()), manifest(b.path()));
    let report = compare_runs(a.path(), b.path()).unwrap();
    assert!(report.equivalent());
    assert_eq!(report.kernel.unwrap().sup_diff, 0.0);
}

#[test]
fn changed_seed_changes_only_seeded_artifacts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut config = load(&small_config());
    run(&config, &[], a.path()).unwrap();
    config.seed += 1;
    run(&config, &[], b.path()).unwrap();
    let report = compare_runs(a.path(), b.path()).unwrap();
    assert!(!report.config_hash_equal && report.model_hash_equal);
    let differing: Vec<_> = report.files.iter().filter(|f| !f.identical).map(|f| f.file.as_str()).collect();
    assert!(differing.contains(&"ensemble_0.csv"));
    assert!(!differing.contains(&"p.bin"));
}

#[test]
fn later_stage_reuses_cached_kernel() {
    let dir = tempfile::tempdir().unwrap();
    let config = load(&small_config());
    run(&config, &[Stage::Solve], dir.path()).unwrap();
    let outcome = run(&config, &[Stage::Oracle], dir.path()).unwrap();
    assert_eq!(outcome.summary.stages, vec![Stage::Oracle]);
    let mut other = small_config();
    other["model"] = cauchy_model(0.5, Some(0.3));
    let err = run(&load(&other), &[Stage::Oracle], dir.path()).unwrap_err();
    assert_eq!(err.code(), "CONFIG_INVALID");
}

#[test]
fn invalid_configurations_are_rejected() {
    let mut unknown = small_config();
    unknown["unexpected"] = json!(1);
    assert_eq!(ScenarioConfig::from_json(&unknown.to_string(), None).unwrap_err().code(), "CONFIG_INVALID");
    let mut no_oracle = small_config();
    no_oracle.as_object_mut().unwrap().remove("oracle");
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&load(&no_oracle), &[], dir.path()).unwrap_err().code(), "CONFIG_INVALID");
    let mut bad_model = small_config();
    bad_model["model"]["density"]["alpha"] = json!(2.5);
    assert_eq!(run(&load(&bad_model), &[Stage::Validate], dir.path()).unwrap_err().code(), "CONFIG_INVALID");
}

#[test]
fn model_file_resolves_relative_to_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.json"), cauchy_model(0.0, None).to_string()).unwrap();
    let mut config = small_config();
    config.as_object_mut().unwrap().remove("model");
    config["model_file"] = json!("model.json");
    let path = dir.path().join("scenario.json");
    std::fs::write(&path, config.to_string()).unwrap();
    let loaded = ScenarioConfig::load(path.to_str().unwrap()).unwrap();
    assert_eq!(loaded.build_model().unwrap().hash(), load(&small_config()).build_model().unwrap().hash());
}

#[test]
fn different_widths_do_not_compare() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&load(&small_config()), &[Stage::Solve], a.path()).unwrap();
    let mut wide = small_config();
    wide["grid"] = json!({"dimension": 1, "half_width": 32.0, "nodes": 1024});
    wide["solver"]["y_stride"] = json!(64);
    run(&load(&wide), &[Stage::Solve], b.path()).unwrap();
    assert_eq!(compare_runs(a.path(), b.path()).unwrap_err().code(), "GRID_MISMATCH");
}

#[test]
fn refined_grid_agrees_with_coarse_grid() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run(&load(&small_config()), &[Stage::Solve], a.path()).unwrap();
    let mut fine = small_config();
    fine["grid"]["nodes"] = json!(1024);
    fine["solver"]["y_stride"] = json!(64);
    run(&load(&fine), &[Stage::Solve], b.path()).unwrap();
    let diff = compare_runs(a.path(), b.path()).unwrap().kernel.unwrap();
    assert_eq!(diff.common_times.len(), 4);
    assert!(!diff.flagged, "{diff:?}");
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_levy-parametrix"))
}

#[test]
fn exit_codes_follow_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.json");
    std::fs::write(&path, small_config().to_string()).unwrap();
    let out = dir.path().join("run");
    let status = |args: &[&str]| binary().args(args).output().unwrap();

    let ok = status(&["solve", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let strict = status(&[
        "solve",
        "--config",
        path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--tol-override",
        "residual=1e-15",
    ]);
    assert_eq!(strict.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&strict.stdout).contains("FAIL solve.residual"));
    let missing = status(&["validate", "--config", "no-such-scenario"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("CONFIG_INVALID"));
    let bad_stage = status(&["run", "--config", path.to_str().unwrap(), "--stages", "solve,unknown"]);
    assert_eq!(bad_stage.status.code(), Some(2));
    let same = status(&["compare", out.to_str().unwrap(), out.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(same.status.code(), Some(0));
    assert!(dir.path().join("compare.json").exists());
}

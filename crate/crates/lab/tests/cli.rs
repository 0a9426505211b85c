use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/smoke.json")
}

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turnpike-lab")).args(args).output().expect("binary runs")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_field_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&smoke_config());
    cfg.as_object_mut().unwrap().remove("y_d");
    let path = dir.path().join("broken.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = lab(&["--config", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet", "solve"]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "validation");
    assert!(err["error"]["message"].as_str().unwrap().contains("y_d"));
}

#[test]
fn invalid_value_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = read_json(&smoke_config());
    cfg["time"]["n_steps"] = 1.into();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = lab(&["--config", path.to_str().unwrap(), "--quiet", "steady"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("time.n_steps"));
}

#[test]
fn turnpike_writes_report_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["--config", smoke_config().to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--quiet", "turnpike"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("turnpike");
    let report = read_json(&run.join("report.json"));
    assert_eq!(report["envelope_ok"], true);
    let manifest = read_json(&run.join("manifest.json"));
    assert_eq!(manifest["command"], "turnpike");
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["wall_seconds"].as_f64().unwrap() >= 0.0);
    let files: Vec<&str> = manifest["artifact_files"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(files, ["deviation.csv", "deviation.svg", "report.json"]);
    for f in files {
        assert!(run.join(f).exists());
    }
    let csv = std::fs::read_to_string(run.join("deviation.csv")).unwrap();
    assert!(csv.starts_with("epsilon,t,d,bound\n"));
    assert_eq!(csv.lines().count(), 1 + 61);
}

#[test]
fn sweep_is_deterministic_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = smoke_config();
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let out = lab(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--jobs", jobs, "--quiet", "sweep"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["deviation.csv", "state_norms.csv", "gaps.csv", "sweep.json"] {
        let x = std::fs::read(a.path().join("sweep").join(f)).unwrap();
        let y = std::fs::read(b.path().join("sweep").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn rerun_from_manifest_reproduces_outputs() {
    let first = tempfile::tempdir().unwrap();
    let second = tempfile::tempdir().unwrap();
    let out = lab(&["--config", smoke_config().to_str().unwrap(), "--out", first.path().to_str().unwrap(), "--quiet", "solve"]);
    assert!(out.status.success());
    let manifest = first.path().join("solve/manifest.json");
    let out = lab(&["--config", manifest.to_str().unwrap(), "--out", second.path().to_str().unwrap(), "--quiet", "solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let m1 = read_json(&manifest);
    let m2 = read_json(&second.path().join("solve/manifest.json"));
    assert_eq!(m1["config_sha256"], m2["config_sha256"]);
    for f in ["solution_y.csv", "solution_f.csv", "solution_psi.csv", "summary.json"] {
        let x = std::fs::read(first.path().join("solve").join(f)).unwrap();
        let y = std::fs::read(second.path().join("solve").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn oracle_fixtures_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = lab(&["--out", dir.path().to_str().unwrap(), "--quiet", "oracle"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let outcomes = read_json(&dir.path().join("oracle/oracle.json"));
    assert!(outcomes.as_array().unwrap().iter().all(|o| o["pass"] == true));
}

#[test]
fn checked_in_config_matches_builtin_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.json");
    let cfg = turnpike_lab::config::ExperimentConfig::load(&path).unwrap();
    let mut builtin = turnpike_lab::config::ExperimentConfig::reference();
    builtin.output_dir = "out/paper".into();
    assert_eq!(cfg, builtin);
}

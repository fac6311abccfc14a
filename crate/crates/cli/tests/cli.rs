//! End-to-end checks of the binary: exit codes, artifacts, determinism.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_aflab")
}

struct TempDir {
    path: PathBuf,
}

impl TempDir {
    fn new(tag: &str) -> Self {
        let path = std::env::temp_dir().join(format!("aflab-cli-{tag}-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&path);
        std::fs::create_dir_all(&path).unwrap();
        TempDir { path }
    }
}

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.path);
    }
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("scenario.json");
    std::fs::write(&path, body).unwrap();
    path
}

const SYM2: &str = r#""bundle": {"m": 2, "r": 1, "n": [1, 1], "p": [2, 2], "Q": [[1, 1]]}"#;

#[test]
fn fixed_points_end_to_end() {
    let dir = TempDir::new("fp");
    let scenario = write_scenario(&dir.path, &format!("{{{SYM2}}}"));
    let out = dir.path.join("out");
    let status = Command::new(bin())
        .args(["fixed-points", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("fixed_points.json")).unwrap())
            .unwrap();
    let points = report["points"].as_array().unwrap();
    let xi = points.iter().find(|p| p["tag"] == "xi").unwrap();
    let coords = xi["point"].as_array().unwrap();
    assert!((coords[0].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-10);
}

#[test]
fn invalid_bundle_exits_2() {
    let dir = TempDir::new("bad");
    let scenario = write_scenario(
        &dir.path,
        r#"{"bundle": {"m": 2, "r": 2, "n": [1, 1], "p": [2, 2], "Q": [[1, 0], [2, 0]]}}"#,
    );
    let status = Command::new(bin())
        .args(["fixed-points", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_scenario_key_exits_2() {
    let dir = TempDir::new("unknown");
    let scenario = write_scenario(&dir.path, &format!("{{{SYM2}, \"mystery\": 1}}"));
    let status = Command::new(bin())
        .args(["flow", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn flow_outputs_are_deterministic() {
    let dir = TempDir::new("det");
    let scenario = write_scenario(
        &dir.path,
        &format!(
            "{{{SYM2}, \"flow\": {{\"clock\": \"tau\", \"span\": [0, 20], \"a0\": 0.1, \"b0\": [1.0, 1.0]}}}}"
        ),
    );
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path.join(format!("out{run}"));
        let status = Command::new(bin())
            .args(["flow", "--scenario"])
            .arg(&scenario)
            .arg("--out")
            .arg(&out)
            .arg("--seed")
            .arg("7")
            .status()
            .unwrap();
        assert!(status.success());
        outputs.push(std::fs::read(out.join("flow.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn verify_single_criterion() {
    let dir = TempDir::new("verify");
    let scenario = write_scenario(&dir.path, r#"{"verify": {"criteria": [1]}}"#);
    let output = Command::new(bin())
        .args(["verify", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path.join("out"))
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("einstein-point"));
    assert!(stdout.contains("PASS"));
}

#[test]
fn shoot_classify_runs() {
    let dir = TempDir::new("classify");
    let scenario = write_scenario(
        &dir.path,
        r#"{"bundle": {"m": 3, "r": 1, "n": [1,1,1], "p": [2,2,2], "Q": [[1,1,1]]},
            "shoot": {"kind": "classify", "y0": [1.1, 0.9, 1.0], "tol": 1e-9}}"#,
    );
    let out = dir.path.join("out");
    let status = Command::new(bin())
        .args(["shoot", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("shoot.json")).unwrap()).unwrap();
    assert!(report["backward_limit"].as_str().unwrap().starts_with("v{"));
}

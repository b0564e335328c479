//! Subprocess tests for the command-line interface: exit codes, outputs, and
//! file side effects.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vantage"))
}

fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn write_mock_config(dir: &Path, script: &str) -> PathBuf {
    let config = dir.join("config.json");
    let script_path = fixtures_dir().join("mock").join(script);
    fs::write(
        &config,
        serde_json::json!({ "mock_script": script_path }).to_string(),
    )
    .unwrap();
    config
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

const QUESTION: &str = "Which box is the tallest?\nOptions:\nA. the red box\nB. the green box\nC. the blue box";

#[test]
fn solve_answers_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mock_config(dir.path(), "solve_accept.json");
    let out_dir = dir.path().join("runs");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--scene")
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--image")
        .arg(fixtures_dir().join("images/boxes.png"))
        .args(["--question", QUESTION, "--subtask", "Height_Higher", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert_eq!(stdout(&output).trim(), "B");
    assert!(out_dir.join("sample/trace.jsonl").exists());
    assert!(out_dir.join("sample/result.json").exists());
}

#[test]
fn solve_missing_manifest_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mock_config(dir.path(), "solve_accept.json");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .args(["--scene", "/nonexistent/scene.json"])
        .arg("--image")
        .arg(fixtures_dir().join("images/boxes.png"))
        .args(["--question", QUESTION, "--out"])
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("scene manifest not found"));
}

#[test]
fn solve_unanswered_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mock_config(dir.path(), "solve_always_reject.json");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--scene")
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--image")
        .arg(fixtures_dir().join("images/boxes.png"))
        .args(["--question", QUESTION, "--out"])
        .arg(dir.path().join("runs"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "{}", stderr(&output));
    assert!(stderr(&output).contains("unanswered"));
}

#[test]
fn solve_no_kb_ablation_uses_sentinel() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mock_config(dir.path(), "solve_accept.json");
    let out_dir = dir.path().join("runs");
    let output = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--scene")
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--image")
        .arg(fixtures_dir().join("images/boxes.png"))
        .args(["--question", QUESTION, "--ablation", "no_kb", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let trace = fs::read_to_string(out_dir.join("sample/trace.jsonl")).unwrap();
    assert!(trace.contains("(no reference knowledge available)"));
}

#[test]
fn render_topdown_has_axes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("map.png");
    let output = bin()
        .args(["render", "--topdown", "--scene"])
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let img = image::open(&out).unwrap().to_rgb8();
    // red X axis at the center row, green Y axis at the center column
    assert_eq!(img.get_pixel(10, 256).0, [255, 0, 0]);
    assert_eq!(img.get_pixel(256, 10).0, [0, 255, 0]);
}

#[test]
fn render_pose_prints_orthonormal_extrinsics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("view.png");
    let output = bin()
        .args(["render", "--yaw", "45", "--pitch", "30", "--r", "3", "--scene"])
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(out.exists());
    let value: serde_json::Value = serde_json::from_str(stdout(&output).trim()).unwrap();
    let axis = |name: &str| -> [f64; 3] {
        let v = &value["extrinsics"][name];
        [
            v["x"].as_f64().unwrap(),
            v["y"].as_f64().unwrap(),
            v["z"].as_f64().unwrap(),
        ]
    };
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let (rx, ry, rz) = (axis("rx"), axis("ry"), axis("rz"));
    for a in [rx, ry, rz] {
        assert!((dot(a, a) - 1.0).abs() < 1e-9);
    }
    assert!(dot(rx, ry).abs() < 1e-9);
    assert!(dot(ry, rz).abs() < 1e-9);
    assert!(dot(rx, rz).abs() < 1e-9);
}

#[test]
fn render_pitch_ninety_clamps_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("view.png");
    let output = bin()
        .args(["render", "--yaw", "0", "--pitch", "90", "--r", "2", "--scene"])
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stderr(&output).contains("clamped"));
    assert!(out.exists());
}

#[test]
fn eval_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mock_config(dir.path(), "eval_baseline.json");
    let out_dir = dir.path().join("eval");
    let output = bin()
        .args(["eval", "--mode", "baseline", "--workers", "2", "--config"])
        .arg(&config)
        .arg("--bench")
        .arg(fixtures_dir().join("bench.jsonl"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("Avg."));
    assert!(stdout(&output).contains("75.0"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["overall"]["correct"], serde_json::json!(9));
    assert!(out_dir.join("report.txt").exists());
}

#[test]
fn kb_list_add_export_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let output = bin().args(["kb", "list"]).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(stdout(&output).lines().count(), 7);
    assert!(stdout(&output).contains("Height_Higher"));

    let kb_file = dir.path().join("kb.json");
    let output = bin()
        .args(["kb", "add", "--task", "reachability", "--strategy"])
        .arg("Use a side view to compare the gap between objects.")
        .arg("--kb")
        .arg(&kb_file)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    let items: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&kb_file).unwrap()).unwrap();
    assert_eq!(items.as_array().unwrap().len(), 8);

    let exported = dir.path().join("exported.json");
    let output = bin()
        .args(["kb", "export", "--kb"])
        .arg(&kb_file)
        .arg("--out")
        .arg(&exported)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(&kb_file).unwrap(),
        fs::read_to_string(&exported).unwrap()
    );
}

#[test]
fn check_detects_tampered_trace() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_mock_config(dir.path(), "solve_accept.json");
    let out_dir = dir.path().join("runs");
    let status = bin()
        .args(["solve", "--config"])
        .arg(&config)
        .arg("--scene")
        .arg(fixtures_dir().join("scenes/boxes.json"))
        .arg("--image")
        .arg(fixtures_dir().join("images/boxes.png"))
        .args(["--question", QUESTION, "--out"])
        .arg(&out_dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    let sample_dir = out_dir.join("sample");
    let output = bin().args(["check", "--trace"]).arg(&sample_dir).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", stderr(&output));
    assert!(stdout(&output).contains("trace ok"));

    // delete one rendered PNG: the check must fail
    let png = fs::read_dir(&sample_dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|e| e == "png"))
        .unwrap();
    fs::remove_file(png).unwrap();
    let output = bin().args(["check", "--trace"]).arg(&sample_dir).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(stderr(&output).contains("missing image"));
}

#[test]
fn help_exits_zero_and_documents_subcommands() {
    let output = bin().arg("--help").output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    let text = stdout(&output);
    for sub in ["solve", "render", "eval", "kb", "check"] {
        assert!(text.contains(sub), "missing {sub} in help");
    }
    for sub in ["solve", "render", "eval", "kb", "check"] {
        let output = bin().args([sub, "--help"]).output().unwrap();
        assert_eq!(output.status.code(), Some(0), "{sub} --help failed");
    }
}

#[test]
fn usage_errors_exit_one() {
    let output = bin().args(["solve"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let output = bin().args(["eval", "--mode", "bogus", "--bench", "x"]).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}

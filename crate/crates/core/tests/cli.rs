use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sliceprop(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sliceprop"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SLICEPROP_SEED")
        .output()
        .expect("binary runs")
}

fn phantom(dir: &Path, seed: &str, slices: &str) {
    let out = sliceprop(&["phantom", "--out", "p", "--seed", seed, "--slices", slices], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn segment_without_first_mask_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sliceprop(&["segment", "--stack", "s", "--mode", "full", "--out", "o"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn report_without_ground_truth_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = sliceprop(
        &["segment", "--stack", "s", "--first-mask", "m", "--mode", "basic", "--out", "o", "--report", "r.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn mixed_stack_dimensions_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    fs::create_dir(&s).unwrap();
    fs::write(s.join("a.pgm"), b"P5\n2 2\n255\n\0\0\0\0").unwrap();
    fs::write(s.join("b.pgm"), b"P5\n3 2\n255\n\0\0\0\0\0\0").unwrap();
    fs::write(dir.path().join("m.pgm"), b"P5\n2 2\n255\n\xff\0\0\0").unwrap();
    let out = sliceprop(
        &["segment", "--stack", "s", "--first-mask", "m.pgm", "--mode", "basic", "--out", "o"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("b.pgm"));
}

#[test]
fn full_mode_on_default_phantom() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "42", "10");
    let out = sliceprop(
        &[
            "segment", "--stack", "p/slices", "--first-mask", "p/gt/lv_0001.pgm", "--mode", "full", "--gt", "p/gt",
            "--out", "o", "--report", "r.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], "1");
    assert!(report["overall_mean"]["combined"].as_f64().unwrap() >= 0.90);
    assert_eq!(report["config"]["rf_trees"], 50);
    assert_eq!(report["config"]["rf_min_samples_leaf"], 2);
    assert_eq!(report["config"]["mf_min_samples_leaf"], 2);
    let csv = fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("slice,dice_mf,dice_rf,dice_combined"));
    assert_eq!(csv.lines().count(), 1 + 9);
    for k in 2..=10 {
        assert!(dir.path().join(format!("o/lv_{k:04}.pgm")).is_file());
    }
    assert!(!dir.path().join("o/lv_0001.pgm").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "3", "4");
    for run in ["a", "b"] {
        let out = sliceprop(
            &[
                "segment", "--stack", "p/slices", "--first-mask", "p/first_mask.pgm", "--mode", "post", "--gt",
                "p/gt", "--out", run, "--trees", "10", "--seed", "7",
            ],
            dir.path(),
        );
        assert!(out.status.success());
    }
    for name in ["lv_0002.pgm", "lv_0003.pgm", "lv_0004.pgm", "report.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    let strip = |run: &str| {
        let mut v: Value = serde_json::from_slice(&fs::read(dir.path().join(run).join("report.json")).unwrap()).unwrap();
        v["wall_seconds"] = Value::Null;
        v
    };
    assert_eq!(strip("a"), strip("b"));
}

#[test]
fn eval_of_ground_truth_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "5", "3");
    let out = sliceprop(&["eval", "--pred", "p/gt", "--gt", "p/gt", "--report", "e.json"], dir.path());
    assert!(out.status.success());
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("e.json")).unwrap()).unwrap();
    let slices = report["per_slice"].as_array().unwrap();
    assert_eq!(slices.len(), 3);
    assert!(slices.iter().all(|s| s["dice_combined"] == 1.0));
}

#[test]
fn experiments_summarize_three_modes() {
    let dir = tempfile::tempdir().unwrap();
    phantom(dir.path(), "8", "4");
    let out = sliceprop(
        &[
            "experiments", "--stack", "p/slices", "--first-mask", "p/first_mask.pgm", "--gt", "p/gt", "--report",
            "x.json", "--trees", "10",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&fs::read(dir.path().join("x.json")).unwrap()).unwrap();
    assert_eq!(doc["runs"].as_array().unwrap().len(), 3);
    let modes: Vec<&str> = doc["summary"]["rows"].as_array().unwrap().iter().map(|r| r["mode"].as_str().unwrap()).collect();
    assert_eq!(modes, ["basic", "postprocess", "full"]);
}

use std::path::Path;
use std::process::{Command, Output};

use rulerkit::eval::BenchOptions;
use rulerkit::io;
use rulerkit::pipeline::{self, BatchOptions, EstimatorConfig, PipelineConfig, PointSource};

fn rulerkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rulerkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RULERKIT_LOG")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn same_tree(a: &Path, b: &Path) {
    let mut names: Vec<_> = std::fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(!names.is_empty());
    for n in names {
        assert_eq!(std::fs::read(a.join(&n)).unwrap(), std::fs::read(b.join(&n)).unwrap(), "{n:?} differs");
    }
}

#[test]
fn synth_is_byte_identical_across_runs_and_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&rulerkit(&["synth", "--count", "3", "--seed", "7", "--out", "a"], d));
    ok(&rulerkit(&["synth", "--count", "3", "--seed", "7", "--out", "b", "--jobs", "1"], d));
    ok(&rulerkit(&["synth", "--count", "3", "--seed", "7", "--out", "c", "--jobs", "8"], d));
    same_tree(&d.join("a"), &d.join("b"));
    same_tree(&d.join("a"), &d.join("c"));
}

#[test]
fn two_mark_fit_fails_with_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("det.json"), r#"{"image_id": "x", "points": [{"x": 1, "y": 1}, {"x": 9, "y": 1}]}"#).unwrap();
    let out = rulerkit(&["fit", "--points", "det.json", "--method", "gp-de", "--out", "res.json"], d);
    ok(&out);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("res.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "failed");
    assert_eq!(v["pixels_per_cm"], 0.0);
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let out = rulerkit(&["fit", "--points", "missing.json"], dir.path());
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "MissingFile");

    std::fs::write(dir.path().join("det.json"), r#"{"image_id": "x", "points": []}"#).unwrap();
    let out = rulerkit(&["fit", "--points", "det.json", "--method", "deepgp"], dir.path());
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "MissingModel");
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("cfg.json"), r#"{"count": 2, "seed": 5, "out": "from_cfg"}"#).unwrap();
    ok(&rulerkit(&["synth", "--config", "cfg.json"], d));
    ok(&rulerkit(&["synth", "--config", "cfg.json", "--seed", "6", "--out", "from_flag"], d));
    ok(&rulerkit(&["synth", "--count", "2", "--seed", "5", "--out", "plain"], d));
    same_tree(&d.join("from_cfg"), &d.join("plain"));
    let a = std::fs::read(d.join("from_cfg/synth_00000.png")).unwrap();
    let b = std::fs::read(d.join("from_flag/synth_00000.png")).unwrap();
    assert_ne!(a, b);
    assert!(d.join("from_flag/synth_00001.png").exists());
}

#[test]
fn eval_matches_library_call() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&rulerkit(&["synth", "--count", "4", "--seed", "11", "--out", "set"], d));
    ok(&rulerkit(
        &["eval", "--manifest", "set/manifest.json", "--method", "gp-de", "--seed", "3", "--out", "report.json", "--csv", "report.csv"],
        d,
    ));
    let cli: rulerkit::eval::BenchmarkReport = serde_json::from_slice(&std::fs::read(d.join("report.json")).unwrap()).unwrap();

    let manifest = io::read_manifest(&d.join("set/manifest.json")).unwrap();
    let mut ec = EstimatorConfig::default();
    ec.de.seed = 3;
    let est = pipeline::create_estimator("gp-de", &ec).unwrap();
    let opts = BatchOptions {
        source: PointSource::Auto,
        size_rule: Default::default(),
        bench: BenchOptions::default(),
    };
    let lib = pipeline::estimate_batch(&manifest, est.as_ref(), &PipelineConfig::default(), &opts).unwrap();
    assert!((cli.mape - lib.mape).abs() <= 1e-12);
    assert_eq!(cli, lib);
    assert_eq!(std::fs::read_to_string(d.join("report.csv")).unwrap().lines().count(), 5);
}

#[test]
fn peaks_then_fit() {
    use rulerkit::geometry::Point2;
    use rulerkit::heatmap::render_gaussians;
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let pts: Vec<Point2> = (0..9).map(|i| Point2::new(20.0 + 15.0 * i as f64, 40.0)).collect();
    io::save_pfm(&render_gaussians(&pts, 2.0, 200, 80).unwrap(), &d.join("h.pfm")).unwrap();
    ok(&rulerkit(&["peaks", "--heatmap", "h.pfm", "--out", "det.json"], d));
    let det = io::read_detections(&d.join("det.json")).unwrap().data;
    assert_eq!(det.image_id, "h");
    assert_eq!(det.points, pts);
    ok(&rulerkit(&["fit", "--points", "det.json", "--method", "direct", "--out", "res.json"], d));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(d.join("res.json")).unwrap()).unwrap();
    assert_eq!(v["pixels_per_cm"], 15.0);
}

#[test]
fn deepgp_train_writes_model_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = ["deepgp-train", "--steps", "3", "--batch", "8", "--seed", "1", "--out"];
    ok(&rulerkit(&[&args[..], &["m1.dgp1", "--jobs", "1"]].concat(), d));
    ok(&rulerkit(&[&args[..], &["m2.dgp1", "--jobs", "8"]].concat(), d));
    assert_eq!(std::fs::read(d.join("m1.dgp1")).unwrap(), std::fs::read(d.join("m2.dgp1")).unwrap());
    let log = std::fs::read_to_string(d.join("m1.dgp1.loss.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    io::read_model(&d.join("m1.dgp1")).unwrap();
}

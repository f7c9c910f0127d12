//! End-to-end command pipeline: drives the compiled binary and checks
//! outputs, determinism, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sropnet::checkpoint::save_checkpoint;
use sropnet::fieldfile::read_field;
use sropnet::srop1::{read_dataset, write_dataset};
use sropnet_core::dataset::{build_dataset, DatasetConfig, Family};
use sropnet_core::model::{init_params, ModelSpec, Variant};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sropnet"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sropnet")
}

fn assert_code(out: &Output, code: i32, context: &str) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "{context}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Tiny temporal dataset written through the library (4x6 LR, 4x12 HR:
/// same frame count, so the LR grid is a legal prediction grid).
fn tiny_temporal(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut cfg = DatasetConfig::defaults(Family::Exp1, n, seed);
    cfg.lr_frames = 4;
    cfg.lr_spatial = vec![6];
    cfg.hr_frames = 4;
    cfg.hr_spatial = vec![12];
    let ds = build_dataset(&cfg).unwrap();
    let path = dir.join(format!("exp1_{n}_{seed}.srop"));
    write_dataset(&path, &ds).unwrap();
    path
}

fn tiny_spacetime(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut cfg = DatasetConfig::defaults(Family::Exp3, n, seed);
    cfg.lr_frames = 4;
    cfg.lr_spatial = vec![6];
    cfg.hr_frames = 8;
    cfg.hr_spatial = vec![9];
    let ds = build_dataset(&cfg).unwrap();
    let path = dir.join(format!("exp3_{n}_{seed}.srop"));
    write_dataset(&path, &ds).unwrap();
    path
}

/// Untrained checkpoint for a dataset, written through the library.
fn init_checkpoint(dir: &Path, dataset: &Path, variant: Variant, seed: u64) -> PathBuf {
    let ds = read_dataset(dataset).unwrap();
    let spec = ModelSpec::for_dataset(&ds.header, variant).unwrap();
    let params = init_params(&spec, seed).unwrap();
    let path = dir.join(format!("init_{}_{seed}.srck", variant.name()));
    save_checkpoint(&path, &spec, &params).unwrap();
    path
}

#[test]
fn generate_uses_published_default_resolutions() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d.srop");
    let r = run(&[
        "generate",
        "--problem",
        "exp1",
        "--n-samples",
        "4",
        "--seed",
        "1",
        "--out",
        path_str(&out),
    ]);
    assert_code(&r, 0, "generate exp1 defaults");
    let ds = read_dataset(&out).unwrap();
    assert_eq!(ds.records.len(), 4);
    assert_eq!(ds.header.lr_shape, vec![40, 16]);
    assert_eq!(ds.header.hr_shape, Some(vec![80, 64]));
    assert!(out.with_file_name("d.srop.config.json").exists());
}

#[test]
fn generate_zero_samples_is_a_valid_empty_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("empty.srop");
    let r = run(&[
        "generate",
        "--problem",
        "exp2",
        "--n-samples",
        "0",
        "--out",
        path_str(&out),
    ]);
    assert_code(&r, 0, "generate zero samples");
    let ds = read_dataset(&out).unwrap();
    assert_eq!(ds.records.len(), 0);

    // Training on it fails with a config error, not a crash.
    let r = run(&[
        "train",
        "--dataset",
        path_str(&out),
        "--out",
        path_str(&dir.path().join("run")),
        "--epochs",
        "1",
    ]);
    assert_code(&r, 2, "train on empty dataset");
}

#[test]
fn repeated_generation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.srop");
    let b = dir.path().join("b.srop");
    for out in [&a, &b] {
        let r = run(&[
            "generate",
            "--problem",
            "exp3",
            "--n-samples",
            "5",
            "--seed",
            "77",
            "--lr-frames",
            "4",
            "--lr-space",
            "5",
            "--hr-frames",
            "6",
            "--hr-space",
            "7",
            "--out",
            path_str(out),
        ]);
        assert_code(&r, 0, "generate");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn train_evaluate_predict_plot_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_temporal(dir.path(), 6, 3);
    let run_dir = dir.path().join("run");
    let r = run(&[
        "train",
        "--dataset",
        path_str(&data),
        "--out",
        path_str(&run_dir),
        "--variant",
        "two_net",
        "--epochs",
        "2",
        "--batch-size",
        "3",
        "--seed",
        "5",
    ]);
    assert_code(&r, 0, "train");
    let ck = run_dir.join("checkpoint.srck");
    assert!(ck.exists());
    let loss = std::fs::read_to_string(run_dir.join("loss.csv")).unwrap();
    assert!(loss.starts_with("epoch,train_loss,val_loss\n"));
    assert_eq!(loss.lines().count(), 3, "header plus one row per epoch");
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(echo["train"]["epochs"], 2);
    assert_eq!(echo["model"]["variant"], "two_net");

    let report = dir.path().join("report.json");
    let r = run(&[
        "evaluate",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--report",
        path_str(&report),
    ]);
    assert_code(&r, 0, "evaluate");
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["n_samples"], 6);
    assert!(rep["mean_rel_l2"].as_f64().unwrap().is_finite());
    assert_eq!(rep["baseline"]["method"], "bicubic_grid");
    assert!(rep["wall_clock_seconds"].as_f64().unwrap() >= 0.0);
    assert!(rep["config"]["checkpoint"].is_string());

    let pred_dir = dir.path().join("pred");
    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--sample",
        "2",
        "--out",
        path_str(&pred_dir),
    ]);
    assert_code(&r, 0, "predict");
    let (ph, pv) = read_field(&pred_dir.join("pred.fld")).unwrap();
    assert_eq!(ph.shape, vec![4, 12]);
    assert_eq!(pv.len(), 48);
    let (th, tv) = read_field(&pred_dir.join("truth.fld")).unwrap();
    assert_eq!(th.shape, ph.shape);
    let (lh, _) = read_field(&pred_dir.join("lr.fld")).unwrap();
    assert_eq!(lh.shape, vec![4, 6]);

    // Prediction against its own grid targets reproduces the report error.
    let ds = read_dataset(&data).unwrap();
    let expect: Vec<f64> = ds.records[2].hr_targets.iter().map(|&v| v as f64).collect();
    assert_eq!(tv.len(), expect.len());
    for (a, b) in tv.iter().zip(&expect) {
        assert_eq!(*a as f32, *b as f32, "truth field mirrors the dataset");
    }

    let plots = dir.path().join("plots");
    let r = run(&[
        "plot",
        "--field",
        path_str(&pred_dir.join("pred.fld")),
        "--compare",
        path_str(&pred_dir.join("truth.fld")),
        "--out",
        path_str(&plots),
    ]);
    assert_code(&r, 0, "plot");
    assert!(plots.join("field.pgm").exists());
    assert!(plots.join("field.csv").exists());
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(plots.join("plot.json")).unwrap()).unwrap();
    assert_eq!(sidecar["mode"], "error");
    assert_eq!(sidecar["width"], 12);
    assert_eq!(sidecar["frames"], 4);
}

#[test]
fn training_twice_with_one_seed_matches_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_temporal(dir.path(), 5, 9);
    let mut checkpoints = Vec::new();
    for name in ["r1", "r2"] {
        let out = dir.path().join(name);
        let r = run(&[
            "train",
            "--dataset",
            path_str(&data),
            "--out",
            path_str(&out),
            "--epochs",
            "2",
            "--batch-size",
            "5",
            "--seed",
            "4",
        ]);
        assert_code(&r, 0, "train");
        checkpoints.push(std::fs::read(out.join("checkpoint.srck")).unwrap());
    }
    assert_eq!(checkpoints[0], checkpoints[1]);
}

#[test]
fn predict_accepts_the_lr_grid_itself() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_temporal(dir.path(), 2, 8);
    let ck = init_checkpoint(dir.path(), &data, Variant::TwoNet, 1);
    let out = dir.path().join("lrgrid");
    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--sample",
        "0",
        "--grid",
        "6,4",
        "--out",
        path_str(&out),
    ]);
    assert_code(&r, 0, "predict on LR grid");
    let (h, v) = read_field(&out.join("pred.fld")).unwrap();
    assert_eq!(h.shape, vec![4, 6], "field carries the LR shape");
    assert_eq!(v.len(), 24);
    assert!(!out.join("truth.fld").exists(), "off-sample grid has no truth");
}

#[test]
fn predict_rejects_frame_counts_the_model_cannot_produce() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_temporal(dir.path(), 2, 8);
    let ck = init_checkpoint(dir.path(), &data, Variant::TwoNet, 1);
    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--sample",
        "0",
        "--grid",
        "6,99",
        "--out",
        path_str(&dir.path().join("x")),
    ]);
    assert_code(&r, 2, "wrong frame count");
    let msg = String::from_utf8_lossy(&r.stderr).to_string();
    assert!(msg.contains("fixes the output"), "got: {msg}");
}

#[test]
fn spacetime_predictions_are_mesh_free_but_need_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_spacetime(dir.path(), 2, 6);
    let ck = init_checkpoint(dir.path(), &data, Variant::ThreeNet, 2);

    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--out",
        path_str(&dir.path().join("noglid")),
    ]);
    assert_code(&r, 2, "spacetime without --grid");

    let out = dir.path().join("grid");
    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--grid",
        "13,7",
        "--out",
        path_str(&out),
    ]);
    assert_code(&r, 0, "spacetime with --grid");
    let (h, v) = read_field(&out.join("pred.fld")).unwrap();
    assert_eq!(h.shape, vec![7, 13], "any grid works");
    assert_eq!(v.len(), 91);
}

#[test]
fn evaluating_a_truth_oracle_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    // Constant targets plus a zero-weight model whose bias equals them.
    let mut cfg = DatasetConfig::defaults(Family::Exp1, 3, 4);
    cfg.lr_frames = 4;
    cfg.lr_spatial = vec![6];
    cfg.hr_frames = 4;
    cfg.hr_spatial = vec![12];
    let mut ds = build_dataset(&cfg).unwrap();
    for rec in &mut ds.records {
        for t in &mut rec.hr_targets {
            *t = 0.75;
        }
    }
    let data = dir.path().join("const.srop");
    write_dataset(&data, &ds).unwrap();

    let spec = ModelSpec::for_dataset(&ds.header, Variant::TwoNet).unwrap();
    let mut params = init_params(&spec, 1).unwrap();
    for values in &mut params.values {
        for v in values.iter_mut() {
            *v = 0.0;
        }
    }
    let bias_idx = params.index("comb.bias").unwrap();
    params.values[bias_idx][0] = 0.75;
    let ck = dir.path().join("oracle.srck");
    save_checkpoint(&ck, &spec, &params).unwrap();

    let report = dir.path().join("report.json");
    let r = run(&[
        "evaluate",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--report",
        path_str(&report),
        "--baseline",
        "none",
    ]);
    assert_code(&r, 0, "evaluate oracle");
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rep["mean_rel_l2"].as_f64().unwrap(), 0.0);
    assert_eq!(rep["max_rel_l2"].as_f64().unwrap(), 0.0);
    for v in rep["per_sample_rel_l2"].as_array().unwrap() {
        assert_eq!(v.as_f64().unwrap(), 0.0);
    }
    assert!(rep["baseline"].is_null());
}

#[test]
fn plotting_a_field_against_itself_renders_black() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_temporal(dir.path(), 1, 2);
    let ck = init_checkpoint(dir.path(), &data, Variant::TwoNet, 3);
    let pred = dir.path().join("p");
    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--out",
        path_str(&pred),
    ]);
    assert_code(&r, 0, "predict");
    let plots = dir.path().join("plots");
    let r = run(&[
        "plot",
        "--field",
        path_str(&pred.join("truth.fld")),
        "--compare",
        path_str(&pred.join("truth.fld")),
        "--out",
        path_str(&plots),
    ]);
    assert_code(&r, 0, "plot self-compare");
    let pgm = std::fs::read(plots.join("field.pgm")).unwrap();
    let header_end = pgm
        .windows(4)
        .position(|w| w == b"255\n")
        .map(|p| p + 4)
        .unwrap();
    assert!(pgm[header_end..].iter().all(|&b| b == 0), "error panel is black");
}

#[test]
fn exit_codes_distinguish_usage_data_and_numeric_failures() {
    let dir = tempfile::tempdir().unwrap();
    let data = tiny_temporal(dir.path(), 4, 1);
    let spacetime = tiny_spacetime(dir.path(), 2, 1);

    // 2: unknown problem name.
    let r = run(&[
        "generate",
        "--problem",
        "exp9",
        "--n-samples",
        "1",
        "--out",
        path_str(&dir.path().join("x.srop")),
    ]);
    assert_code(&r, 2, "unknown problem");

    // 2: missing input file.
    let r = run(&[
        "train",
        "--dataset",
        path_str(&dir.path().join("absent.srop")),
        "--out",
        path_str(&dir.path().join("run")),
    ]);
    assert_code(&r, 2, "missing dataset");

    // 2: checkpoint/dataset incompatibility named explicitly.
    let ck = init_checkpoint(dir.path(), &data, Variant::TwoNet, 1);
    let report = dir.path().join("r.json");
    let r = run(&[
        "evaluate",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&spacetime),
        "--report",
        path_str(&report),
    ]);
    assert_code(&r, 2, "incompatible pair");
    assert!(String::from_utf8_lossy(&r.stderr).contains("incompatible"));

    // 2: config file with unknown keys.
    let cfg_path = dir.path().join("bad.json");
    std::fs::write(&cfg_path, r#"{"train": {"epochz": 1}}"#).unwrap();
    let r = run(&[
        "train",
        "--dataset",
        path_str(&data),
        "--config",
        path_str(&cfg_path),
        "--out",
        path_str(&dir.path().join("run2")),
    ]);
    assert_code(&r, 2, "unknown config key");

    // 3: corrupt dataset (truncated mid-record).
    let bytes = std::fs::read(&data).unwrap();
    let corrupt = dir.path().join("corrupt.srop");
    std::fs::write(&corrupt, &bytes[..bytes.len() - 9]).unwrap();
    let r = run(&[
        "train",
        "--dataset",
        path_str(&corrupt),
        "--out",
        path_str(&dir.path().join("run3")),
    ]);
    assert_code(&r, 3, "corrupt dataset");

    // 3: file that is not a field file.
    let r = run(&[
        "plot",
        "--field",
        path_str(&data),
        "--out",
        path_str(&dir.path().join("plots")),
    ]);
    assert_code(&r, 3, "wrong format for plot");

    // 4: non-finite training abort via a poisoned init checkpoint.
    let ds = read_dataset(&data).unwrap();
    let spec = ModelSpec::for_dataset(&ds.header, Variant::TwoNet).unwrap();
    let mut params = init_params(&spec, 1).unwrap();
    params.values[0][0] = f64::NAN;
    let poisoned = dir.path().join("nan.srck");
    save_checkpoint(&poisoned, &spec, &params).unwrap();
    let r = run(&[
        "train",
        "--dataset",
        path_str(&data),
        "--init-checkpoint",
        path_str(&poisoned),
        "--out",
        path_str(&dir.path().join("run4")),
        "--epochs",
        "1",
    ]);
    assert_code(&r, 4, "NaN abort");
    assert!(String::from_utf8_lossy(&r.stderr).contains("non-finite"));
}

#[test]
fn exp2_checkpoint_predicts_on_the_published_grid() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("exp2.srop");
    let r = run(&[
        "generate",
        "--problem",
        "exp2",
        "--n-samples",
        "1",
        "--seed",
        "3",
        "--out",
        path_str(&data),
    ]);
    assert_code(&r, 0, "generate exp2 defaults");
    let ck = init_checkpoint(dir.path(), &data, Variant::ThreeNet, 4);
    let out = dir.path().join("pred");
    let r = run(&[
        "predict",
        "--checkpoint",
        path_str(&ck),
        "--dataset",
        path_str(&data),
        "--grid",
        "96,100",
        "--out",
        path_str(&out),
    ]);
    assert_code(&r, 0, "predict exp2 96,100");
    let (h, v) = read_field(&out.join("pred.fld")).unwrap();
    assert_eq!(h.shape, vec![100, 96]);
    assert_eq!(v.len(), 9600);
}

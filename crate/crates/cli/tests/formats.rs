//! File-format contracts: byte-exact round-trips and loud failures on
//! malformed input.

use sropnet::checkpoint::{decode_checkpoint, encode_checkpoint};
use sropnet::errors::CliError;
use sropnet::fieldfile::{read_field, write_field, FieldHeader};
use sropnet::pgm::{bytes_error, bytes_minmax, write_csv};
use sropnet::runconfig::RunConfig;
use sropnet::srop1::{decode_dataset, encode_dataset};
use sropnet::threads::par_map;
use sropnet_core::dataset::{build_dataset, DatasetConfig, Family};
use sropnet_core::model::{init_params, BranchKind, ModelSpec, Variant};

fn tiny_dataset(family: Family, n: usize, seed: u64) -> sropnet_core::dataset::Dataset {
    let mut cfg = DatasetConfig::defaults(family, n, seed);
    cfg.lr_frames = 4;
    cfg.lr_spatial = vec![6; cfg.lr_spatial.len()];
    cfg.hr_frames = 8;
    cfg.hr_spatial = vec![10; cfg.hr_spatial.len()];
    build_dataset(&cfg).expect("tiny dataset")
}

#[test]
fn dataset_encoding_round_trips_byte_identically() {
    for family in [Family::Exp1, Family::Exp3] {
        let ds = tiny_dataset(family, 3, 5);
        let bytes = encode_dataset(&ds).unwrap();
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back, ds);
        let again = encode_dataset(&back).unwrap();
        assert_eq!(again, bytes, "{family:?} re-encoding changed bytes");
    }
}

#[test]
fn dataset_header_survives_empty_datasets() {
    let mut cfg = DatasetConfig::defaults(Family::Exp2, 0, 9);
    cfg.lr_frames = 4;
    cfg.lr_spatial = vec![6];
    cfg.hr_frames = 8;
    cfg.hr_spatial = vec![12];
    let ds = build_dataset(&cfg).unwrap();
    let bytes = encode_dataset(&ds).unwrap();
    let back = decode_dataset(&bytes).unwrap();
    assert_eq!(back.records.len(), 0);
    assert_eq!(back.header, ds.header);
}

#[test]
fn truncated_dataset_reports_offset_and_record() {
    let ds = tiny_dataset(Family::Exp1, 2, 1);
    let bytes = encode_dataset(&ds).unwrap();
    let cut = &bytes[..bytes.len() - 10];
    let err = decode_dataset(cut).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("truncated at byte"), "got: {msg}");
    assert!(msg.contains("record 1"), "got: {msg}");
    assert!(matches!(err, CliError::Data(_)));
}

#[test]
fn trailing_bytes_are_rejected() {
    let ds = tiny_dataset(Family::Exp1, 1, 1);
    let mut bytes = encode_dataset(&ds).unwrap();
    bytes.extend_from_slice(&[0u8; 8]);
    let msg = decode_dataset(&bytes).unwrap_err().to_string();
    assert!(msg.contains("trailing"), "got: {msg}");
}

#[test]
fn foreign_format_tags_and_unknown_header_keys_are_rejected() {
    let ds = tiny_dataset(Family::Exp1, 1, 1);
    let bytes = encode_dataset(&ds).unwrap();
    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header = String::from_utf8(bytes[..nl].to_vec()).unwrap();

    let wrong_tag = header.replace("SROP1", "BOGUS");
    let mut tampered = wrong_tag.into_bytes();
    tampered.push(b'\n');
    tampered.extend_from_slice(&bytes[nl + 1..]);
    let msg = decode_dataset(&tampered).unwrap_err().to_string();
    assert!(msg.contains("format tag"), "got: {msg}");

    let extra_key = header.replacen('{', "{\"surprise\":1,", 1);
    let mut tampered = extra_key.into_bytes();
    tampered.push(b'\n');
    tampered.extend_from_slice(&bytes[nl + 1..]);
    let msg = decode_dataset(&tampered).unwrap_err().to_string();
    assert!(msg.contains("invalid dataset header"), "got: {msg}");
}

#[test]
fn checkpoint_round_trips_byte_identically() {
    let ds = tiny_dataset(Family::Exp3, 1, 3);
    let spec = ModelSpec::for_dataset(&ds.header, Variant::ThreeNet).unwrap();
    let params = init_params(&spec, 42).unwrap();
    let bytes = encode_checkpoint(&spec, &params).unwrap();
    let (spec2, params2) = decode_checkpoint(&bytes).unwrap();
    assert_eq!(spec2, spec);
    assert_eq!(params2.names, params.names);
    assert_eq!(params2.shapes, params.shapes);
    // Values pass through f32, so compare after one narrowing pass.
    for (a, b) in params.values.iter().zip(&params2.values) {
        for (x, y) in a.iter().zip(b) {
            assert_eq!(*x as f32, *y as f32);
        }
    }
    let again = encode_checkpoint(&spec2, &params2).unwrap();
    assert_eq!(again, bytes, "second save changed bytes");
}

#[test]
fn checkpoint_rejects_gaps_and_truncation() {
    let ds = tiny_dataset(Family::Exp1, 1, 3);
    let spec = ModelSpec::for_dataset(&ds.header, Variant::TwoNet).unwrap();
    let params = init_params(&spec, 1).unwrap();
    let bytes = encode_checkpoint(&spec, &params).unwrap();

    let cut = &bytes[..bytes.len() - 4];
    let msg = decode_checkpoint(cut).unwrap_err().to_string();
    assert!(msg.contains("truncated blob"), "got: {msg}");

    let nl = bytes.iter().position(|&b| b == b'\n').unwrap();
    let header = String::from_utf8(bytes[..nl].to_vec()).unwrap();
    let shifted = header.replacen("\"offset\":0", "\"offset\":4", 1);
    assert_ne!(shifted, header, "fixture assumes a tensor at offset 0");
    let mut tampered = shifted.into_bytes();
    tampered.push(b'\n');
    tampered.extend_from_slice(&bytes[nl + 1..]);
    let msg = decode_checkpoint(&tampered).unwrap_err().to_string();
    assert!(msg.contains("starts at byte"), "got: {msg}");
}

#[test]
fn field_files_round_trip_to_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.fld");
    let header = FieldHeader::new(vec![3, 4], (0.0, 2.0), vec![(-1.0, 1.0)], 7, "truth");
    let values: Vec<f64> = (0..12).map(|i| 0.1 * i as f64 - 0.4).collect();
    write_field(&path, &header, &values).unwrap();
    let (h2, v2) = read_field(&path).unwrap();
    assert_eq!(h2.shape, header.shape);
    assert_eq!(h2.sample, 7);
    assert_eq!(h2.source, "truth");
    for (a, b) in values.iter().zip(&v2) {
        assert_eq!(*a as f32, *b as f32);
    }
}

#[test]
fn short_field_files_report_the_byte_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("short.fld");
    let header = FieldHeader::new(vec![2, 5], (0.0, 1.0), vec![(0.0, 2.0)], 0, "prediction");
    write_field(&path, &header, &vec![0.5; 10]).unwrap();
    let full = std::fs::read(&path).unwrap();
    std::fs::write(&path, &full[..full.len() - 6]).unwrap();
    let err = read_field(&path).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("at offset"), "got: {msg}");
    assert!(matches!(err, CliError::Data(_)));
}

#[test]
fn pgm_scaling_handles_flat_and_zero_error_fields() {
    let flat = bytes_minmax(&[2.5, 2.5, 2.5], 2.5, 2.5);
    assert_eq!(flat, vec![128, 128, 128]);

    let ramp = bytes_minmax(&[0.0, 0.5, 1.0], 0.0, 1.0);
    assert_eq!(ramp, vec![0, 128, 255]);

    let black = bytes_error(&[0.0, 0.0], 0.0);
    assert_eq!(black, vec![0, 0]);

    let err = bytes_error(&[0.0, 0.5, 1.0, 2.0], 1.0);
    assert_eq!(err, vec![0, 128, 255, 255]);
}

#[test]
fn plot_csv_round_trips_to_f32_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.csv");
    let values: Vec<f64> = (0..6).map(|i| (i as f64).sin() * 1e-3).collect();
    write_csv(&path, 3, 2, &values).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let parsed: Vec<f64> = text
        .lines()
        .flat_map(|l| l.split(','))
        .map(|s| s.parse::<f32>().unwrap() as f64)
        .collect();
    assert_eq!(parsed.len(), 6);
    for (a, b) in values.iter().zip(&parsed) {
        assert_eq!(*a as f32, *b as f32);
    }
}

#[test]
fn run_config_rejects_unknown_keys() {
    let ok: Result<RunConfig, _> =
        serde_json::from_str(r#"{"train": {"epochs": 3}, "data": {"seed": 1}}"#);
    assert!(ok.is_ok());
    let bad: Result<RunConfig, _> = serde_json::from_str(r#"{"train": {"epochz": 3}}"#);
    assert!(bad.is_err());
    let bad: Result<RunConfig, _> = serde_json::from_str(r#"{"trainer": {}}"#);
    assert!(bad.is_err());
}

#[test]
fn run_config_overlays_model_and_train_sections() {
    let rc: RunConfig = serde_json::from_str(
        r#"{
            "model": {"latent": 16, "activation": "relu",
                      "branch": {"kind": "mlp", "hidden": [8, 8]}},
            "train": {"epochs": 7, "learning_rate": 0.5, "query_batch": 9}
        }"#,
    )
    .unwrap();
    let ds = tiny_dataset(Family::Exp3, 1, 2);
    let mut spec = ModelSpec::for_dataset(&ds.header, Variant::ThreeNet).unwrap();
    rc.model.apply(&mut spec).unwrap();
    assert_eq!(spec.latent, 16);
    assert_eq!(spec.branch, BranchKind::Mlp { hidden: vec![8, 8] });
    spec.validate().unwrap();

    let mut tcfg = sropnet_core::train::TrainConfig::default();
    rc.train.apply(&mut tcfg);
    assert_eq!(tcfg.epochs, 7);
    assert_eq!(tcfg.adam.learning_rate, 0.5);
    assert_eq!(tcfg.query_batch, Some(9));
}

#[test]
fn branch_overrides_reject_fields_of_other_kinds() {
    let rc: RunConfig = serde_json::from_str(
        r#"{"model": {"branch": {"kind": "mlp", "state": 32}}}"#,
    )
    .unwrap();
    let ds = tiny_dataset(Family::Exp3, 1, 2);
    let mut spec = ModelSpec::for_dataset(&ds.header, Variant::ThreeNet).unwrap();
    let msg = rc.model.apply(&mut spec).unwrap_err().to_string();
    assert!(msg.contains("does not apply"), "got: {msg}");
}

#[test]
fn parallel_map_matches_sequential_order() {
    let squares = par_map(100, |i| i * i);
    let expect: Vec<usize> = (0..100).map(|i| i * i).collect();
    assert_eq!(squares, expect);
    assert_eq!(par_map(0, |i| i), Vec::<usize>::new());
    assert_eq!(par_map(1, |i| i + 7), vec![7]);
}

mod common;

use ecc_aht::ingest::{ingest_file, preprocess, read_bundle, read_csv, run_replay, write_bundle, IngestConfig, ReplayConfig};
use ecc_aht::policies::PolicyKind;
use ecc_aht::Error;

#[test]
fn bundle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("plant.csv");
    std::fs::write(&csv, common::golden_csv()).unwrap();
    let ds = ingest_file(&csv, &common::golden_config()).unwrap();
    write_bundle(&ds, &dir.path().join("bundle")).unwrap();
    let back = read_bundle(&dir.path().join("bundle")).unwrap();
    assert_eq!(back.columns, ds.columns);
    assert_eq!(back.windows.values, ds.windows.values);
    assert_eq!(back.windows.labels, ds.windows.labels);
    assert_eq!(back.mu0, ds.mu0);
    assert!((back.sigma_reg.sigma() - ds.sigma_reg.sigma()).amax() < 1e-12);
    assert_eq!(back.scaler, ds.scaler);
}

#[test]
fn replay_is_deterministic() {
    let cfg = common::golden_config();
    let text = common::golden_csv();
    let ds = preprocess(&read_csv(text.as_bytes(), &cfg).unwrap(), &cfg).unwrap();
    let mut rc = ReplayConfig::new(2, vec![PolicyKind::EccAht, PolicyKind::Rsp]);
    rc.seeds = 3;
    let a = serde_json::to_string(&run_replay(&ds, &rc).unwrap()).unwrap();
    let b = serde_json::to_string(&run_replay(&ds, &rc).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn out_of_order_timestamps_name_the_line() {
    let text = "t,a,b\n0,1,2\n1,2,3\n1,3,4\n";
    let err = read_csv(text.as_bytes(), &IngestConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Ingest { row: Some(4), .. }), "{err}");
}

#[test]
fn unknown_config_keys_are_rejected() {
    assert!(toml::from_str::<IngestConfig>("window_seconds = 30\nbogus = 1\n").is_err());
    let c: IngestConfig = toml::from_str("window_seconds = 30\n").unwrap();
    assert_eq!(c.window_seconds, 30.0);
}

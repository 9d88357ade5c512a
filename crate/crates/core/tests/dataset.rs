//! Persistence, corruption guards and statistical properties of generated datasets.

use std::fs;

use hrrp_core::analysis::pearson;
use hrrp_core::dataset::*;
use hrrp_core::{lrp_meters, tlop, Error, LrpParams};

fn small(n_ships: usize, per_ship: usize) -> DatasetConfig {
    let mut cfg = DatasetConfig {
        n_ships,
        fractions: [0.6, 0.2, 0.2],
        ..DatasetConfig::default()
    };
    cfg.acquisition.per_ship = per_ship;
    cfg
}

#[test]
fn thousand_records_round_trip_bit_exactly() {
    let params = LrpParams::default();
    let ds = generate_dataset(&small(10, 100), 3, &params).unwrap();
    assert_eq!(ds.records.len(), 1000);
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds.records, dir.path(), "d").unwrap();
    let back = read_dataset(dir.path(), "d").unwrap();
    assert_eq!(back, ds.records);
    for (a, b) in back.iter().zip(&ds.records) {
        for (x, y) in a.profile.amplitudes().iter().zip(b.profile.amplitudes()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }
}

#[test]
fn corruption_is_reported_distinctly() {
    let params = LrpParams::default();
    let ds = generate_dataset(&small(5, 5), 1, &params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds.records, dir.path(), "d").unwrap();
    let (meta_path, sig_path) = dataset_paths(dir.path(), "d");
    let meta = fs::read_to_string(&meta_path).unwrap();
    let blob = fs::read(&sig_path).unwrap();

    let err = decode_dataset(&meta, &blob[..blob.len() - 7]).unwrap_err();
    assert!(matches!(err, Error::TruncatedPayload { .. }), "{err}");

    let bumped = meta.replacen("\"version\":1", "\"version\":2", 1);
    assert_ne!(bumped, meta);
    let err = decode_dataset(&bumped, &blob).unwrap_err();
    assert!(matches!(err, Error::UnsupportedVersion { found: 2, .. }), "{err}");

    let mut flipped = blob.clone();
    flipped[13] ^= 0x40;
    let err = decode_dataset(&meta, &flipped).unwrap_err();
    assert!(matches!(err, Error::ChecksumMismatch { .. }), "{err}");

    let err = decode_dataset("{not json\n", &blob).unwrap_err();
    assert!(matches!(err, Error::MalformedHeader(_)), "{err}");
    let err = decode_dataset("", &blob).unwrap_err();
    assert!(matches!(err, Error::MalformedHeader(_)), "{err}");
}

#[test]
fn regeneration_is_byte_identical() {
    let params = LrpParams::default();
    let cfg = small(5, 20);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let ds = generate_dataset(&cfg, 77, &params).unwrap();
        write_dataset(&ds.records, d.path(), "d").unwrap();
        ds.manifest.write(&d.path().join("split.json")).unwrap();
    }
    for f in ["d.meta.jsonl", "d.sig.f32le", "split.json"] {
        let a = fs::read(dirs[0].path().join(f)).unwrap();
        let b = fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn manifest_round_trips_and_rejects_leakage() {
    let params = LrpParams::default();
    let ds = generate_dataset(&small(20, 2), 9, &params).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("split.json");
    ds.manifest.write(&path).unwrap();
    assert_eq!(SplitManifest::read(&path).unwrap(), ds.manifest);
    let mut leaky = ds.manifest.clone();
    leaky.test_ship_ids.push(leaky.train_ship_ids[0].clone());
    let text = serde_json::to_string(&leaky).unwrap();
    fs::write(&path, text).unwrap();
    assert!(matches!(SplitManifest::read(&path), Err(Error::SplitLeakage(_))));
}

#[test]
fn default_dataset_statistics() {
    let params = LrpParams::default();
    let ds = generate_dataset(&DatasetConfig::default(), 2024, &params).unwrap();
    assert_eq!(ds.records.len(), 24_000);
    let m = &ds.manifest;
    assert_eq!((m.train_ship_ids.len(), m.val_ship_ids.len(), m.test_ship_ids.len()), (54, 3, 3));

    let first: Vec<f64> = ds.records.iter().take(10_000).map(|r| r.snr_db).collect();
    let mean = first.iter().sum::<f64>() / first.len() as f64;
    assert!((12.5..=13.5).contains(&mean), "{mean}");
    assert!(ds.records.iter().all(|r| (10.0..=30.0).contains(&r.snr_db)));

    let lrp: Vec<f64> = ds.records.iter().map(|r| lrp_meters(&r.profile, &params).unwrap()).collect();
    let theory: Vec<f64> = ds.records.iter().map(|r| tlop(r.length, r.width, r.aspect_angle)).collect();
    let r = pearson(&lrp, &theory).unwrap();
    assert!(r >= 0.9, "{r}");
}

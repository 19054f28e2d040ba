use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::features::{FeatureMatrix, N_FEATURES};
use crate::models::{fit, Regressor};

fn sample_bundle(family: Family) -> ModelBundle {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut transform = TransformState::identity(LabelTransform::LogE);
    transform.kept = vec![0, 1, 2, 3, 8];
    transform.lambdas[1] = -0.123456789;
    transform.means[2] = 1.0 / 3.0;
    transform.stds[8] = 7.25;
    transform.validate().unwrap();
    let rows: Vec<Vec<f64>> = (0..60).map(|_| (0..5).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r[0] * r[1] + r[3].sin() - r[4]).collect();
    let x = FeatureMatrix::from_rows(&rows).unwrap();
    let hp: Hyperparameters = match family {
        Family::RandomForest => [("n_trees".to_string(), 5.0), ("max_depth".to_string(), f64::INFINITY)].into(),
        Family::GradientBoosting => [("n_rounds".to_string(), 7.0)].into(),
        Family::Knn => [("k".to_string(), 3.0)].into(),
        _ => Hyperparameters::new(),
    };
    let model = fit(family, &x, &y, &hp).unwrap().with_schema(&transform.kept_features());
    ModelBundle {
        format_version: FORMAT_VERSION,
        host_descriptor: "Test CPU = 4 cores\\with\nnewline".into(),
        max_threads: 8,
        train_mem_cap_bytes: 500 << 20,
        candidates: vec![1, 2, 4, 8],
        transform,
        model,
        selection: Some(SpeedupEstimate {
            family,
            rmse_s: 0.1 + 0.2,
            t_eval_s: 1.5e-6,
            est_speedup_no_overhead: 1.3,
            est_speedup_with_overhead: 1.25,
            aggregate_speedup_no_overhead: 1.2,
            aggregate_speedup: 1.1,
            mean_speedup: 1.25,
            n_shapes: 42,
        }),
    }
}

#[test]
fn every_family_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for family in Family::ALL {
        let b = sample_bundle(family);
        let path = dir.path().join(family.as_str());
        save_bundle(&b, &path).unwrap();
        let back = load_bundle(&path).unwrap();
        assert_eq!(back, b, "{family}");
        for _ in 0..1000 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            assert_eq!(b.model.predict_row(&x).to_bits(), back.model.predict_row(&x).to_bits());
        }
    }
}

#[test]
fn encoding_is_canonical() {
    let dir = tempfile::tempdir().unwrap();
    let b = sample_bundle(Family::GradientBoosting);
    save_bundle(&b, &dir.path().join("a")).unwrap();
    save_bundle(&b.clone(), &dir.path().join("b")).unwrap();
    for f in [CONFIG_FILE, MODEL_FILE] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(dir.path().join("b").join(f)).unwrap());
    }
    let text = fs::read_to_string(dir.path().join("a").join(CONFIG_FILE)).unwrap();
    assert!(text.starts_with("format_version=1\n"));
    assert!(text.lines().last().unwrap().starts_with("checksum="));
    assert_eq!(text.lines().filter(|l| l.starts_with("host_descriptor=")).count(), 1);
}

#[test]
fn any_flipped_byte_is_detected() {
    let b = sample_bundle(Family::DecisionTree);
    let (cfg, model) = encode(&b).unwrap();
    for i in (0..model.len()).step_by(7) {
        let mut m = model.clone();
        m[i] ^= 0x10;
        assert!(matches!(decode(&cfg, &m), Err(Error::Corrupt(_))), "model byte {i}");
    }
    let start = cfg.find('\n').unwrap() + 1;
    for i in (start..cfg.len() - 1).step_by(5) {
        let mut c = cfg.clone().into_bytes();
        c[i] = if c[i] == b'0' { b'1' } else { b'0' };
        let Ok(c) = String::from_utf8(c) else { continue };
        assert!(decode(&c, &model).is_err(), "config byte {i}");
    }
    assert!(matches!(decode(&cfg, &model[..model.len() - 3]), Err(Error::Corrupt(_))));
}

#[test]
fn newer_version_names_both_versions() {
    let b = sample_bundle(Family::LinearOls);
    let (cfg, model) = encode(&b).unwrap();
    let bumped = cfg.replacen("format_version=1", "format_version=2", 1);
    match decode(&bumped, &model) {
        Err(e @ Error::Version { found: 2, supported: 1 }) => {
            let msg = e.to_string();
            assert!(msg.contains('2') && msg.contains('1'));
        }
        other => panic!("{other:?}"),
    }
    let mut m = model.clone();
    m[8] = 2;
    assert!(matches!(decode_model(&m), Err(Error::Version { found: 2, supported: 1 })));
}

#[test]
fn stale_temp_file_leaves_bundle_intact() {
    let dir = tempfile::tempdir().unwrap();
    let b = sample_bundle(Family::Knn);
    save_bundle(&b, dir.path()).unwrap();
    // simulate a save that died after writing its temp file
    fs::write(dir.path().join(format!(".{CONFIG_FILE}.tmp")), "garbage").unwrap();
    assert_eq!(load_bundle(dir.path()).unwrap(), b);
    save_bundle(&b, dir.path()).unwrap();
    assert_eq!(load_bundle(dir.path()).unwrap(), b);
}

#[test]
fn missing_and_mismatched_files() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_bundle(dir.path()), Err(Error::Io { .. })));
    let a = sample_bundle(Family::LinearOls);
    let b = sample_bundle(Family::ElasticNet);
    save_bundle(&a, &dir.path().join("a")).unwrap();
    save_bundle(&b, &dir.path().join("b")).unwrap();
    fs::copy(dir.path().join("b").join(MODEL_FILE), dir.path().join("a").join(MODEL_FILE)).unwrap();
    assert!(matches!(load_bundle(&dir.path().join("a")), Err(Error::Corrupt(_))));
}

#[test]
fn validation_rejects_schema_drift() {
    let mut b = sample_bundle(Family::LinearOls);
    b.transform.kept = vec![0, 1, 2, 3, 9];
    assert!(encode(&b).is_err());
    let mut b = sample_bundle(Family::LinearOls);
    b.candidates = vec![2, 1];
    assert!(encode(&b).is_err());
    assert_eq!(b.transform.feature_names.len(), N_FEATURES);
}

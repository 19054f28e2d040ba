use proptest::prelude::*;

use super::*;
use crate::features::{LabelTransform, LabeledDataset};

fn hp(pairs: &[(&str, f64)]) -> Hyperparameters {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn synthetic(n: usize, phase: f64) -> LabeledDataset {
    let rows: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let t = i as f64 + phase;
            [(t * 0.713).sin() * 2.0, (t * 0.291).cos() * 2.0, ((t * 1.37).sin() * 50.0).fract()]
        })
        .collect();
    let y = rows.iter().map(|r| r[0] * r[0] - r[1] + 0.5 * r[2]).collect();
    LabeledDataset::new(FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap()
}

fn default_hp(family: Family) -> Hyperparameters {
    match family {
        Family::RandomForest => hp(&[("n_trees", 8.0), ("max_depth", 6.0)]),
        Family::GradientBoosting => hp(&[("n_rounds", 20.0), ("max_depth", 3.0)]),
        _ => Hyperparameters::new(),
    }
}

#[test]
fn family_names_round_trip() {
    for f in Family::ALL {
        assert_eq!(f.as_str().parse::<Family>().unwrap(), f);
    }
    assert!("svr".parse::<Family>().is_err());
}

#[test]
fn every_family_fits_and_predicts_purely() {
    let d = synthetic(120, 0.0);
    for f in Family::ALL {
        let m = fit(f, &d.x, &d.y, &default_hp(f)).unwrap();
        let q = [0.3, -0.2, 0.5];
        let a = m.predict_row(&q);
        assert!(a.is_finite(), "{f}");
        assert_eq!(a.to_bits(), m.predict_row(&q).to_bits(), "{f}");
        assert!(!m.describe().is_empty());
    }
}

#[test]
fn predict_checks_schema() {
    let d = synthetic(40, 0.0);
    let names = ["a", "b", "c"];
    let m = fit(Family::LinearOls, &d.x, &d.y, &Hyperparameters::new()).unwrap().with_schema(&names);
    let good = FeatureVector::new(vec![0.1, 0.2, 0.3], names.iter().map(|s| s.to_string()).collect());
    assert!(m.predict(&good).is_ok());
    let bad = FeatureVector::new(vec![0.1, 0.2, 0.3], vec!["a".into(), "c".into(), "b".into()]);
    assert!(matches!(m.predict(&bad), Err(Error::Contract(_))));
}

#[test]
fn fit_preconditions() {
    let d = synthetic(9, 0.0);
    assert!(matches!(fit(Family::LinearOls, &d.x, &d.y, &Hyperparameters::new()), Err(Error::Parameter(_))));
    let d = synthetic(20, 0.0);
    assert!(matches!(fit(Family::Knn, &d.x, &d.y, &hp(&[("k", 21.0)])), Err(Error::Parameter(_))));
    assert!(fit(Family::Knn, &d.x, &d.y, &hp(&[("k", 20.0)])).is_ok());
    assert!(matches!(fit(Family::Knn, &d.x, &d.y, &hp(&[("depth", 2.0)])), Err(Error::Parameter(_))));
    let mut y = d.y.clone();
    y[3] = f64::NAN;
    assert!(fit(Family::DecisionTree, &d.x, &y, &Hyperparameters::new()).is_err());
}

#[test]
fn unbounded_tree_memorizes() {
    let d = synthetic(80, 0.0);
    let m = fit(Family::DecisionTree, &d.x, &d.y, &hp(&[("max_depth", f64::INFINITY), ("min_samples_leaf", 1.0)])).unwrap();
    assert_eq!(rmse(&m.predict_matrix(&d.x), &d.y).unwrap(), 0.0);
}

#[test]
fn knn_with_k_equal_n_is_mean() {
    let d = synthetic(30, 0.0);
    let m = fit(Family::Knn, &d.x, &d.y, &hp(&[("k", 30.0)])).unwrap();
    let mean = d.y.iter().sum::<f64>() / 30.0;
    assert!((m.predict_row(&[5.0, 5.0, 5.0]) - mean).abs() < 1e-12);
}

#[test]
fn boosting_zero_rounds_is_mean() {
    let d = synthetic(30, 0.0);
    let m = fit(Family::GradientBoosting, &d.x, &d.y, &hp(&[("n_rounds", 0.0)])).unwrap();
    assert_eq!(m.predict_row(&[0.0, 0.0, 0.0]), d.y.iter().sum::<f64>() / 30.0);
}

#[test]
fn single_unbagged_forest_equals_tree() {
    let d = synthetic(60, 0.0);
    let forest = fit(
        Family::RandomForest,
        &d.x,
        &d.y,
        &hp(&[("n_trees", 1.0), ("bootstrap", 0.0), ("max_features", 3.0), ("max_depth", 5.0)]),
    )
    .unwrap();
    let tree = fit(Family::DecisionTree, &d.x, &d.y, &hp(&[("max_depth", 5.0)])).unwrap();
    for r in d.x.rows() {
        assert_eq!(forest.predict_row(r), tree.predict_row(r));
    }
}

#[test]
fn forest_variance_shrinks_with_size() {
    let train = synthetic(150, 0.0);
    let test = synthetic(100, 0.37);
    let spread = |b: f64| {
        let scores: Vec<f64> = (0..8)
            .map(|s| {
                let m = fit(Family::RandomForest, &train.x, &train.y, &hp(&[("n_trees", b), ("seed", s as f64)])).unwrap();
                rmse(&m.predict_matrix(&test.x), &test.y).unwrap()
            })
            .collect();
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (scores.len() - 1) as f64
    };
    let (v1, v64) = (spread(1.0), spread(64.0));
    assert!(v64 < v1, "B=64 variance {v64} not below B=1 variance {v1}");
}

#[test]
fn rmse_examples() {
    assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
    assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - (12.5f64).sqrt()).abs() < 1e-15);
    assert!((rmse(&[1.5, 2.5, -0.5], &[1.0, 2.0, -1.0]).unwrap() - 0.5).abs() < 1e-15);
    assert!(matches!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::Contract(_))));
    assert!(rmse(&[], &[]).is_err());
    let r = rmse_seconds(&[0.0], &[2f64.ln()], LabelTransform::LogE).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
}

#[test]
fn cross_validation_partitions_and_repeats() {
    let d = synthetic(100, 0.0);
    let h = Hyperparameters::new();
    let a = cross_validate(Family::LinearOls, &d, &h, 5, 4, LabelTransform::Identity).unwrap();
    assert_eq!(a.fold_rmses.len(), 5);
    let mean = a.fold_rmses.iter().sum::<f64>() / 5.0;
    assert_eq!(a.mean_rmse, mean);
    let b = cross_validate(Family::LinearOls, &d, &h, 5, 4, LabelTransform::Identity).unwrap();
    assert_eq!(a, b);
    let folds = crate::features::stratified_folds(&d.y, 5, crate::features::split::DEFAULT_STRATA, 4).unwrap();
    for f in 0..5 {
        assert_eq!(folds.iter().filter(|&&x| x == f).count(), 20);
    }
}

#[test]
fn cross_validation_on_noiseless_linear_data() {
    let rows: Vec<[f64; 2]> = (0..100).map(|i| [i as f64 / 10.0, ((i * 7) % 13) as f64]).collect();
    let y = rows.iter().map(|r| 0.5 * r[0] - 0.25 * r[1] + 4.0).collect();
    let d = LabeledDataset::new(FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap();
    let r = cross_validate(Family::LinearOls, &d, &Hyperparameters::new(), 5, 0, LabelTransform::Identity).unwrap();
    assert!(r.mean_rmse < 1e-6, "{}", r.mean_rmse);
}

#[test]
fn tune_prefers_depth_for_interactions() {
    // XOR of two signs cannot be expressed by a single split.
    let rows: Vec<[f64; 2]> = (0..200)
        .map(|i| {
            let a = ((i * 37) % 101) as f64 / 100.0 - 0.5;
            let b = ((i * 53) % 97) as f64 / 96.0 - 0.5;
            [a, b]
        })
        .collect();
    let y = rows.iter().map(|r| if (r[0] > 0.0) != (r[1] > 0.0) { 1.0 } else { 0.0 }).collect();
    let d = LabeledDataset::new(FeatureMatrix::from_rows(&rows).unwrap(), y).unwrap();
    let grid: Grid = vec![("max_depth".into(), vec![1.0, 8.0])];
    let (best, report) = tune(Family::DecisionTree, &d, &grid, 5, 1, LabelTransform::Identity).unwrap();
    assert_eq!(best["max_depth"], 8.0);
    assert_eq!(report.hyperparameters, best);
}

#[test]
fn tune_singleton_and_ties() {
    let d = synthetic(60, 0.0);
    let grid: Grid = vec![("k".into(), vec![4.0])];
    let (best, _) = tune(Family::Knn, &d, &grid, 3, 0, LabelTransform::Identity).unwrap();
    assert_eq!(best, hp(&[("k", 4.0)]));
    // n_trees ignored by a single fully-grown unbagged tree: identical scores
    let grid: Grid = vec![
        ("n_trees".into(), vec![4.0, 1.0]),
        ("bootstrap".into(), vec![0.0]),
        ("max_features".into(), vec![3.0]),
    ];
    let (best, _) = tune(Family::RandomForest, &d, &grid, 3, 0, LabelTransform::Identity).unwrap();
    assert_eq!(best["n_trees"], 1.0);
}

#[test]
fn grid_points_cartesian_order() {
    let grid: Grid = vec![("a".into(), vec![1.0, 2.0]), ("b".into(), vec![3.0, 4.0, 5.0])];
    let pts = grid_points(&grid);
    assert_eq!(pts.len(), 6);
    assert_eq!(pts[0], hp(&[("a", 1.0), ("b", 3.0)]));
    assert_eq!(pts[1], hp(&[("a", 1.0), ("b", 4.0)]));
    assert_eq!(pts[5], hp(&[("a", 2.0), ("b", 5.0)]));
    assert_eq!(grid_points(&default_grid(Family::LinearOls)).len(), 1);
    assert_eq!(grid_points(&default_grid(Family::GradientBoosting)).len(), 24);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn knn_k1_returns_own_label(seed in 0u64..1000, idx in 0usize..40) {
        let d = synthetic(40, seed as f64 * 0.01);
        let m = fit(Family::Knn, &d.x, &d.y, &hp(&[("k", 1.0)])).unwrap();
        prop_assert_eq!(m.predict_row(d.x.row(idx)), d.y[idx]);
    }

    #[test]
    fn tree_monotone_transform_invariance(seed in 0u64..1000, scale in 0.1f64..10.0, shift in -5.0f64..5.0) {
        let d = synthetic(60, seed as f64 * 0.013);
        let g = |v: f64| (v * scale).exp() + shift;
        let mut moved = d.x.clone();
        for i in 0..moved.n_rows() {
            let v = moved.get(i, 0);
            moved.row_mut(i)[0] = g(v);
        }
        let h = hp(&[("max_depth", 5.0), ("min_samples_leaf", 2.0)]);
        let a = fit(Family::DecisionTree, &d.x, &d.y, &h).unwrap();
        let b = fit(Family::DecisionTree, &moved, &d.y, &h).unwrap();
        let test = synthetic(30, 0.5 + seed as f64);
        for r in test.x.rows() {
            let mut q = r.to_vec();
            q[0] = g(q[0]);
            prop_assert_eq!(a.predict_row(r), b.predict_row(&q));
        }
    }

    #[test]
    fn boosting_training_loss_non_increasing(seed in 0u64..100, eta in 0.01f64..=1.0) {
        let d = synthetic(80, seed as f64);
        let tp = TreeParams { max_depth: 3, min_samples_leaf: 3, ..Default::default() };
        let (_, hist) = fit_boosting(&d.x, &d.y, 100, eta, &tp);
        for w in hist.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-15);
        }
    }
}

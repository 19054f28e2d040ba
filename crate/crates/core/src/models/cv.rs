//! Stratified k-fold cross-validation, grid search and RMSE.

use rayon::prelude::*;

use super::{fit, Family, Hyperparameters, Regressor};
use crate::error::{Error, Result};
use crate::features::split::DEFAULT_STRATA;
use crate::features::{stratified_folds, LabelTransform, LabeledDataset};

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    /// RMSE per held-out fold, in seconds.
    pub fold_rmses: Vec<f64>,
    pub mean_rmse: f64,
}

/// Ordered hyperparameter grid: the first entry varies slowest.
pub type Grid = Vec<(String, Vec<f64>)>;

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(Error::Contract(format!(
            "rmse needs equal non-empty lengths, got {} and {}",
            predictions.len(),
            targets.len()
        )));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

/// RMSE after mapping both label vectors back to seconds.
pub fn rmse_seconds(predicted_labels: &[f64], target_labels: &[f64], label: LabelTransform) -> Result<f64> {
    let p: Vec<f64> = predicted_labels.iter().map(|&v| label.inverse(v)).collect();
    let t: Vec<f64> = target_labels.iter().map(|&v| label.inverse(v)).collect();
    rmse(&p, &t)
}

pub fn cross_validate(
    family: Family,
    data: &LabeledDataset,
    hyperparameters: &Hyperparameters,
    folds: usize,
    seed: u64,
    label: LabelTransform,
) -> Result<CvReport> {
    let assignment = stratified_folds(&data.y, folds, DEFAULT_STRATA, seed)?;
    let fold_rmses = (0..folds)
        .into_par_iter()
        .map(|f| {
            let (train, test): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|&i| assignment[i] != f);
            let tr = data.select(&train);
            let te = data.select(&test);
            let model = fit(family, &tr.x, &tr.y, hyperparameters)?;
            let pred: Vec<f64> = te.x.rows().map(|r| model.predict_row(r)).collect();
            rmse_seconds(&pred, &te.y, label)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean_rmse = fold_rmses.iter().sum::<f64>() / folds as f64;
    Ok(CvReport { family, hyperparameters: hyperparameters.clone(), fold_rmses, mean_rmse })
}

/// Expands a grid into its cartesian product in grid order.
pub fn grid_points(grid: &Grid) -> Vec<Hyperparameters> {
    let mut points = vec![Hyperparameters::new()];
    for (key, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.insert(key.clone(), v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Evaluation-cost proxy: ensemble size first, then depth.
fn cost_proxy(hp: &Hyperparameters) -> (f64, f64) {
    let size = hp.get("n_trees").or_else(|| hp.get("n_rounds")).copied().unwrap_or(0.0);
    let depth = hp.get("max_depth").copied().unwrap_or(0.0);
    (size, depth)
}

/// Exhaustive grid search. Lowest mean RMSE wins; exact ties go to the
/// cheaper model, then to the earlier grid point.
pub fn tune(
    family: Family,
    data: &LabeledDataset,
    grid: &Grid,
    folds: usize,
    seed: u64,
    label: LabelTransform,
) -> Result<(Hyperparameters, CvReport)> {
    let points = grid_points(grid);
    if points.is_empty() {
        return Err(Error::Parameter("empty hyperparameter grid".into()));
    }
    let mut best: Option<CvReport> = None;
    for hp in points {
        let report = cross_validate(family, data, &hp, folds, seed, label)?;
        log::debug!("{family} {:?}: mean rmse {:.6e}", report.hyperparameters, report.mean_rmse);
        let better = match &best {
            None => true,
            Some(b) => {
                report.mean_rmse < b.mean_rmse
                    || (report.mean_rmse == b.mean_rmse
                        && cost_proxy(&report.hyperparameters) < cost_proxy(&b.hyperparameters))
            }
        };
        if better {
            best = Some(report);
        }
    }
    let best = best.expect("at least one grid point");
    Ok((best.hyperparameters.clone(), best))
}

pub fn default_grid(family: Family) -> Grid {
    let g = |k: &str, v: &[f64]| (k.to_string(), v.to_vec());
    match family {
        Family::LinearOls => vec![],
        Family::ElasticNet => vec![g("alpha", &[1e-4, 1e-3, 1e-2, 1e-1, 1.0]), g("l1_ratio", &[0.1, 0.5, 0.9])],
        Family::Knn => vec![g("k", &[3.0, 5.0, 9.0, 15.0])],
        Family::DecisionTree => vec![g("max_depth", &[4.0, 6.0, 8.0, 12.0]), g("min_samples_leaf", &[2.0, 5.0, 10.0])],
        Family::RandomForest => vec![g("n_trees", &[32.0, 64.0, 128.0]), g("max_depth", &[8.0, 12.0])],
        Family::GradientBoosting => vec![
            g("n_rounds", &[100.0, 300.0]),
            g("learning_rate", &[0.05, 0.1]),
            g("max_depth", &[3.0, 5.0, 6.0]),
            g("min_samples_leaf", &[5.0, 10.0]),
        ],
    }
}

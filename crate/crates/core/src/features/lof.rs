//! Local Outlier Factor scores and LOF-based row filtering.

use rayon::prelude::*;

use super::{FeatureMatrix, LabeledDataset};
use crate::error::{Error, Result};

/// Upper bound on local reachability density when reachability distances
/// collapse to zero (duplicate points).
pub const LRD_CAP: f64 = 1e12;
pub const DEFAULT_K: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 1.5;
pub const MAX_DROP_FRACTION: f64 = 0.20;

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

struct Neighborhood {
    k_distance: f64,
    members: Vec<(usize, f64)>,
}

/// k-distance neighbourhood of every point: all other points no farther than
/// the k-th nearest one.
fn neighborhoods(x: &FeatureMatrix, k: usize) -> Vec<Neighborhood> {
    let n = x.n_rows();
    (0..n)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(n),
            |dists, i| {
                dists.clear();
                let p = x.row(i);
                dists.extend((0..n).filter(|&j| j != i).map(|j| distance(p, x.row(j))));
                let mut scratch = dists.clone();
                let (_, kth, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
                let k_distance = *kth;
                let members = (0..n)
                    .filter(|&j| j != i)
                    .zip(dists.iter())
                    .filter(|(_, &d)| d <= k_distance)
                    .map(|(j, &d)| (j, d))
                    .collect();
                Neighborhood {
                    k_distance,
                    members,
                }
            },
        )
        .collect()
}

/// LOF score of every row of `x` under the Euclidean metric.
pub fn lof_scores(x: &FeatureMatrix, k: usize) -> Result<Vec<f64>> {
    let n = x.n_rows();
    if k == 0 || n <= k {
        return Err(Error::Parameter(format!(
            "LOF needs more than k = {k} points, got {n}"
        )));
    }
    let hoods = neighborhoods(x, k);
    let lrd: Vec<f64> = hoods
        .par_iter()
        .map(|h| {
            let total: f64 = h
                .members
                .iter()
                .map(|&(j, d)| hoods[j].k_distance.max(d))
                .sum();
            let mean = total / h.members.len() as f64;
            if mean > 0.0 {
                (1.0 / mean).min(LRD_CAP)
            } else {
                LRD_CAP
            }
        })
        .collect();
    Ok(hoods
        .par_iter()
        .enumerate()
        .map(|(i, h)| {
            let ratio: f64 = h.members.iter().map(|&(j, _)| lrd[j] / lrd[i]).sum();
            ratio / h.members.len() as f64
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct OutlierReport {
    pub kept: Vec<usize>,
    pub dropped: Vec<usize>,
    pub scores: Vec<f64>,
}

/// Drops rows whose LOF exceeds `threshold`. The label is standardised and
/// appended to the features so that runtime outliers are visible to LOF.
/// Aborts when more than 20% of rows would go.
pub fn remove_outliers(
    dataset: &LabeledDataset,
    k: usize,
    threshold: f64,
) -> Result<(LabeledDataset, OutlierReport)> {
    let n = dataset.len();
    let y = &dataset.y;
    let mean = y.iter().sum::<f64>() / n as f64;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let label: Vec<f64> = y.iter().map(|v| (v - mean) / std).collect();
    let space = dataset.x.with_column(&label)?;
    let scores = lof_scores(&space, k)?;
    let (kept, dropped): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| !(scores[i] > threshold));
    if dropped.len() as f64 > MAX_DROP_FRACTION * n as f64 {
        let worst = scores.iter().cloned().fold(f64::NAN, f64::max);
        return Err(Error::DataQuality(format!(
            "LOF would drop {} of {n} rows (> {:.0}%, max score {worst:.2}); timings look noisy, consider re-gathering on a quiet machine",
            dropped.len(),
            MAX_DROP_FRACTION * 100.0
        )));
    }
    log::info!("LOF removed {} of {n} rows", dropped.len());
    let filtered = dataset.select(&kept);
    Ok((
        filtered,
        OutlierReport {
            kept,
            dropped,
            scores,
        },
    ))
}

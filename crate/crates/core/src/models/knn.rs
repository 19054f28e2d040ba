//! Brute-force k-nearest-neighbour regression.

use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnParams {
    pub k: usize,
    pub points: FeatureMatrix,
    pub labels: Vec<f64>,
}

impl KnnParams {
    /// Mean label of the `k` nearest points; distance ties go to the lower index.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut dist: Vec<(f64, usize)> = self
            .points
            .rows()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let mut near = dist[..k].to_vec();
        // fixed summation order keeps predictions reproducible
        near.sort_unstable_by(cmp);
        near.iter().map(|&(_, i)| self.labels[i]).sum::<f64>() / k as f64
    }
}

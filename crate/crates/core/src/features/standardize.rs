use super::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Columns whose zero variance forced std = 1.
    pub clamped: Vec<bool>,
}

/// Per-column mean and sample (n−1) standard deviation.
pub fn fit_standardizer(x: &FeatureMatrix) -> Standardizer {
    let n = x.n_rows();
    let mut means = vec![0.0; x.n_cols()];
    let mut stds = vec![1.0; x.n_cols()];
    let mut clamped = vec![false; x.n_cols()];
    for j in 0..x.n_cols() {
        let col = x.column(j);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std = var.sqrt();
        means[j] = mean;
        if std > 0.0 && std.is_finite() {
            stds[j] = std;
        } else {
            log::warn!("feature column {j} has zero variance; std clamped to 1");
            clamped[j] = true;
        }
    }
    Standardizer {
        means,
        stds,
        clamped,
    }
}

pub fn apply_standardizer(x: &[f64], means: &[f64], stds: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(means.iter().zip(stds))
        .map(|(v, (m, s))| (v - m) / s)
        .collect()
}

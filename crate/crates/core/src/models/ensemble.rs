//! Bagged forests and squared-loss gradient boosting over CART trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{fit_presorted, fit_tree, Presorted, Tree, TreeParams};
use crate::features::FeatureMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub trees: Vec<Tree>,
}

impl ForestParams {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub seed: u64,
}

/// Tree `i` is seeded with `seed + i`, so results do not depend on scheduling.
pub fn fit_forest(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig) -> ForestParams {
    let n = x.n_rows();
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples: Vec<usize> = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let params = TreeParams { seed: rng.random(), ..cfg.tree };
            fit_tree(x, y, &samples, &params)
        })
        .collect();
    ForestParams { trees }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostingParams {
    pub base: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

impl BoostingParams {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }
}

/// Fits `rounds` trees to successive residuals. Returns the model and the
/// training mean squared error after each round (entry 0 is the base).
pub fn fit_boosting(
    x: &FeatureMatrix,
    y: &[f64],
    rounds: usize,
    learning_rate: f64,
    tree: &TreeParams,
) -> (BoostingParams, Vec<f64>) {
    let n = y.len();
    let base = y.iter().sum::<f64>() / n as f64;
    let mut fitted = vec![base; n];
    let all: Vec<usize> = (0..n).collect();
    let presorted = Presorted::new(x, &all);
    let mut residual = vec![0.0; n];
    let mut trees = Vec::with_capacity(rounds);
    let mse = |f: &[f64]| f.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64;
    let mut history = vec![mse(&fitted)];
    for _ in 0..rounds {
        for i in 0..n {
            residual[i] = y[i] - fitted[i];
        }
        let t = fit_presorted(&presorted, &residual, tree);
        for (i, r) in x.rows().enumerate() {
            fitted[i] += learning_rate * t.predict(r);
        }
        trees.push(t);
        history.push(mse(&fitted));
    }
    (BoostingParams { base, learning_rate, trees }, history)
}

//! Regression model zoo with a uniform fit/predict contract.

mod cv;
mod ensemble;
mod knn;
mod linear;
mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub use cv::{cross_validate, default_grid, grid_points, rmse, rmse_seconds, tune, CvReport, Grid};
pub use ensemble::{fit_boosting, fit_forest, BoostingParams, ForestConfig, ForestParams};
pub use knn::KnnParams;
pub use linear::{fit_elasticnet, fit_ols, LinearParams, ENET_MAX_ITER, OLS_JITTER};
pub use tree::{fit_presorted, fit_tree, PreorderNode, Presorted, Tree, TreeParams};

use crate::error::{Error, Result};
use crate::features::{schema_fingerprint, FeatureMatrix, FeatureVector};

/// Minimum number of training rows accepted by [`fit`].
pub const MIN_TRAINING_ROWS: usize = 10;

pub type Hyperparameters = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    LinearOls,
    ElasticNet,
    Knn,
    DecisionTree,
    RandomForest,
    GradientBoosting,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::LinearOls,
        Family::ElasticNet,
        Family::Knn,
        Family::DecisionTree,
        Family::RandomForest,
        Family::GradientBoosting,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::LinearOls => "linear_ols",
            Family::ElasticNet => "elasticnet",
            Family::Knn => "knn",
            Family::DecisionTree => "decision_tree",
            Family::RandomForest => "random_forest",
            Family::GradientBoosting => "gradient_boosting",
        }
    }

    fn allowed_keys(self) -> &'static [&'static str] {
        match self {
            Family::LinearOls => &[],
            Family::ElasticNet => &["alpha", "l1_ratio", "max_iter"],
            Family::Knn => &["k"],
            Family::DecisionTree => &["max_depth", "min_samples_leaf"],
            Family::RandomForest => &["n_trees", "max_depth", "min_samples_leaf", "max_features", "bootstrap", "seed"],
            Family::GradientBoosting => &["n_rounds", "learning_rate", "max_depth", "min_samples_leaf"],
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown model family {s:?}")))
    }
}

/// Learned state, one variant per family shape.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    /// Shared by `linear_ols` and `elasticnet`.
    Linear(LinearParams),
    Knn(KnnParams),
    Tree(Tree),
    Forest(ForestParams),
    Boosting(BoostingParams),
}

/// Anything that maps one model-input row to a predicted label.
pub trait Regressor: Send + Sync {
    fn predict_row(&self, x: &[f64]) -> f64;
    fn n_features(&self) -> usize;

    /// Fingerprint of the input schema, when the model records one.
    fn schema(&self) -> Option<u64> {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionModel {
    pub family: Family,
    pub hyperparameters: Hyperparameters,
    /// Fingerprint of the input schema the model was trained on.
    pub trained_on: u64,
    pub n_features: usize,
    pub params: ModelParams,
}

impl RegressionModel {
    /// Binds the model to the named input schema.
    pub fn with_schema<S: AsRef<str>>(mut self, names: &[S]) -> Self {
        self.trained_on = schema_fingerprint(names);
        self
    }

    /// Predicts one label after checking the vector's schema.
    pub fn predict(&self, x: &FeatureVector) -> Result<f64> {
        if x.fingerprint() != self.trained_on || x.values.len() != self.n_features {
            return Err(Error::Contract(format!(
                "feature schema {:016x} does not match the model's {:016x}",
                x.fingerprint(),
                self.trained_on
            )));
        }
        let p = self.predict_row(&x.values);
        if !p.is_finite() {
            return Err(Error::Numerical(format!("{} produced a non-finite prediction", self.family)));
        }
        Ok(p)
    }

    pub fn predict_matrix(&self, x: &FeatureMatrix) -> Vec<f64> {
        x.rows().map(|r| self.predict_row(r)).collect()
    }

    pub fn describe(&self) -> String {
        let hp: Vec<String> = self.hyperparameters.iter().map(|(k, v)| format!("{k}={v}")).collect();
        let size = match &self.params {
            ModelParams::Linear(p) => format!("{} weights", p.weights.len()),
            ModelParams::Knn(p) => format!("{} stored points", p.labels.len()),
            ModelParams::Tree(t) => format!("{} nodes, depth {}", t.n_nodes(), t.depth()),
            ModelParams::Forest(f) => format!("{} trees", f.trees.len()),
            ModelParams::Boosting(b) => format!("{} rounds", b.trees.len()),
        };
        format!("{} [{}] {} inputs, {}", self.family, hp.join(", "), self.n_features, size)
    }
}

impl Regressor for RegressionModel {
    #[inline]
    fn predict_row(&self, x: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Linear(p) => p.predict(x),
            ModelParams::Knn(p) => p.predict(x),
            ModelParams::Tree(t) => t.predict(x),
            ModelParams::Forest(f) => f.predict(x),
            ModelParams::Boosting(b) => b.predict(x),
        }
    }

    fn n_features(&self) -> usize {
        self.n_features
    }

    fn schema(&self) -> Option<u64> {
        Some(self.trained_on)
    }
}

fn hp_get(hp: &Hyperparameters, key: &str, default: f64) -> f64 {
    hp.get(key).copied().unwrap_or(default)
}

fn hp_count(hp: &Hyperparameters, key: &str, default: usize, min: usize) -> Result<usize> {
    let v = hp_get(hp, key, default as f64);
    if v == f64::INFINITY {
        return Ok(usize::MAX);
    }
    if !(v >= min as f64) || v.fract() != 0.0 {
        return Err(Error::Parameter(format!("{key} must be an integer >= {min}, got {v}")));
    }
    Ok(v as usize)
}

fn tree_params(hp: &Hyperparameters, max_depth: usize, min_leaf: usize) -> Result<TreeParams> {
    Ok(TreeParams {
        max_depth: hp_count(hp, "max_depth", max_depth, 0)?,
        min_samples_leaf: hp_count(hp, "min_samples_leaf", min_leaf, 1)?,
        max_features: None,
        seed: 0,
    })
}

/// Trains one model. The result is bound to a generic `x0..` schema; call
/// [`RegressionModel::with_schema`] to bind real feature names.
pub fn fit(family: Family, x: &FeatureMatrix, y: &[f64], hyperparameters: &Hyperparameters) -> Result<RegressionModel> {
    if x.n_rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.n_rows(), y.len())));
    }
    if y.len() < MIN_TRAINING_ROWS {
        return Err(Error::Parameter(format!(
            "need at least {MIN_TRAINING_ROWS} training rows, got {}",
            y.len()
        )));
    }
    if x.n_cols() == 0 {
        return Err(Error::Parameter("no input features".into()));
    }
    if x.as_flat().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Parameter("training data contains non-finite values".into()));
    }
    let allowed = family.allowed_keys();
    if let Some(k) = hyperparameters.keys().find(|k| !allowed.contains(&k.as_str())) {
        return Err(Error::Parameter(format!("{family} has no hyperparameter {k:?}")));
    }
    let hp = hyperparameters;
    let params = match family {
        Family::LinearOls => ModelParams::Linear(fit_ols(x, y)?),
        Family::ElasticNet => ModelParams::Linear(fit_elasticnet(
            x,
            y,
            hp_get(hp, "alpha", 1e-3),
            hp_get(hp, "l1_ratio", 0.5),
            hp_count(hp, "max_iter", ENET_MAX_ITER, 1)?,
        )?),
        Family::Knn => {
            let k = hp_count(hp, "k", 5, 1)?;
            if k > y.len() {
                return Err(Error::Parameter(format!("k = {k} exceeds {} training rows", y.len())));
            }
            ModelParams::Knn(KnnParams { k, points: x.clone(), labels: y.to_vec() })
        }
        Family::DecisionTree => {
            let tp = tree_params(hp, usize::MAX, 1)?;
            let all: Vec<usize> = (0..y.len()).collect();
            ModelParams::Tree(fit_tree(x, y, &all, &tp))
        }
        Family::RandomForest => {
            let d = x.n_cols();
            let mut tree = tree_params(hp, usize::MAX, 1)?;
            let mf = hp_count(hp, "max_features", 0, 0)?;
            tree.max_features = Some(if mf == 0 { ((d as f64).sqrt().round() as usize).max(1) } else { mf.min(d) });
            let bootstrap = hp_get(hp, "bootstrap", 1.0) != 0.0;
            let seed = hp_count(hp, "seed", 0, 0)? as u64;
            let n_trees = hp_count(hp, "n_trees", 100, 1)?;
            ModelParams::Forest(fit_forest(x, y, &ForestConfig { n_trees, tree, bootstrap, seed }))
        }
        Family::GradientBoosting => {
            let eta = hp_get(hp, "learning_rate", 0.1);
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::Parameter(format!("learning_rate must lie in (0, 1], got {eta}")));
            }
            let rounds = hp_count(hp, "n_rounds", 100, 0)?;
            let tp = tree_params(hp, 3, 1)?;
            ModelParams::Boosting(fit_boosting(x, y, rounds, eta, &tp).0)
        }
    };
    let generic: Vec<String> = (0..x.n_cols()).map(|i| format!("x{i}")).collect();
    Ok(RegressionModel {
        family,
        hyperparameters: hp.clone(),
        trained_on: schema_fingerprint(&generic),
        n_features: x.n_cols(),
        params,
    })
}

#[cfg(test)]
mod tests;

//! Feature construction and the preprocessing pipeline.

pub mod correlation;
pub mod lof;
mod schema;
pub mod split;
mod standardize;
mod table;
mod transform;
pub mod yeo_johnson;

pub use correlation::{correlation_matrix, prune_correlated};
pub use lof::{lof_scores, remove_outliers, OutlierReport};
pub use schema::{
    build_features, raw_features, schema_fingerprint, FeatureVector, FEATURE_NAMES, N_FEATURES,
    THREADS_FEATURE,
};
pub use split::{stratified_folds, stratified_split};
pub use standardize::{apply_standardizer, fit_standardizer, Standardizer};
pub use table::FeatureMatrix;
pub use transform::{fit_preprocessing, LabelTransform, PreprocessConfig, Preprocessed, TransformState};
pub use yeo_johnson::{fit_lambda_mle, yeo_johnson, LambdaFit};

use crate::error::{Error, Result};

/// Feature rows paired with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
}

impl LabeledDataset {
    pub fn new(x: FeatureMatrix, y: Vec<f64>) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} labels",
                x.n_rows(),
                y.len()
            )));
        }
        Ok(LabeledDataset { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }
}

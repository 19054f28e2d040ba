//! Fitted preprocessing: Yeo-Johnson → standardise → LOF filter →
//! correlation pruning, with a replayable [`TransformState`].

use std::fmt;
use std::str::FromStr;

use super::correlation::prune_correlated;
use super::lof::{self, OutlierReport};
use super::schema::{schema_fingerprint, FeatureVector, FEATURE_NAMES, N_FEATURES};
use super::standardize::fit_standardizer;
use super::yeo_johnson::{fit_lambda_mle, yeo_johnson};
use super::{FeatureMatrix, LabeledDataset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelTransform {
    /// Models are trained on ln(runtime seconds).
    #[default]
    LogE,
    Identity,
}

impl LabelTransform {
    pub fn forward(self, runtime_s: f64) -> f64 {
        match self {
            LabelTransform::LogE => runtime_s.ln(),
            LabelTransform::Identity => runtime_s,
        }
    }

    pub fn inverse(self, label: f64) -> f64 {
        match self {
            LabelTransform::LogE => label.exp(),
            LabelTransform::Identity => label,
        }
    }
}

impl fmt::Display for LabelTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelTransform::LogE => "log_e",
            LabelTransform::Identity => "identity",
        })
    }
}

impl FromStr for LabelTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_e" => Ok(LabelTransform::LogE),
            "identity" => Ok(LabelTransform::Identity),
            _ => Err(Error::Parameter(format!("unknown label transform {s:?}"))),
        }
    }
}

/// Everything needed to turn raw features into model inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformState {
    pub feature_names: Vec<String>,
    pub lambdas: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
    /// Indices into `feature_names`, ascending.
    pub kept: Vec<usize>,
    pub label_transform: LabelTransform,
}

impl TransformState {
    /// No-op transform over the full schema (λ = 1, mean 0, std 1).
    pub fn identity(label_transform: LabelTransform) -> Self {
        TransformState {
            feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
            lambdas: vec![1.0; N_FEATURES],
            means: vec![0.0; N_FEATURES],
            stds: vec![1.0; N_FEATURES],
            kept: (0..N_FEATURES).collect(),
            label_transform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.feature_names.len();
        if self.lambdas.len() != d || self.means.len() != d || self.stds.len() != d {
            return Err(Error::Contract("transform tables disagree on feature count".into()));
        }
        if self.stds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Contract("standard deviations must be positive".into()));
        }
        if self.kept.is_empty() || self.kept.windows(2).any(|w| w[0] >= w[1]) || self.kept.iter().any(|&k| k >= d) {
            return Err(Error::Contract("kept features must be a non-empty ascending subset".into()));
        }
        Ok(())
    }

    pub fn kept_features(&self) -> Vec<String> {
        self.kept.iter().map(|&i| self.feature_names[i].clone()).collect()
    }

    pub fn output_fingerprint(&self) -> u64 {
        schema_fingerprint(&self.kept_features())
    }

    pub fn n_outputs(&self) -> usize {
        self.kept.len()
    }

    /// Writes the model input for one raw feature row into `out`.
    #[inline]
    pub fn transform_into(&self, raw: &[f64], out: &mut [f64]) {
        for (o, &j) in out.iter_mut().zip(&self.kept) {
            *o = (yeo_johnson(raw[j], self.lambdas[j]) - self.means[j]) / self.stds[j];
        }
    }

    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.kept.len()];
        self.transform_into(raw, &mut out);
        out
    }

    /// Transforms a named raw vector, checking it uses this schema.
    pub fn apply(&self, raw: &FeatureVector) -> Result<FeatureVector> {
        if raw.schema != self.feature_names {
            return Err(Error::Contract("feature vector schema differs from transform schema".into()));
        }
        Ok(FeatureVector::new(self.transform(&raw.values), self.kept_features()))
    }

    pub fn transform_matrix(&self, raw: &FeatureMatrix) -> FeatureMatrix {
        let mut out = FeatureMatrix::new(self.kept.len());
        let mut buf = vec![0.0; self.kept.len()];
        for r in raw.rows() {
            self.transform_into(r, &mut buf);
            out.push_row(&buf).expect("width matches");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    pub label_transform: LabelTransform,
    pub lof_k: usize,
    pub lof_threshold: f64,
    pub correlation_threshold: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            label_transform: LabelTransform::LogE,
            lof_k: lof::DEFAULT_K,
            lof_threshold: lof::DEFAULT_THRESHOLD,
            correlation_threshold: super::correlation::DEFAULT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Preprocessed {
    pub state: TransformState,
    /// Model inputs for the surviving rows, kept columns only.
    pub data: LabeledDataset,
    /// Original row indices of `data`.
    pub rows: Vec<usize>,
    pub outliers: OutlierReport,
    pub degenerate_features: Vec<String>,
}

/// Fits the full preprocessing pipeline on raw features and runtimes.
pub fn fit_preprocessing(
    raw: &FeatureMatrix,
    runtimes_s: &[f64],
    config: &PreprocessConfig,
) -> Result<Preprocessed> {
    if raw.n_cols() != N_FEATURES {
        return Err(Error::Shape(format!("expected {N_FEATURES} raw features, got {}", raw.n_cols())));
    }
    if runtimes_s.len() != raw.n_rows() || runtimes_s.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Contract("need one positive runtime per row".into()));
    }
    let mut lambdas = Vec::with_capacity(N_FEATURES);
    let mut degenerate = Vec::new();
    for j in 0..N_FEATURES {
        let fit = fit_lambda_mle(&raw.column(j))?;
        if fit.degenerate {
            degenerate.push(FEATURE_NAMES[j].to_string());
        }
        lambdas.push(fit.lambda);
    }
    let mut gaussianized = raw.clone();
    for i in 0..gaussianized.n_rows() {
        for (v, &l) in gaussianized.row_mut(i).iter_mut().zip(&lambdas) {
            *v = yeo_johnson(*v, l);
        }
    }
    let scaler = fit_standardizer(&gaussianized);
    let mut state = TransformState {
        feature_names: FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
        lambdas,
        means: scaler.means,
        stds: scaler.stds,
        kept: (0..N_FEATURES).collect(),
        label_transform: config.label_transform,
    };
    let standardized = state.transform_matrix(raw);
    let labels: Vec<f64> = runtimes_s.iter().map(|&t| config.label_transform.forward(t)).collect();
    let full = LabeledDataset::new(standardized, labels)?;
    let (inliers, outliers) = lof::remove_outliers(&full, config.lof_k, config.lof_threshold)?;
    state.kept = prune_correlated(&inliers.x, config.correlation_threshold);
    // replay from raw so training inputs match runtime inputs bit for bit
    let x = state.transform_matrix(&raw.select_rows(&outliers.kept));
    let data = LabeledDataset::new(x, inliers.y)?;
    Ok(Preprocessed {
        state,
        data,
        rows: outliers.kept.clone(),
        outliers,
        degenerate_features: degenerate,
    })
}

//! The install-time training pipeline: split, preprocess, tune every
//! family, score by estimated speedup, select, bundle.

use std::collections::BTreeMap;

use adsala_core::bundle::{ModelBundle, FORMAT_VERSION};
use adsala_core::features::split::DEFAULT_STRATA;
use adsala_core::features::{
    fit_preprocessing, raw_features, stratified_split, FeatureMatrix, PreprocessConfig, N_FEATURES,
};
use adsala_core::gemm::GemmShape;
use adsala_core::harness::{measure_eval_latency, TimingDataset};
use adsala_core::models::{default_grid, fit, tune, CvReport, Family, Grid, Hyperparameters, RegressionModel};
use adsala_core::sampler::DEFAULT_MEM_CAP_BYTES;
use adsala_core::selection::{estimate_speedup, select_model, SpeedupEstimate};
use adsala_core::{Error, Result};

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub families: Vec<Family>,
    /// Per-family grid overrides; other families use the defaults.
    pub grids: BTreeMap<Family, Grid>,
    pub folds: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub preprocess: PreprocessConfig,
    pub eval_trials: usize,
    pub train_mem_cap_bytes: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            families: Family::ALL.to_vec(),
            grids: BTreeMap::new(),
            folds: 5,
            seed: 0,
            test_fraction: 0.3,
            preprocess: PreprocessConfig::default(),
            eval_trials: 1000,
            train_mem_cap_bytes: DEFAULT_MEM_CAP_BYTES,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FamilyResult {
    pub hyperparameters: Hyperparameters,
    pub cv: CvReport,
    pub model: RegressionModel,
    pub estimate: SpeedupEstimate,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub results: Vec<FamilyResult>,
    pub selected: usize,
    pub train_shapes: Vec<GemmShape>,
    pub test_shapes: Vec<GemmShape>,
    pub rows_dropped: usize,
}

impl TrainOutcome {
    pub fn estimates(&self) -> Vec<SpeedupEstimate> {
        self.results.iter().map(|r| r.estimate.clone()).collect()
    }
}

/// Splits by shape so that every thread count of a test shape stays out of
/// training. Strata follow the runtime at the largest thread count.
fn split_shapes(ds: &TimingDataset, max_t: usize, cfg: &TrainConfig) -> Result<(Vec<GemmShape>, Vec<GemmShape>)> {
    let by_shape = ds.by_shape();
    let shapes: Vec<GemmShape> = by_shape.keys().copied().collect();
    let labels: Vec<f64> = by_shape
        .values()
        .map(|rt| rt.get(&max_t).copied().unwrap_or_else(|| rt.values().copied().fold(f64::INFINITY, f64::min)))
        .collect();
    let strata = DEFAULT_STRATA.min(shapes.len());
    let (train, test) = stratified_split(&labels, cfg.test_fraction, strata, cfg.seed)?;
    Ok((train.iter().map(|&i| shapes[i]).collect(), test.iter().map(|&i| shapes[i]).collect()))
}

pub fn train(ds: &TimingDataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    ds.validate()?;
    if cfg.families.is_empty() {
        return Err(Error::Parameter("no model families requested".into()));
    }
    let candidates = ds.thread_counts();
    let max_t = *candidates.last().ok_or_else(|| Error::Parameter("empty dataset".into()))?;
    let (train_shapes, test_shapes) = split_shapes(ds, max_t, cfg)?;
    if test_shapes.is_empty() || train_shapes.is_empty() {
        return Err(Error::Parameter(format!(
            "dataset of {} shapes is too small to split",
            train_shapes.len() + test_shapes.len()
        )));
    }
    let train_ds = ds.restrict_to(&train_shapes);
    let test_ds = ds.restrict_to(&test_shapes);

    let mut raw = FeatureMatrix::new(N_FEATURES);
    let mut runtimes = Vec::with_capacity(train_ds.records.len());
    for r in &train_ds.records {
        raw.push_row(&raw_features(r.shape, r.n_threads))?;
        runtimes.push(r.runtime_s);
    }
    let pre = fit_preprocessing(&raw, &runtimes, &cfg.preprocess)?;
    let rows_dropped = pre.outliers.dropped.len();
    log::info!(
        "preprocessing: {} training rows, {} outliers dropped, kept features {:?}",
        runtimes.len(),
        rows_dropped,
        pre.state.kept_features()
    );
    if !pre.degenerate_features.is_empty() {
        log::warn!("constant features: {:?}", pre.degenerate_features);
    }
    let kept_names = pre.state.kept_features();
    let label = cfg.preprocess.label_transform;

    let mut results = Vec::new();
    for &family in &cfg.families {
        let grid = cfg.grids.get(&family).cloned().unwrap_or_else(|| default_grid(family));
        let (hp, cv) = tune(family, &pre.data, &grid, cfg.folds, cfg.seed, label)?;
        let model = fit(family, &pre.data.x, &pre.data.y, &hp)?.with_schema(&kept_names);
        let t_eval = measure_eval_latency(&model, &pre.state, &candidates, cfg.eval_trials, cfg.seed)?;
        let estimate = estimate_speedup(family, &model, &pre.state, &test_ds, &candidates, t_eval)?;
        log::info!(
            "{family}: cv rmse {:.3e} s, t_eval {:.3e} s, mean speedup {:.4}",
            cv.mean_rmse,
            t_eval,
            estimate.mean_speedup
        );
        results.push(FamilyResult { hyperparameters: hp, cv, model, estimate });
    }
    let estimates: Vec<SpeedupEstimate> = results.iter().map(|r| r.estimate.clone()).collect();
    let selected = select_model(&estimates)?;
    let chosen = &results[selected];
    let bundle = ModelBundle {
        format_version: FORMAT_VERSION,
        host_descriptor: ds.host_descriptor.clone(),
        max_threads: ds.max_threads.max(max_t),
        train_mem_cap_bytes: cfg.train_mem_cap_bytes,
        candidates,
        transform: pre.state.clone(),
        model: chosen.model.clone(),
        selection: Some(chosen.estimate.clone()),
    };
    Ok(TrainOutcome { bundle, results, selected, train_shapes, test_shapes, rows_dropped })
}

/// Plain-text rendering of the per-family selection table.
pub fn format_selection_table(estimates: &[SpeedupEstimate], selected: usize) -> String {
    let mut out = format!(
        "{:<18} {:>11} {:>11} {:>9} {:>9} {:>9} {:>9}\n",
        "family", "rmse_s", "t_eval_s", "agg_no", "agg_with", "mean_no", "mean_with"
    );
    for (i, e) in estimates.iter().enumerate() {
        out.push_str(&format!(
            "{:<18} {:>11.3e} {:>11.3e} {:>9.4} {:>9.4} {:>9.4} {:>9.4}{}\n",
            e.family.as_str(),
            e.rmse_s,
            e.t_eval_s,
            e.aggregate_speedup_no_overhead,
            e.aggregate_speedup,
            e.est_speedup_no_overhead,
            e.est_speedup_with_overhead,
            if i == selected { "  <- selected" } else { "" }
        ));
    }
    out
}

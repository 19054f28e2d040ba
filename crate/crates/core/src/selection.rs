//! Scoring trained models by estimated speedup over the always-max-threads
//! policy, including the cost of evaluating the model itself.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::TransformState;
use crate::harness::TimingDataset;
use crate::models::{rmse, Family, Regressor};
use crate::runtime::{predict_runtime, SelectionPass};

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedupEstimate {
    pub family: Family,
    /// RMSE of predicted against measured runtimes over the test records, seconds.
    pub rmse_s: f64,
    /// Mean latency of one thread-selection pass, seconds.
    pub t_eval_s: f64,
    /// Mean per-shape speedup ignoring evaluation time.
    pub est_speedup_no_overhead: f64,
    /// Mean per-shape speedup including evaluation time.
    pub est_speedup_with_overhead: f64,
    /// Σ t_original / Σ t_adsala, ignoring evaluation time.
    pub aggregate_speedup_no_overhead: f64,
    /// Σ t_original / Σ (t_adsala + t_eval).
    pub aggregate_speedup: f64,
    /// Selection key; equal to `est_speedup_with_overhead`.
    pub mean_speedup: f64,
    pub n_shapes: usize,
}

/// s = t_original / (t_adsala + t_eval)
pub fn speedup(t_original: f64, t_adsala: f64, t_eval: f64) -> f64 {
    t_original / (t_adsala + t_eval)
}

/// Measured runtime at `t`, or at the nearest measured count (lower on ties).
fn lookup(runtimes: &BTreeMap<usize, f64>, t: usize) -> Option<(usize, f64)> {
    if let Some(&r) = runtimes.get(&t) {
        return Some((t, r));
    }
    let below = runtimes.range(..t).next_back();
    let above = runtimes.range(t..).next();
    let pick = match (below, above) {
        (Some(b), Some(a)) => {
            if t - b.0 <= a.0 - t {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    Some((*pick.0, *pick.1))
}

/// First index of the smallest finite value (0 when none is finite).
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] || !values[best].is_finite() && v.is_finite() {
            best = i;
        }
    }
    best
}

/// Scores `model` on the measured test shapes. Choices are the strict
/// argmin of predicted runtime, without the runtime's tie band, so a perfect
/// model scores exactly the grid optimum. Every test shape takes the
/// model's choice among `candidates`; its runtime is read from the
/// measured grid rather than re-run.
pub fn estimate_speedup<M: Regressor + ?Sized>(
    family: Family,
    model: &M,
    transform: &TransformState,
    test_set: &TimingDataset,
    candidates: &[usize],
    t_eval_s: f64,
) -> Result<SpeedupEstimate> {
    if test_set.records.is_empty() {
        return Err(Error::Parameter("empty test set".into()));
    }
    if !(t_eval_s >= 0.0 && t_eval_s.is_finite()) {
        return Err(Error::Parameter(format!("t_eval must be finite and non-negative, got {t_eval_s}")));
    }
    let mut cands = candidates.to_vec();
    cands.sort_unstable();
    cands.dedup();
    let max_t = *cands.last().ok_or_else(|| Error::Parameter("no candidates".into()))?;
    let mut pass = SelectionPass::new(transform, &cands)?;

    let mut predicted = Vec::with_capacity(test_set.records.len());
    let mut measured = Vec::with_capacity(test_set.records.len());
    for r in &test_set.records {
        predicted.push(predict_runtime(model, transform, r.shape, r.n_threads));
        measured.push(r.runtime_s);
    }
    let rmse_s = rmse(&predicted, &measured)?;

    let by_shape = test_set.by_shape();
    let (mut sum_orig, mut sum_ad, mut sum_ad_eval) = (0.0, 0.0, 0.0);
    let (mut mean_no, mut mean_with) = (0.0, 0.0);
    for (shape, runtimes) in &by_shape {
        let (t_max_used, t_orig) = lookup(runtimes, max_t).expect("shape has at least one record");
        if t_max_used != max_t {
            log::warn!("{shape}: no measurement at {max_t} threads, using {t_max_used}");
        }
        let chosen = cands[argmin(pass.predict(model, *shape))];
        let (t_used, t_ad) = lookup(runtimes, chosen).expect("shape has at least one record");
        if t_used != chosen {
            log::warn!("{shape}: no measurement at chosen {chosen} threads, using {t_used}");
        }
        sum_orig += t_orig;
        sum_ad += t_ad;
        sum_ad_eval += t_ad + t_eval_s;
        mean_no += speedup(t_orig, t_ad, 0.0);
        mean_with += speedup(t_orig, t_ad, t_eval_s);
    }
    let n = by_shape.len() as f64;
    Ok(SpeedupEstimate {
        family,
        rmse_s,
        t_eval_s,
        est_speedup_no_overhead: mean_no / n,
        est_speedup_with_overhead: mean_with / n,
        aggregate_speedup_no_overhead: sum_orig / sum_ad,
        aggregate_speedup: sum_orig / sum_ad_eval,
        mean_speedup: mean_with / n,
        n_shapes: by_shape.len(),
    })
}

/// Index of the estimate with the highest mean speedup including overhead;
/// ties go to lower evaluation time, then lower RMSE, then list order.
pub fn select_model(estimates: &[SpeedupEstimate]) -> Result<usize> {
    if estimates.is_empty() {
        return Err(Error::Parameter("no candidate models to select from".into()));
    }
    let mut best = 0;
    for (i, e) in estimates.iter().enumerate().skip(1) {
        let b = &estimates[best];
        let better = e.mean_speedup > b.mean_speedup
            || (e.mean_speedup == b.mean_speedup
                && (e.t_eval_s < b.t_eval_s || (e.t_eval_s == b.t_eval_s && e.rmse_s < b.rmse_s)));
        if better {
            best = i;
        }
    }
    Ok(best)
}

pub const REPORT_HEADER: &str = "family,rmse_s,t_eval_s,speedup_no_overhead_aggregate,speedup_with_overhead_aggregate,speedup_no_overhead_mean,speedup_with_overhead_mean,selected";

pub fn selection_report_csv(estimates: &[SpeedupEstimate], selected: Option<usize>) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for (i, e) in estimates.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:e},{:e},{},{},{},{},{}",
            e.family,
            e.rmse_s,
            e.t_eval_s,
            e.aggregate_speedup_no_overhead,
            e.aggregate_speedup,
            e.est_speedup_no_overhead,
            e.est_speedup_with_overhead,
            u8::from(selected == Some(i))
        );
    }
    out
}

pub fn write_selection_report(estimates: &[SpeedupEstimate], selected: Option<usize>, path: &Path) -> Result<()> {
    std::fs::write(path, selection_report_csv(estimates, selected))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

//! Label-stratified train/test splitting and CV fold assignment.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.30;
pub const DEFAULT_STRATA: usize = 10;

/// Row indices grouped into `n_strata` equal-count label-quantile bins,
/// ordered by label within each bin (ties by row index).
pub fn quantile_strata(labels: &[f64], n_strata: usize) -> Vec<Vec<usize>> {
    let n = labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| labels[a].total_cmp(&labels[b]).then(a.cmp(&b)));
    let mut strata = vec![Vec::new(); n_strata.max(1)];
    for (rank, i) in order.into_iter().enumerate() {
        strata[rank * n_strata.max(1) / n.max(1)].push(i);
    }
    strata
}

/// Returns `(train, test)` row indices. Each stratum contributes
/// `round(test_fraction × size)` rows to the test side.
pub fn stratified_split(
    labels: &[f64],
    test_fraction: f64,
    n_strata: usize,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_strata == 0 || labels.len() < n_strata {
        return Err(Error::Parameter(format!(
            "need at least {n_strata} rows for {n_strata} strata, got {}",
            labels.len()
        )));
    }
    if !(0.0..=1.0).contains(&test_fraction) {
        return Err(Error::Parameter(format!("test fraction {test_fraction} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut stratum in quantile_strata(labels, n_strata) {
        stratum.shuffle(&mut rng);
        let n_test = (test_fraction * stratum.len() as f64).round() as usize;
        test.extend_from_slice(&stratum[..n_test]);
        train.extend_from_slice(&stratum[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Fold id for every row. Strata are shuffled and dealt round-robin with a
/// running offset, so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[f64], folds: usize, n_strata: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 || labels.len() < folds {
        return Err(Error::Parameter(format!(
            "need 2 <= folds <= rows, got {folds} folds for {} rows",
            labels.len()
        )));
    }
    let n_strata = n_strata.clamp(1, labels.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for mut stratum in quantile_strata(labels, n_strata) {
        stratum.shuffle(&mut rng);
        for i in stratum {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

use super::FeatureMatrix;

pub const DEFAULT_THRESHOLD: f64 = 0.80;

/// Pearson correlation matrix; pairs involving a constant column get 0.
pub fn correlation_matrix(x: &FeatureMatrix) -> Vec<Vec<f64>> {
    let d = x.n_cols();
    let n = x.n_rows() as f64;
    let cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let c = x.column(j);
            let mean = c.iter().sum::<f64>() / n;
            c.into_iter().map(|v| v - mean).collect()
        })
        .collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
    let mut r = vec![vec![0.0; d]; d];
    for i in 0..d {
        r[i][i] = 1.0;
        for j in i + 1..d {
            let denom = norms[i] * norms[j];
            let v = if denom > 0.0 {
                let dot: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
                (dot / denom).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            r[i][j] = v;
            r[j][i] = v;
        }
    }
    r
}

/// Repeatedly takes the most correlated pair above `threshold` and drops the
/// member with the larger summed |r| against the other kept columns (the
/// later column on ties). Returns surviving column indices in input order.
pub fn prune_correlated(x: &FeatureMatrix, threshold: f64) -> Vec<usize> {
    let r = correlation_matrix(x);
    prune_with_matrix(&r, threshold)
}

pub fn prune_with_matrix(r: &[Vec<f64>], threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..r.len()).collect();
    loop {
        let mut worst: Option<(usize, usize, f64)> = None;
        for (a, &i) in kept.iter().enumerate() {
            for &j in &kept[a + 1..] {
                let v = r[i][j].abs();
                if v > threshold && worst.is_none_or(|(_, _, w)| v > w) {
                    worst = Some((i, j, v));
                }
            }
        }
        let Some((i, j, _)) = worst else {
            return kept;
        };
        let total = |f: usize| -> f64 {
            kept.iter().filter(|&&o| o != f).map(|&o| r[f][o].abs()).sum()
        };
        let drop = if total(i) > total(j) { i } else { j };
        kept.retain(|&f| f != drop);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: &[Vec<f64>]) -> FeatureMatrix {
        let n = cols[0].len();
        let rows: Vec<Vec<f64>> = (0..n).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        FeatureMatrix::from_rows(&rows).unwrap()
    }

    fn wave(n: usize, f: f64) -> Vec<f64> {
        (0..n).map(|i| (i as f64 * f).sin()).collect()
    }

    #[test]
    fn duplicate_column_dropped_once() {
        let a = wave(200, 0.1);
        let b = wave(200, 1.7);
        let kept = prune_correlated(&table(&[a.clone(), b, a]), 0.8);
        assert_eq!(kept, vec![0, 1]);
    }

    #[test]
    fn uncorrelated_is_identity() {
        let kept = prune_correlated(&table(&[wave(300, 0.1), wave(300, 1.3), wave(300, 2.9)]), 0.8);
        assert_eq!(kept, vec![0, 1, 2]);
    }

    #[test]
    fn highest_total_correlation_goes_first() {
        // |r| ≈ 0.95 pairwise, with column 2 the most central
        let r = vec![
            vec![1.0, 0.93, 0.96],
            vec![0.93, 1.0, 0.95],
            vec![0.96, 0.95, 1.0],
        ];
        // worst pair (0,2); totals: col0 = 0.93+0.96, col2 = 0.96+0.95 → drop 2
        // then (0,1) at 0.93: totals equal → drop later (1)
        assert_eq!(prune_with_matrix(&r, 0.8), vec![0]);
        let r = vec![
            vec![1.0, 0.95, 0.97],
            vec![0.95, 1.0, 0.5],
            vec![0.97, 0.5, 1.0],
        ];
        assert_eq!(prune_with_matrix(&r, 0.8), vec![1, 2]);
    }

    #[test]
    fn constant_columns_are_uncorrelated() {
        let kept = prune_correlated(&table(&[vec![1.0; 50], wave(50, 0.3)]), 0.8);
        assert_eq!(kept, vec![0, 1]);
    }
}

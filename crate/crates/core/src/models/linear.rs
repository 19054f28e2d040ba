//! Ordinary least squares and elastic-net linear models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

pub const OLS_JITTER: f64 = 1e-8;
pub const ENET_TOL: f64 = 1e-6;
pub const ENET_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearParams {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl LinearParams {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }
}

fn column_means(x: &FeatureMatrix) -> Vec<f64> {
    let n = x.n_rows() as f64;
    let mut means = vec![0.0; x.n_cols()];
    for r in x.rows() {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    means
}

/// Least squares via Cholesky on centred normal equations plus a small ridge.
pub fn fit_ols(x: &FeatureMatrix, y: &[f64]) -> Result<LinearParams> {
    let (n, d) = (x.n_rows(), x.n_cols());
    let mx = column_means(x);
    let my = y.iter().sum::<f64>() / n as f64;
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DVector::<f64>::zeros(d);
    let mut c = vec![0.0; d];
    for (r, &yi) in x.rows().zip(y) {
        for j in 0..d {
            c[j] = r[j] - mx[j];
        }
        let yc = yi - my;
        for a in 0..d {
            xty[a] += c[a] * yc;
            for b in 0..=a {
                xtx[(a, b)] += c[a] * c[b];
            }
        }
    }
    for a in 0..d {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
        xtx[(a, a)] += OLS_JITTER;
    }
    let chol = xtx
        .cholesky()
        .ok_or_else(|| Error::Numerical("normal equations are not positive definite".into()))?;
    let w = chol.solve(&xty);
    let weights: Vec<f64> = w.iter().copied().collect();
    let intercept = my - weights.iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>();
    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numerical("least-squares solution is not finite".into()));
    }
    Ok(LinearParams { weights, intercept })
}

/// Coordinate descent on (1/2n)|y - Xw|² + α(ρ|w|₁ + (1-ρ)/2 |w|²),
/// stopped when the duality gap falls below `tol · |y|² / n`.
pub fn fit_elasticnet(x: &FeatureMatrix, y: &[f64], alpha: f64, l1_ratio: f64, max_iter: usize) -> Result<LinearParams> {
    if !(alpha >= 0.0) || !(0.0..=1.0).contains(&l1_ratio) {
        return Err(Error::Parameter(format!("elasticnet needs alpha >= 0 and l1_ratio in [0, 1], got {alpha}, {l1_ratio}")));
    }
    let (n, d) = (x.n_rows(), x.n_cols());
    let nf = n as f64;
    let mx = column_means(x);
    let my = y.iter().sum::<f64>() / nf;
    // column-major centred copy
    let cols: Vec<Vec<f64>> = (0..d).map(|j| x.rows().map(|r| r[j] - mx[j]).collect()).collect();
    let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum()).collect();
    let mut resid: Vec<f64> = y.iter().map(|v| v - my).collect();
    let y_norm2: f64 = resid.iter().map(|v| v * v).sum();
    let l1 = alpha * l1_ratio * nf;
    let l2 = alpha * (1.0 - l1_ratio) * nf;
    let tol = ENET_TOL * y_norm2;
    let mut w = vec![0.0; d];

    for _ in 0..max_iter.max(1) {
        let mut max_step = 0.0f64;
        let mut max_w = 0.0f64;
        for j in 0..d {
            if norms[j] == 0.0 {
                continue;
            }
            let old = w[j];
            let rho: f64 = cols[j].iter().zip(&resid).map(|(c, r)| c * r).sum::<f64>() + norms[j] * old;
            let new = soft_threshold(rho, l1) / (norms[j] + l2);
            if new != old {
                let delta = new - old;
                for (r, c) in resid.iter_mut().zip(&cols[j]) {
                    *r -= delta * c;
                }
                w[j] = new;
            }
            max_step = max_step.max((new - old).abs());
            max_w = max_w.max(new.abs());
        }
        if max_w == 0.0 || max_step / max_w < ENET_TOL {
            if duality_gap(&cols, &resid, &w, l1, l2) <= tol {
                break;
            }
        }
    }
    let intercept = my - w.iter().zip(&mx).map(|(w, m)| w * m).sum::<f64>();
    if !intercept.is_finite() || w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("elasticnet solution is not finite".into()));
    }
    Ok(LinearParams { weights: w, intercept })
}

#[inline]
fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Gap for the unscaled objective ½|r|² + l1|w|₁ + ½ l2|w|².
fn duality_gap(cols: &[Vec<f64>], resid: &[f64], w: &[f64], l1: f64, l2: f64) -> f64 {
    let xtr: Vec<f64> = cols
        .iter()
        .zip(w)
        .map(|(c, wj)| c.iter().zip(resid).map(|(a, r)| a * r).sum::<f64>() - l2 * wj)
        .collect();
    let dual_norm = xtr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let r_norm2: f64 = resid.iter().map(|v| v * v).sum();
    let w_norm2: f64 = w.iter().map(|v| v * v).sum();
    let (scale, const_term) = if dual_norm > l1 {
        let s = l1 / dual_norm;
        (s, 0.5 * (1.0 + s * s) * r_norm2)
    } else {
        (1.0, r_norm2)
    };
    let w_l1: f64 = w.iter().map(|v| v.abs()).sum();
    let r_dot_y = resid_dot_target(cols, resid, w);
    const_term + l1 * w_l1 - scale * r_dot_y + 0.5 * l2 * (1.0 + scale * scale) * w_norm2
}

/// rᵀy where y = r + Xw (centred).
fn resid_dot_target(cols: &[Vec<f64>], resid: &[f64], w: &[f64]) -> f64 {
    let mut total: f64 = resid.iter().map(|r| r * r).sum();
    for (c, wj) in cols.iter().zip(w) {
        if *wj != 0.0 {
            total += wj * c.iter().zip(resid).map(|(a, r)| a * r).sum::<f64>();
        }
    }
    total
}

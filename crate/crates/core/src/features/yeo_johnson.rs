//! Yeo-Johnson power transform and maximum-likelihood fitting of λ.

use crate::error::{Error, Result};

pub const LAMBDA_BRACKET: (f64, f64) = (-5.0, 5.0);
const GOLDEN_TOL: f64 = 1e-4;

pub fn yeo_johnson(x: f64, lambda: f64) -> f64 {
    if lambda == 1.0 {
        // exact identity; the general branch is off by an ulp or so
        return x;
    }
    if x >= 0.0 {
        if lambda == 0.0 {
            x.ln_1p()
        } else {
            (lambda * x.ln_1p()).exp_m1() / lambda
        }
    } else {
        let p = 2.0 - lambda;
        if p == 0.0 {
            -(-x).ln_1p()
        } else {
            -(p * (-x).ln_1p()).exp_m1() / p
        }
    }
}

/// Profile log-likelihood of λ under a Gaussian model of the transformed
/// values, including the Jacobian term.
pub fn log_likelihood(column: &[f64], lambda: f64) -> f64 {
    let n = column.len() as f64;
    let transformed: Vec<f64> = column.iter().map(|&x| yeo_johnson(x, lambda)).collect();
    let mean = transformed.iter().sum::<f64>() / n;
    let var = transformed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if !var.is_finite() || var <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let jacobian: f64 = column.iter().map(|&x| x.signum() * x.abs().ln_1p()).sum();
    -0.5 * n * var.ln() + (lambda - 1.0) * jacobian
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaFit {
    pub lambda: f64,
    /// Set for constant columns, where any λ fits equally and 1 is returned.
    pub degenerate: bool,
}

/// Golden-section maximisation of [`log_likelihood`] over [-5, 5].
pub fn fit_lambda_mle(column: &[f64]) -> Result<LambdaFit> {
    if column.len() < 3 {
        return Err(Error::Parameter(format!(
            "need at least 3 values to fit lambda, got {}",
            column.len()
        )));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("column contains non-finite values".into()));
    }
    let first = column[0];
    if column.iter().all(|&v| v == first) {
        return Ok(LambdaFit {
            lambda: 1.0,
            degenerate: true,
        });
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = LAMBDA_BRACKET;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = log_likelihood(column, x1);
    let mut f2 = log_likelihood(column, x2);
    while hi - lo > GOLDEN_TOL {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = log_likelihood(column, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = log_likelihood(column, x1);
        }
    }
    Ok(LambdaFit {
        lambda: 0.5 * (lo + hi),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn closed_forms() {
        assert_eq!(yeo_johnson(5.0, 1.0), 5.0);
        assert!((yeo_johnson(3.0, 0.0) - 4f64.ln()).abs() < 1e-12);
        assert!((yeo_johnson(-3.0, 2.0) + 4f64.ln()).abs() < 1e-12);
        assert!((yeo_johnson(-3.0, 1.0) + 3.0).abs() < 1e-12);
        assert!((yeo_johnson(2.0, 2.0) - 4.0).abs() < 1e-12);
        assert_eq!(yeo_johnson(0.0, 0.7), 0.0);
        assert_eq!(yeo_johnson(0.0, 2.0), 0.0);
    }

    #[test]
    fn continuity_at_branch_points() {
        let check = |x: f64, lam: f64| {
            let f = yeo_johnson(x, lam);
            assert!((yeo_johnson(x, lam + 1e-6) - f).abs() < 1e-4, "x={x} lam={lam}");
            assert!((yeo_johnson(x, lam - 1e-6) - f).abs() < 1e-4, "x={x} lam={lam}");
        };
        for x in [-3.0, -0.5, 0.0, 0.5, 3.0] {
            check(x, 0.0);
            check(x, 2.0);
        }
        // the special-cased side of each branch point, far from zero
        for x in [50.0, 1e4] {
            check(x, 0.0);
            check(-x, 2.0);
        }
    }

    #[test]
    fn gaussian_sample_needs_near_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let col: Vec<f64> = (0..5000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let fit = fit_lambda_mle(&col).unwrap();
        assert!((0.8..=1.2).contains(&fit.lambda), "{}", fit.lambda);
        assert!(!fit.degenerate);
    }

    #[test]
    fn lognormal_sample_is_log_like() {
        // values well above 1, where ln(x + 1) ≈ ln(x)
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let col: Vec<f64> = (0..5000)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (5.0 + z).exp()
            })
            .collect();
        let fit = fit_lambda_mle(&col).unwrap();
        assert!((-0.3..=0.3).contains(&fit.lambda), "{}", fit.lambda);
    }

    fn normal_quantiles(n: usize) -> Vec<f64> {
        use statrs::distribution::{ContinuousCDF, Normal};
        let z = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|i| z.inverse_cdf((i as f64 + 0.5) / n as f64)).collect()
    }

    /// Reference λ values from scipy.stats.yeojohnson on the same inputs.
    #[test]
    fn agrees_with_scipy_reference() {
        let q = normal_quantiles(1000);
        let near_one: Vec<f64> = q.iter().map(|z| z.exp()).collect();
        let large: Vec<f64> = q.iter().map(|z| (5.0 + z).exp()).collect();
        let cubes: Vec<f64> = (1..200).map(|i| (i as f64).powi(3)).collect();
        for (col, want) in [
            (near_one, -0.8469091366543988),
            (large, -0.010508951779293205),
            (cubes, 0.23811717994339665),
        ] {
            let got = fit_lambda_mle(&col).unwrap().lambda;
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn constant_column_is_degenerate() {
        let fit = fit_lambda_mle(&[4.0; 10]).unwrap();
        assert_eq!(fit, LambdaFit { lambda: 1.0, degenerate: true });
        assert!(fit_lambda_mle(&[1.0, 2.0]).is_err());
        assert!(fit_lambda_mle(&[1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn fitted_lambda_beats_grid_neighbours() {
        let col: Vec<f64> = (1..200).map(|i| (i as f64).powi(3)).collect();
        let fit = fit_lambda_mle(&col).unwrap();
        let best = log_likelihood(&col, fit.lambda);
        for d in [-0.05, 0.05] {
            assert!(best >= log_likelihood(&col, fit.lambda + d));
        }
    }

    proptest! {
        #[test]
        fn strictly_increasing_in_x(lambda in -5.0f64..5.0, x in -50.0f64..50.0, dx in 1e-3f64..10.0) {
            prop_assert!(yeo_johnson(x + dx, lambda) > yeo_johnson(x, lambda));
        }

        // far tails saturate in f64, so only monotone there
        #[test]
        fn monotone_in_far_tails(lambda in -5.0f64..5.0, x in -1e6f64..1e6, dx in 1e-3f64..10.0) {
            prop_assert!(yeo_johnson(x + dx, lambda) >= yeo_johnson(x, lambda));
        }
    }
}

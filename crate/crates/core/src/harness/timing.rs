use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TimingRecord;
use crate::error::{Error, Result};
use crate::features::TransformState;
use crate::gemm::{GemmBackend, GemmShape, Matrix, NativeBackend};
use crate::models::Regressor;
use crate::runtime::SelectionPass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Statistic {
    #[default]
    Median,
    Mean,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Statistic::Median => "median",
            Statistic::Mean => "mean",
        })
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "median" => Ok(Statistic::Median),
            "mean" => Ok(Statistic::Mean),
            _ => Err(Error::Parameter(format!("unknown statistic {s:?}"))),
        }
    }
}

/// Median (mean of the middle pair for even counts) or arithmetic mean.
pub fn aggregate(samples: &[f64], statistic: Statistic) -> f64 {
    assert!(!samples.is_empty(), "aggregate of no samples");
    match statistic {
        Statistic::Mean => samples.iter().sum::<f64>() / samples.len() as f64,
        Statistic::Median => {
            let mut s = samples.to_vec();
            s.sort_by(f64::total_cmp);
            let h = s.len() / 2;
            if s.len() % 2 == 1 {
                s[h]
            } else {
                0.5 * (s[h - 1] + s[h])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimingConfig {
    pub repeats: u32,
    pub warmup: u32,
    pub statistic: Statistic,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig { repeats: 10, warmup: 1, statistic: Statistic::Median }
    }
}

/// Times `shape` on a fresh native backend with `n_threads` workers.
pub fn time_gemm(shape: GemmShape, n_threads: usize, cfg: &TimingConfig) -> Result<TimingRecord> {
    let backend = NativeBackend::new(n_threads)?;
    backend.warm_up();
    time_gemm_on(&backend, shape, cfg).map(|(r, _)| r)
}

/// Times `shape` on an existing backend; also returns the per-call samples.
pub fn time_gemm_on<B: GemmBackend + ?Sized>(backend: &B, shape: GemmShape, cfg: &TimingConfig) -> Result<(TimingRecord, Vec<f64>)> {
    if cfg.repeats == 0 {
        return Err(Error::Parameter("repeats must be at least 1".into()));
    }
    let seed = (shape.m as u64) ^ ((shape.k as u64) << 21) ^ ((shape.n as u64) << 42);
    let a = Matrix::random(shape.m, shape.k, seed)?;
    let b = Matrix::random(shape.k, shape.n, seed.wrapping_add(1))?;
    let mut c = Matrix::zeros(shape.m, shape.n)?;
    for _ in 0..cfg.warmup {
        backend.gemm(shape, 1.0, 0.0, &a, &b, &mut c)?;
    }
    let mut samples = Vec::with_capacity(cfg.repeats as usize);
    for _ in 0..cfg.repeats {
        let t0 = Instant::now();
        backend.gemm(shape, 1.0, 0.0, &a, &b, &mut c)?;
        // clamp to the clock resolution so records stay strictly positive
        samples.push(t0.elapsed().as_secs_f64().max(1e-9));
    }
    let record = TimingRecord {
        shape,
        n_threads: backend.threads(),
        runtime_s: aggregate(&samples, cfg.statistic),
        repeats: cfg.repeats,
        statistic: cfg.statistic,
    };
    Ok((record, samples))
}

/// Mean wall time of one full thread-selection pass over `trials` random
/// shapes with dimensions in 1..=4096.
pub fn measure_eval_latency<M: Regressor + ?Sized>(
    model: &M,
    transform: &TransformState,
    candidates: &[usize],
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if candidates.is_empty() || trials == 0 {
        return Err(Error::Parameter("need at least one candidate and one trial".into()));
    }
    let mut pass = SelectionPass::new(transform, candidates)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shapes: Vec<GemmShape> = (0..trials)
        .map(|_| GemmShape {
            m: rng.random_range(1..=4096),
            k: rng.random_range(1..=4096),
            n: rng.random_range(1..=4096),
        })
        .collect();
    let mut sink = 0usize;
    let t0 = Instant::now();
    for &s in &shapes {
        sink = sink.wrapping_add(pass.choose(model, s));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    std::hint::black_box(sink);
    Ok((elapsed / trials as f64).max(1e-9))
}

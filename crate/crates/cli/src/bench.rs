//! Live comparison of learned thread selection against always using the
//! largest candidate.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use adsala_core::gemm::{memory_footprint, GemmBackend, GemmShape, Matrix, NativeBackend, Precision};
use adsala_core::harness::{aggregate, Statistic};
use adsala_core::models::Regressor;
use adsala_core::runtime::Predictor;
use adsala_core::{Error, Result};

pub const MB: f64 = 1024.0 * 1024.0;

/// Footprint buckets in MB: half-open `[lo, hi)`.
pub const BUCKETS: [(&str, f64, f64); 3] = [
    ("0-100MB", 0.0, 100.0),
    ("100-500MB", 100.0, 500.0),
    ("all", 0.0, f64::INFINITY),
];

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub shape: GemmShape,
    pub chosen_threads: usize,
    /// Median per-call time including thread selection.
    pub t_adsala_s: f64,
    pub t_max_threads_s: f64,
    pub speedup: f64,
    pub gflops_adsala: f64,
    pub gflops_max: f64,
}

impl BenchRow {
    pub fn new(shape: GemmShape, chosen_threads: usize, t_adsala_s: f64, t_max_threads_s: f64) -> Self {
        BenchRow {
            shape,
            chosen_threads,
            t_adsala_s,
            t_max_threads_s,
            speedup: t_max_threads_s / t_adsala_s,
            gflops_adsala: gflops(shape, t_adsala_s),
            gflops_max: gflops(shape, t_max_threads_s),
        }
    }

    pub fn footprint_mb(&self) -> f64 {
        memory_footprint(self.shape, Precision::Single) as f64 / MB
    }
}

pub fn gflops(shape: GemmShape, seconds: f64) -> f64 {
    shape.flops() / seconds / 1e9
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub bucket: String,
    pub count: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub max: f64,
    /// Σ t_max / Σ t_adsala over the bucket.
    pub aggregate: f64,
}

/// Linear-interpolation percentile of ascending `sorted`, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(bucket: &str, rows: &[&BenchRow]) -> Option<Summary> {
    if rows.is_empty() {
        return None;
    }
    let mut s: Vec<f64> = rows.iter().map(|r| r.speedup).collect();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let std = if s.len() > 1 { (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    let t_max: f64 = rows.iter().map(|r| r.t_max_threads_s).sum();
    let t_ad: f64 = rows.iter().map(|r| r.t_adsala_s).sum();
    Some(Summary {
        bucket: bucket.to_string(),
        count: s.len(),
        mean,
        std,
        min: s[0],
        p25: percentile(&s, 0.25),
        p50: percentile(&s, 0.5),
        p75: percentile(&s, 0.75),
        max: s[s.len() - 1],
        aggregate: t_max / t_ad,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<Summary>,
}

impl BenchReport {
    pub fn from_rows(rows: Vec<BenchRow>) -> Self {
        let summaries = BUCKETS
            .iter()
            .filter_map(|&(name, lo, hi)| {
                let sel: Vec<&BenchRow> = rows.iter().filter(|r| (lo..hi).contains(&r.footprint_mb())).collect();
                summarize(name, &sel)
            })
            .collect();
        BenchReport { rows, summaries }
    }

    pub fn overall(&self) -> Option<&Summary> {
        self.summaries.iter().find(|s| s.bucket == "all")
    }
}

/// Times each shape through the predictor and through a plain backend on
/// the largest candidate, alternating the two. The decision cache is
/// cleared before every predictor call so each timing includes selection.
pub fn run_bench<M: Regressor>(predictor: &Predictor<M>, shapes: &[GemmShape], repeats: u32) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::Parameter("repeats must be at least 1".into()));
    }
    let max_t = *predictor.candidates().last().expect("non-empty candidates");
    let baseline = NativeBackend::new(max_t)?;
    baseline.warm_up();
    let mut rows = Vec::with_capacity(shapes.len());
    for (i, &shape) in shapes.iter().enumerate() {
        let a = Matrix::random(shape.m, shape.k, 2 * i as u64)?;
        let b = Matrix::random(shape.k, shape.n, 2 * i as u64 + 1)?;
        let mut c = Matrix::zeros(shape.m, shape.n)?;
        // warm both paths once
        predictor.clear_cache();
        predictor.gemm(shape, 1.0, 0.0, &a, &b, &mut c)?;
        baseline.gemm(shape, 1.0, 0.0, &a, &b, &mut c)?;
        let mut t_ad = Vec::with_capacity(repeats as usize);
        let mut t_max = Vec::with_capacity(repeats as usize);
        let mut chosen = 0;
        for _ in 0..repeats {
            predictor.clear_cache();
            let t0 = Instant::now();
            let d = predictor.gemm(shape, 1.0, 0.0, &a, &b, &mut c)?;
            t_ad.push(t0.elapsed().as_secs_f64().max(1e-9));
            chosen = d.chosen_threads;
            let t0 = Instant::now();
            baseline.gemm(shape, 1.0, 0.0, &a, &b, &mut c)?;
            t_max.push(t0.elapsed().as_secs_f64().max(1e-9));
        }
        let row = BenchRow::new(
            shape,
            chosen,
            aggregate(&t_ad, Statistic::Median),
            aggregate(&t_max, Statistic::Median),
        );
        log::info!("{shape}: {} threads, speedup {:.3}", row.chosen_threads, row.speedup);
        rows.push(row);
    }
    Ok(BenchReport::from_rows(rows))
}

pub const ROWS_HEADER: &str = "m,k,n,chosen_threads,t_adsala_s,t_max_threads_s,speedup,gflops_adsala,gflops_max";
pub const SUMMARY_HEADER: &str = "bucket,count,mean,std,min,p25,p50,p75,max,aggregate";

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{ROWS_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:e},{:e},{},{},{}",
            r.shape.m, r.shape.k, r.shape.n, r.chosen_threads, r.t_adsala_s, r.t_max_threads_s, r.speedup, r.gflops_adsala, r.gflops_max
        );
    }
    out
}

pub fn summary_csv(summaries: &[Summary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for s in summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            s.bucket, s.count, s.mean, s.std, s.min, s.p25, s.p50, s.p75, s.max, s.aggregate
        );
    }
    out
}

pub fn format_summary_table(summaries: &[Summary]) -> String {
    let mut out = format!(
        "{:<10} {:>5} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7}\n",
        "bucket", "n", "mean", "std", "min", "25%", "50%", "75%", "max", "agg"
    );
    for s in summaries {
        let _ = writeln!(
            out,
            "{:<10} {:>5} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3} {:>7.3}",
            s.bucket, s.count, s.mean, s.std, s.min, s.p25, s.p50, s.p75, s.max, s.aggregate
        );
    }
    out
}

/// Reads a per-shape bench CSV written by [`rows_csv`].
pub fn read_rows(path: &Path) -> Result<Vec<BenchRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let perr = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line: line as u64, message };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(ROWS_HEADER) {
        return Err(perr(1, format!("header must be {ROWS_HEADER}")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 9 {
            return Err(perr(ln, format!("expected 9 fields, got {}", f.len())));
        }
        let u = |j: usize| f[j].parse::<usize>().map_err(|_| perr(ln, format!("bad integer {:?}", f[j])));
        let x = |j: usize| f[j].parse::<f64>().map_err(|_| perr(ln, format!("bad number {:?}", f[j])));
        let shape = GemmShape::new(u(0)?, u(1)?, u(2)?).map_err(|e| perr(ln, e.to_string()))?;
        let (ta, tm) = (x(4)?, x(5)?);
        if !(ta > 0.0 && tm > 0.0) {
            return Err(perr(ln, "times must be positive".into()));
        }
        rows.push(BenchRow::new(shape, u(3)?, ta, tm));
    }
    Ok(rows)
}

//! Plot-ready CSVs derived from a timing dataset or a bench run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use adsala_core::gemm::GemmShape;
use adsala_core::harness::TimingDataset;

use crate::bench::BenchRow;

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeOptimum {
    pub shape: GemmShape,
    pub optimal_threads: usize,
    pub t_optimal_s: f64,
    /// Runtime at the largest measured count for this shape.
    pub t_max_threads_s: f64,
}

/// Per shape, the fastest measured thread count (smallest on exact ties).
pub fn optima(ds: &TimingDataset) -> Vec<ShapeOptimum> {
    ds.by_shape()
        .into_iter()
        .map(|(shape, rt)| {
            let (&opt, &t_opt) = rt
                .iter()
                .fold(None, |best: Option<(&usize, &f64)>, cur| match best {
                    Some(b) if *b.1 <= *cur.1 => Some(b),
                    _ => Some(cur),
                })
                .expect("every shape has a record");
            let (_, &t_max) = rt.iter().next_back().unwrap();
            ShapeOptimum { shape, optimal_threads: opt, t_optimal_s: t_opt, t_max_threads_s: t_max }
        })
        .collect()
}

/// `n_threads,count` over every thread count present in the dataset.
pub fn histogram_csv(ds: &TimingDataset) -> String {
    let mut counts: BTreeMap<usize, usize> = ds.thread_counts().into_iter().map(|t| (t, 0)).collect();
    for o in optima(ds) {
        *counts.entry(o.optimal_threads).or_default() += 1;
    }
    let mut out = String::from("n_threads,count\n");
    for (t, c) in counts {
        let _ = writeln!(out, "{t},{c}");
    }
    out
}

/// One row per shape with square-root axis coordinates for plotting.
pub fn heatmap_csv(ds: &TimingDataset) -> String {
    let mut out = String::from("m,k,n,sqrt_m,sqrt_k,sqrt_n,optimal_threads,speedup_vs_max\n");
    for o in optima(ds) {
        let s = o.shape;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.m,
            s.k,
            s.n,
            (s.m as f64).sqrt(),
            (s.k as f64).sqrt(),
            (s.n as f64).sqrt(),
            o.optimal_threads,
            o.t_max_threads_s / o.t_optimal_s
        );
    }
    out
}

/// GFLOPS of both policies against memory footprint, ascending footprint.
pub fn gflops_csv(rows: &[BenchRow]) -> String {
    let mut sorted: Vec<&BenchRow> = rows.iter().collect();
    sorted.sort_by(|a, b| a.footprint_mb().total_cmp(&b.footprint_mb()));
    let mut out = String::from("footprint_mb,m,k,n,gflops_adsala,gflops_max\n");
    for r in sorted {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.footprint_mb(),
            r.shape.m,
            r.shape.k,
            r.shape.n,
            r.gflops_adsala,
            r.gflops_max
        );
    }
    out
}

//! Command-line front end: sampling, gathering, training, benchmarking,
//! prediction and report generation.

pub mod bench;
pub mod pipeline;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use adsala_core::bundle::{load_bundle, save_bundle};
use adsala_core::features::LabelTransform;
use adsala_core::gemm::{memory_footprint, GemmShape, Precision};
use adsala_core::harness::{
    default_thread_grid, gather_dataset, read_dataset, read_shapes, run_worker, write_shapes, Isolation, Statistic,
    TimingConfig, WorkerCommand,
};
use adsala_core::models::Family;
use adsala_core::runtime::{default_bundle_path, Predictor};
use adsala_core::sampler::{sample_shapes, SamplerConfig};
use adsala_core::selection::write_selection_report;
use adsala_core::{host, Error, ErrorClass, Result};
use clap::{Args, Parser, Subcommand};

use crate::pipeline::{format_selection_table, train, TrainConfig, TrainOutcome};

const MIB: f64 = (1u64 << 20) as f64;

#[derive(Debug, Parser)]
#[command(name = "adsala", version, about = "Learned thread-count selection for SGEMM")]
pub struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw GEMM shapes from a scrambled Halton sequence.
    Sample(SampleArgs),
    /// Time shapes over a list of thread counts.
    Gather(GatherArgs),
    /// Sample, gather, train, select and write a model bundle.
    Install(InstallArgs),
    /// Compare learned selection against always using the most threads.
    Bench(BenchArgs),
    /// Show predicted runtimes and the chosen thread count for one shape.
    Predict(PredictArgs),
    /// Write plot-ready CSVs from a dataset and/or bench results.
    Report(ReportArgs),
    #[command(hide = true)]
    GatherWorker(WorkerArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long, default_value_t = 1763)]
    pub count: usize,
    /// Memory cap per GEMM in MiB.
    #[arg(long, default_value_t = 500.0)]
    pub cap_mb: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct TimingArgs {
    #[arg(long, default_value_t = 10)]
    pub repeats: u32,
    #[arg(long, default_value_t = 1)]
    pub warmup: u32,
    #[arg(long, default_value = "median")]
    pub statistic: Statistic,
}

impl TimingArgs {
    fn config(&self) -> TimingConfig {
        TimingConfig { repeats: self.repeats, warmup: self.warmup, statistic: self.statistic }
    }
}

#[derive(Debug, Args)]
pub struct GatherArgs {
    #[arg(long)]
    pub shapes: PathBuf,
    /// Thread counts, e.g. `1,2,4-8`; defaults to the host grid.
    #[arg(long, value_parser = parse_thread_list)]
    pub threads: Option<ThreadList>,
    #[arg(long)]
    pub out: PathBuf,
    /// Time every thread count inside this process.
    #[arg(long)]
    pub in_process: bool,
    #[command(flatten)]
    pub timing: TimingArgs,
}

#[derive(Debug, Args)]
pub struct InstallArgs {
    /// Output directory; rerunning with the same directory resumes.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1763)]
    pub count: usize,
    #[arg(long, default_value_t = 500.0)]
    pub cap_mb: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_thread_list)]
    pub threads: Option<ThreadList>,
    /// Comma-separated families to consider; defaults to all six.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<Family>>,
    #[arg(long)]
    pub in_process: bool,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 1000)]
    pub eval_trials: usize,
    #[arg(long, default_value = "log_e")]
    pub label_transform: LabelTransform,
    #[command(flatten)]
    pub timing: TimingArgs,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Bundle directory; defaults to $ADSALA_BUNDLE or ./adsala_bundle.
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    /// Shape file; when absent, shapes are drawn from a Halton sequence.
    #[arg(long)]
    pub shapes: Option<PathBuf>,
    #[arg(long, default_value_t = 174)]
    pub count: usize,
    /// Cap for drawn shapes in MiB; defaults to the training cap.
    #[arg(long)]
    pub cap_mb: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Discard this many leading shapes; with the install seed and count this
    /// continues the training sequence without reusing its shapes.
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    #[arg(long, default_value_t = 10)]
    pub repeats: u32,
    /// Directory for bench_rows.csv and bench_summary.csv.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub bundle: Option<PathBuf>,
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Per-shape bench CSV (bench_rows.csv).
    #[arg(long)]
    pub bench: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    #[arg(long)]
    pub threads: usize,
    #[arg(long)]
    pub shapes: PathBuf,
    #[command(flatten)]
    pub timing: TimingArgs,
}

/// Sorted, de-duplicated thread counts parsed from `1,2,4-8`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThreadList(pub Vec<usize>);

pub fn parse_thread_list(s: &str) -> std::result::Result<ThreadList, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |x: &str| x.trim().parse::<usize>().map_err(|_| format!("bad thread count {x:?}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range {part}"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    if out.is_empty() || out.contains(&0) {
        return Err("need at least one positive thread count".into());
    }
    out.sort_unstable();
    out.dedup();
    Ok(ThreadList(out))
}

/// Process exit code for an error: 1 user, 2 environment, 3 data quality.
pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::User => 1,
        ErrorClass::Environment => 2,
        ErrorClass::DataQuality => 3,
    }
}

fn cap_bytes(cap_mb: f64) -> Result<u64> {
    if !(cap_mb > 0.0 && cap_mb.is_finite()) {
        return Err(Error::Parameter(format!("cap must be a positive number of MiB, got {cap_mb}")));
    }
    Ok((cap_mb * MIB) as u64)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn default_threads() -> Vec<usize> {
    default_thread_grid(host::physical_cores(), host::logical_cores())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Sample(a) => cmd_sample(&a, out),
        Command::Gather(a) => cmd_gather(&a, out),
        Command::Install(a) => cmd_install(&a, out).map(|_| ()),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Report(a) => cmd_report(&a, out),
        Command::GatherWorker(a) => {
            let shapes = read_shapes(&a.shapes)?;
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            run_worker(&shapes, a.threads, &a.timing.config(), &mut lock)
        }
    }
}

fn say(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes()).map_err(|e| Error::io("writing output", e))
}

pub fn cmd_sample(a: &SampleArgs, out: &mut dyn Write) -> Result<()> {
    let shapes = sample_shapes(a.count, &SamplerConfig::with_cap(cap_bytes(a.cap_mb)?, a.seed))?;
    write_shapes(&shapes, &a.out)?;
    say(out, &format!("wrote {} shapes to {}\n", shapes.len(), a.out.display()))
}

/// Worker command that re-invokes this executable.
pub fn self_worker() -> Result<WorkerCommand> {
    let program = std::env::current_exe().map_err(|e| Error::io("locating the adsala executable", e))?;
    Ok(WorkerCommand { program, args: vec!["gather-worker".into()] })
}

pub fn cmd_gather(a: &GatherArgs, out: &mut dyn Write) -> Result<()> {
    let shapes = read_shapes(&a.shapes)?;
    let threads = a.threads.clone().map(|l| l.0).unwrap_or_else(default_threads);
    let isolation = if a.in_process { Isolation::InProcess } else { Isolation::Subprocess(self_worker()?) };
    let ds = gather_dataset(&shapes, &threads, &isolation, &a.timing.config(), &a.out)?;
    say(out, &format!("{} records in {}\n", ds.records.len(), a.out.display()))
}

pub fn cmd_install(a: &InstallArgs, out: &mut dyn Write) -> Result<TrainOutcome> {
    let isolation = if a.in_process { Isolation::InProcess } else { Isolation::Subprocess(self_worker()?) };
    install(a, &isolation, out)
}

/// The full install workflow with an explicit gathering mode. Intermediate
/// files in `a.out` make reruns resume where they stopped.
pub fn install(a: &InstallArgs, isolation: &Isolation, out: &mut dyn Write) -> Result<TrainOutcome> {
    fs::create_dir_all(&a.out).map_err(|e| Error::io(format!("creating {}", a.out.display()), e))?;
    let cap = cap_bytes(a.cap_mb)?;
    let shapes_path = a.out.join("shapes.csv");
    let shapes = if shapes_path.exists() {
        let s = read_shapes(&shapes_path)?;
        say(out, &format!("reusing {} shapes from {}\n", s.len(), shapes_path.display()))?;
        s
    } else {
        let s = sample_shapes(a.count, &SamplerConfig::with_cap(cap, a.seed))?;
        write_shapes(&s, &shapes_path)?;
        s
    };
    let threads = a.threads.clone().map(|l| l.0).unwrap_or_else(default_threads);
    let dataset_path = a.out.join("dataset.csv");
    say(out, &format!("gathering {} shapes x {} thread counts\n", shapes.len(), threads.len()))?;
    let ds = gather_dataset(&shapes, &threads, isolation, &a.timing.config(), &dataset_path)?;

    let mut cfg = TrainConfig {
        folds: a.folds,
        seed: a.seed,
        eval_trials: a.eval_trials,
        train_mem_cap_bytes: cap,
        ..TrainConfig::default()
    };
    cfg.preprocess.label_transform = a.label_transform;
    if let Some(f) = &a.families {
        cfg.families = f.clone();
    }
    let outcome = train(&ds, &cfg)?;
    let bundle_dir = a.out.join("bundle");
    save_bundle(&outcome.bundle, &bundle_dir)?;
    let estimates = outcome.estimates();
    write_selection_report(&estimates, Some(outcome.selected), &a.out.join("selection.csv"))?;
    say(out, &format_selection_table(&estimates, outcome.selected))?;
    say(out, &format!("bundle written to {}\n", bundle_dir.display()))?;
    Ok(outcome)
}

pub fn cmd_bench(a: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let path = a.bundle.clone().unwrap_or_else(default_bundle_path);
    let bundle = load_bundle(&path)?;
    let cap = match a.cap_mb {
        Some(c) => cap_bytes(c)?,
        None => bundle.train_mem_cap_bytes,
    };
    let shapes = match &a.shapes {
        Some(p) => read_shapes(p)?,
        None => {
            let mut s = sample_shapes(a.skip + a.count, &SamplerConfig::with_cap(cap, a.seed))?;
            s.drain(..a.skip);
            s
        }
    };
    let predictor = Predictor::from_bundle(bundle, 1)?;
    let report = bench::run_bench(&predictor, &shapes, a.repeats)?;
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        write_text(&dir.join("bench_rows.csv"), &bench::rows_csv(&report.rows))?;
        write_text(&dir.join("bench_summary.csv"), &bench::summary_csv(&report.summaries))?;
    }
    say(out, &bench::format_summary_table(&report.summaries))
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<()> {
    let shape = GemmShape::new(a.m, a.k, a.n)?;
    let path = a.bundle.clone().unwrap_or_else(default_bundle_path);
    let bundle = load_bundle(&path)?;
    let cap = bundle.train_mem_cap_bytes;
    let footprint = memory_footprint(shape, Precision::Single);
    if footprint > cap {
        log::warn!(
            "{shape} needs {:.1} MiB, beyond the {:.1} MiB the model was trained on; the prediction extrapolates",
            footprint as f64 / MIB,
            cap as f64 / MIB
        );
        eprintln!(
            "warning: footprint {:.1} MiB exceeds the training cap of {:.1} MiB; prediction is an extrapolation",
            footprint as f64 / MIB,
            cap as f64 / MIB
        );
    }
    let predictor = Predictor::from_bundle(bundle, 1)?;
    let mut text = String::from("n_threads,predicted_runtime_s\n");
    for (t, r) in predictor.predicted_runtimes(shape) {
        text.push_str(&format!("{t},{r:e}\n"));
    }
    text.push_str(&format!("chosen_threads={}\n", predictor.predict_threads(shape)));
    say(out, &text)
}

pub fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<()> {
    if a.dataset.is_none() && a.bench.is_none() {
        return Err(Error::Parameter("report needs --dataset and/or --bench".into()));
    }
    fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(format!("creating {}", a.out_dir.display()), e))?;
    let mut written = Vec::new();
    if let Some(p) = &a.dataset {
        let ds = read_dataset(p)?;
        for (name, body) in [
            ("optimal_threads_histogram.csv", report::histogram_csv(&ds)),
            ("heatmap.csv", report::heatmap_csv(&ds)),
        ] {
            write_text(&a.out_dir.join(name), &body)?;
            written.push(name);
        }
    }
    if let Some(p) = &a.bench {
        let rows = bench::read_rows(p)?;
        write_text(&a.out_dir.join("gflops_vs_footprint.csv"), &report::gflops_csv(&rows))?;
        written.push("gflops_vs_footprint.csv");
    }
    say(out, &format!("wrote {} to {}\n", written.join(", "), a.out_dir.display()))
}

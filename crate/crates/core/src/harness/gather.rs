use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use super::dataset::{read_dataset, write_meta, write_shapes, DatasetWriter, TimingDataset, TimingRecord};
use super::timing::{time_gemm_on, TimingConfig};
use crate::error::{Error, Result};
use crate::gemm::{GemmShape, NativeBackend};
use crate::host;

/// Gathering fails once more than this fraction of records was skipped.
pub const MAX_SKIP_FRACTION: f64 = 0.10;

/// Program plus leading arguments that start a gather worker. The worker
/// receives `--threads T --shapes FILE --repeats R --warmup W --statistic S`
/// and must print one CSV record per line on stdout, in shape order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkerCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Isolation {
    InProcess,
    Subprocess(WorkerCommand),
}

/// 1..=physical, then physical + 1, +2, +4, ... below logical, then logical.
pub fn default_thread_grid(physical: usize, logical: usize) -> Vec<usize> {
    let physical = physical.clamp(1, logical.max(1));
    let mut grid: Vec<usize> = (1..=physical).collect();
    let mut step = 1;
    while physical + step < logical {
        grid.push(physical + step);
        step *= 2;
    }
    if logical > physical {
        grid.push(logical);
    }
    grid
}

/// Times every shape on one backend with `threads` workers, writing each
/// record as a CSV line to `out` as soon as it is measured.
pub fn run_worker<W: Write>(shapes: &[GemmShape], threads: usize, cfg: &TimingConfig, out: &mut W) -> Result<()> {
    let backend = NativeBackend::new(threads)?;
    backend.warm_up();
    for &shape in shapes {
        let (record, _) = time_gemm_on(&backend, shape, cfg)?;
        writeln!(out, "{}", record.csv_fields().join(",")).map_err(|e| Error::io("writing worker output", e))?;
        out.flush().map_err(|e| Error::io("flushing worker output", e))?;
    }
    Ok(())
}

/// Measures every (shape, thread count) pair not already present in `out`,
/// appending to it record by record. Thread counts run in ascending order,
/// each in its own worker process under [`Isolation::Subprocess`].
pub fn gather_dataset(
    shapes: &[GemmShape],
    thread_counts: &[usize],
    isolation: &Isolation,
    cfg: &TimingConfig,
    out: &Path,
) -> Result<TimingDataset> {
    if shapes.is_empty() || thread_counts.is_empty() {
        return Err(Error::Parameter("gathering needs at least one shape and one thread count".into()));
    }
    let max = host::logical_cores();
    if let Some(&bad) = thread_counts.iter().find(|&&t| t == 0 || t > max) {
        return Err(Error::Parameter(format!("thread count {bad} outside 1..={max}")));
    }
    let mut threads = thread_counts.to_vec();
    threads.sort_unstable();
    threads.dedup();
    let mut seen = HashSet::new();
    let shapes: Vec<GemmShape> = shapes.iter().copied().filter(|s| seen.insert(*s)).collect();

    let host_desc = host::descriptor();
    let mut done = HashSet::new();
    if out.exists() && fs::metadata(out).map(|m| m.len() > 0).unwrap_or(false) {
        let existing = read_dataset(out)?;
        if existing.host_descriptor != host_desc {
            return Err(Error::Parameter(format!(
                "{} was recorded on {:?}, not on this host ({:?})",
                out.display(),
                existing.host_descriptor,
                host_desc
            )));
        }
        done.extend(existing.records.iter().map(|r| (r.shape, r.n_threads)));
        log::info!("resuming: {} records already present", done.len());
    }
    let mut writer = DatasetWriter::open(out, &host_desc, *threads.last().unwrap())?;

    let total = shapes.len() * threads.len();
    let mut skipped = 0usize;
    for &t in &threads {
        let todo: Vec<GemmShape> = shapes.iter().copied().filter(|s| !done.contains(&(*s, t))).collect();
        if todo.is_empty() {
            continue;
        }
        log::info!("timing {} shapes on {t} threads", todo.len());
        skipped += match isolation {
            Isolation::InProcess => gather_in_process(&todo, t, cfg, &mut writer)?,
            Isolation::Subprocess(cmd) => gather_subprocess(cmd, &todo, t, cfg, out, &mut writer)?,
        };
        if skipped as f64 > MAX_SKIP_FRACTION * total as f64 {
            return Err(Error::Gather { skipped, total });
        }
    }
    drop(writer);
    if skipped > 0 {
        log::warn!("{skipped} of {total} records were skipped");
    }
    let mut ds = read_dataset(out)?;
    let top = *threads.last().unwrap();
    if ds.max_threads < top {
        ds.max_threads = top;
        write_meta(out, &ds)?;
    }
    Ok(ds)
}

fn gather_in_process(todo: &[GemmShape], t: usize, cfg: &TimingConfig, writer: &mut DatasetWriter) -> Result<usize> {
    let backend = NativeBackend::new(t)?;
    backend.warm_up();
    let mut skipped = 0;
    for &shape in todo {
        match time_gemm_on(&backend, shape, cfg) {
            Ok((rec, _)) => writer.append(&rec)?,
            Err(e) => {
                log::warn!("skipping {shape} on {t} threads: {e}");
                skipped += 1;
            }
        }
    }
    Ok(skipped)
}

/// Runs workers until every shape is recorded or skipped. When a worker
/// dies, the shape it was working on is skipped and a new worker continues
/// with the rest.
fn gather_subprocess(
    cmd: &WorkerCommand,
    todo: &[GemmShape],
    t: usize,
    cfg: &TimingConfig,
    out: &Path,
    writer: &mut DatasetWriter,
) -> Result<usize> {
    let mut shape_file = out.as_os_str().to_owned();
    shape_file.push(format!(".worker{t}.shapes"));
    let shape_file = PathBuf::from(shape_file);
    let mut pos = 0;
    let mut skipped = 0;
    while pos < todo.len() {
        let remaining = &todo[pos..];
        write_shapes(remaining, &shape_file)?;
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .arg("--threads")
            .arg(t.to_string())
            .arg("--shapes")
            .arg(&shape_file)
            .arg("--repeats")
            .arg(cfg.repeats.to_string())
            .arg("--warmup")
            .arg(cfg.warmup.to_string())
            .arg("--statistic")
            .arg(cfg.statistic.to_string())
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::io(format!("starting worker {}", cmd.program.display()), e))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let mut received = 0;
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            let fields: Vec<&str> = line.trim().split(',').collect();
            let Ok(rec) = TimingRecord::from_fields(&fields) else {
                log::warn!("ignoring unexpected worker output {line:?}");
                continue;
            };
            if received >= remaining.len() || rec.shape != remaining[received] || rec.n_threads != t {
                log::warn!("worker reported {} on {} threads out of order; ignoring", rec.shape, rec.n_threads);
                continue;
            }
            writer.append(&rec)?;
            received += 1;
        }
        let status = child.wait().map_err(|e| Error::io("waiting for worker", e))?;
        pos += received;
        if pos < todo.len() {
            log::warn!("worker on {t} threads exited ({status}) before {}; skipping it", todo[pos]);
            pos += 1;
            skipped += 1;
        } else if !status.success() {
            log::warn!("worker on {t} threads exited with {status} after finishing its shapes");
        }
    }
    let _ = fs::remove_file(&shape_file);
    Ok(skipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_grid_shapes() {
        assert_eq!(default_thread_grid(4, 4), vec![1, 2, 3, 4]);
        assert_eq!(default_thread_grid(4, 8), vec![1, 2, 3, 4, 5, 6, 8]);
        assert_eq!(default_thread_grid(8, 16), vec![1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 16]);
        assert_eq!(default_thread_grid(1, 1), vec![1]);
        assert_eq!(default_thread_grid(64, 128).len(), 64 + 7);
    }

    #[test]
    fn in_process_gather_cardinality_and_resume() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.csv");
        let shapes: Vec<GemmShape> = [(8, 8, 8), (16, 4, 9), (3, 5, 7)]
            .iter()
            .map(|&(m, k, n)| GemmShape::new(m, k, n).unwrap())
            .collect();
        let cfg = TimingConfig { repeats: 2, warmup: 0, ..Default::default() };
        let ds = gather_dataset(&shapes[..2], &[1], &Isolation::InProcess, &cfg, &out).unwrap();
        assert_eq!(ds.records.len(), 2);
        let ds = gather_dataset(&shapes, &[1, 1], &Isolation::InProcess, &cfg, &out).unwrap();
        assert_eq!(ds.records.len(), 3);
        ds.validate().unwrap();
        assert_eq!(ds.max_threads, 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("d.csv");
        let s = [GemmShape::new(2, 2, 2).unwrap()];
        let cfg = TimingConfig::default();
        assert!(gather_dataset(&[], &[1], &Isolation::InProcess, &cfg, &out).is_err());
        assert!(gather_dataset(&s, &[], &Isolation::InProcess, &cfg, &out).is_err());
        assert!(gather_dataset(&s, &[host::logical_cores() + 1], &Isolation::InProcess, &cfg, &out).is_err());
    }

    #[test]
    fn worker_streams_records() {
        let shapes = [GemmShape::new(4, 5, 6).unwrap(), GemmShape::new(7, 8, 9).unwrap()];
        let mut buf = Vec::new();
        run_worker(&shapes, 1, &TimingConfig { repeats: 1, warmup: 0, ..Default::default() }, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let rec = TimingRecord::from_fields(&lines[1].split(',').collect::<Vec<_>>()).unwrap();
        assert_eq!(rec.shape, shapes[1]);
    }

    #[cfg(unix)]
    #[test]
    fn crashing_worker_skips_one_shape_and_respawns() {
        // A shell worker that answers every shape except 3x3x3, where it dies.
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("worker.sh");
        fs::write(
            &script,
            "#!/bin/sh\nwhile [ $# -gt 0 ]; do case $1 in --shapes) f=$2;; --threads) t=$2;; esac; shift; done\n\
             tail -n +2 \"$f\" | while IFS=, read m k n; do\n\
             if [ \"$m\" = 3 ]; then exit 9; fi\n\
             echo \"$m,$k,$n,$t,0.001,1,median\"\ndone\n",
        )
        .unwrap();
        let out = dir.path().join("d.csv");
        let cmd = WorkerCommand { program: "/bin/sh".into(), args: vec![script.display().to_string()] };
        let dims = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];
        let shapes: Vec<GemmShape> = dims.iter().map(|&d| GemmShape::new(d, d, d).unwrap()).collect();
        let cfg = TimingConfig { repeats: 1, warmup: 0, ..Default::default() };
        let ds = gather_dataset(&shapes, &[1], &Isolation::Subprocess(cmd.clone()), &cfg, &out).unwrap();
        assert_eq!(ds.records.len(), 10);
        assert!(ds.records.iter().all(|r| r.shape.m != 3));

        // two crashing shapes out of ten exceed the 10 % budget
        let out2 = dir.path().join("d2.csv");
        let bad: Vec<GemmShape> = (0..10).map(|i| GemmShape::new(if i < 2 { 3 } else { 20 + i }, 1 + i, 1).unwrap()).collect();
        match gather_dataset(&bad, &[1], &Isolation::Subprocess(cmd), &cfg, &out2) {
            Err(Error::Gather { skipped, total }) => assert_eq!((skipped, total), (2, 10)),
            other => panic!("{other:?}"),
        }
        // the partial file is still readable
        assert_eq!(read_dataset(&out2).unwrap().records.len(), 8);
    }
}

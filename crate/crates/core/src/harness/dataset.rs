use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::Statistic;
use crate::error::{Error, Result};
use crate::gemm::GemmShape;

pub const DATASET_HEADER: [&str; 7] = ["m", "k", "n", "n_threads", "runtime_s", "repeats", "statistic"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingRecord {
    pub shape: GemmShape,
    pub n_threads: usize,
    /// Per-call seconds after aggregating the repeats.
    pub runtime_s: f64,
    pub repeats: u32,
    pub statistic: Statistic,
}

impl TimingRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.runtime_s > 0.0 && self.runtime_s.is_finite()) || self.repeats == 0 || self.n_threads == 0 {
            return Err(Error::Contract(format!("invalid timing record {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn csv_fields(&self) -> [String; 7] {
        [
            self.shape.m.to_string(),
            self.shape.k.to_string(),
            self.shape.n.to_string(),
            self.n_threads.to_string(),
            format!("{:e}", self.runtime_s),
            self.repeats.to_string(),
            self.statistic.to_string(),
        ]
    }

    pub(crate) fn from_fields(fields: &[&str]) -> std::result::Result<Self, String> {
        if fields.len() != 7 {
            return Err(format!("expected 7 fields, got {}", fields.len()));
        }
        fn num<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<T, String> {
            s.trim().parse().map_err(|_| format!("bad {what} {s:?}"))
        }
        let shape = GemmShape::new(num(fields[0], "m")?, num(fields[1], "k")?, num(fields[2], "n")?)
            .map_err(|e| e.to_string())?;
        let rec = TimingRecord {
            shape,
            n_threads: num(fields[3], "n_threads")?,
            runtime_s: num(fields[4], "runtime_s")?,
            repeats: num(fields[5], "repeats")?,
            statistic: fields[6].trim().parse().map_err(|e: Error| e.to_string())?,
        };
        rec.validate().map_err(|e| e.to_string())?;
        Ok(rec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingDataset {
    pub records: Vec<TimingRecord>,
    pub host_descriptor: String,
    pub max_threads: usize,
    /// Unix seconds.
    pub created_at: u64,
}

impl TimingDataset {
    pub fn new(host_descriptor: impl Into<String>, max_threads: usize) -> Self {
        TimingDataset {
            records: Vec::new(),
            host_descriptor: host_descriptor.into(),
            max_threads,
            created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        }
    }

    /// Appends a record, refusing a second measurement of the same pair.
    pub fn push(&mut self, record: TimingRecord) -> Result<()> {
        record.validate()?;
        if self.records.iter().any(|r| r.shape == record.shape && r.n_threads == record.n_threads) {
            return Err(Error::Contract(format!(
                "duplicate record for {} on {} threads",
                record.shape, record.n_threads
            )));
        }
        self.records.push(record);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            r.validate()?;
            if !seen.insert((r.shape, r.n_threads)) {
                return Err(Error::Contract(format!("duplicate record for {} on {} threads", r.shape, r.n_threads)));
            }
        }
        Ok(())
    }

    /// Distinct shapes in first-appearance order.
    pub fn shapes(&self) -> Vec<GemmShape> {
        let mut seen = HashSet::new();
        self.records.iter().map(|r| r.shape).filter(|s| seen.insert(*s)).collect()
    }

    pub fn thread_counts(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.n_threads).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// shape → (n_threads → runtime)
    pub fn by_shape(&self) -> BTreeMap<GemmShape, BTreeMap<usize, f64>> {
        let mut out: BTreeMap<GemmShape, BTreeMap<usize, f64>> = BTreeMap::new();
        for r in &self.records {
            out.entry(r.shape).or_default().insert(r.n_threads, r.runtime_s);
        }
        out
    }

    pub fn restrict_to(&self, shapes: &[GemmShape]) -> TimingDataset {
        let keep: HashSet<_> = shapes.iter().copied().collect();
        TimingDataset {
            records: self.records.iter().filter(|r| keep.contains(&r.shape)).copied().collect(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> TimingDataset {
        TimingDataset {
            records: Vec::new(),
            host_descriptor: self.host_descriptor.clone(),
            max_threads: self.max_threads,
            created_at: self.created_at,
        }
    }
}

/// Sidecar metadata path: `<dataset>.meta`.
pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn one_line(s: &str) -> String {
    s.replace(['\n', '\r'], " ")
}

pub(crate) fn write_meta(path: &Path, ds: &TimingDataset) -> Result<()> {
    let body = format!(
        "host_descriptor={}\nmax_threads={}\ncreated_at={}\n",
        one_line(&ds.host_descriptor),
        ds.max_threads,
        ds.created_at
    );
    let mp = meta_path(path);
    fs::write(&mp, body).map_err(|e| Error::io(format!("writing {}", mp.display()), e))
}

fn read_meta(path: &Path) -> Result<(String, usize, u64)> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(format!("reading {}", mp.display()), e))?;
    let (mut host, mut max, mut created) = (None, None, 0u64);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: mp.clone(), line: i as u64 + 1, message };
        let (k, v) = line.split_once('=').ok_or_else(|| parse_err(format!("expected key=value, got {line:?}")))?;
        match k {
            "host_descriptor" => host = Some(v.to_string()),
            "max_threads" => max = Some(v.parse().map_err(|_| parse_err(format!("bad max_threads {v:?}")))?),
            "created_at" => created = v.parse().map_err(|_| parse_err(format!("bad created_at {v:?}")))?,
            _ => {}
        }
    }
    let missing = |what: &str| Error::Parse { path: mp.clone(), line: 0, message: format!("missing {what}") };
    Ok((host.ok_or_else(|| missing("host_descriptor"))?, max.ok_or_else(|| missing("max_threads"))?, created))
}

/// Writes the CSV and its sidecar from scratch.
pub fn write_dataset(ds: &TimingDataset, path: &Path) -> Result<()> {
    ds.validate()?;
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(DATASET_HEADER).map_err(|e| csv_io(path, e))?;
    for r in &ds.records {
        w.write_record(r.csv_fields()).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    write_meta(path, ds)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    Error::io(format!("writing {}", path.display()), std::io::Error::other(e.to_string()))
}

pub fn read_dataset(path: &Path) -> Result<TimingDataset> {
    let (host, max_threads, created_at) = read_meta(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), std::io::Error::other(e.to_string())))?;
    let perr = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != DATASET_HEADER {
        return Err(perr(1, format!("header must be {}", DATASET_HEADER.join(","))));
    }
    let mut ds = TimingDataset { records: Vec::new(), host_descriptor: host, max_threads, created_at };
    let mut seen = HashSet::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = rec.iter().collect();
        let r = TimingRecord::from_fields(&fields).map_err(|m| perr(line, m))?;
        if !seen.insert((r.shape, r.n_threads)) {
            return Err(perr(line, format!("duplicate record for {} on {} threads", r.shape, r.n_threads)));
        }
        ds.records.push(r);
    }
    Ok(ds)
}

/// Append-only dataset writer that flushes after every record, so an
/// interrupted gather leaves a readable file.
pub struct DatasetWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl DatasetWriter {
    /// Opens `path` for appending, writing the header and sidecar if new.
    pub fn open(path: &Path, host_descriptor: &str, max_threads: usize) -> Result<Self> {
        let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut w = DatasetWriter { out: BufWriter::new(file), path: path.to_path_buf() };
        if fresh {
            w.write_line(&DATASET_HEADER.join(","))?;
            write_meta(path, &TimingDataset::new(host_descriptor, max_threads))?;
        }
        Ok(w)
    }

    pub fn append(&mut self, record: &TimingRecord) -> Result<()> {
        record.validate()?;
        self.write_line(&record.csv_fields().join(","))
    }

    fn write_line(&mut self, line: &str) -> Result<()> {
        let ctx = || format!("appending to {}", self.path.display());
        writeln!(self.out, "{line}").map_err(|e| Error::io(ctx(), e))?;
        self.out.flush().map_err(|e| Error::io(ctx(), e))
    }
}

/// Shape list CSV with header `m,k,n`.
pub fn write_shapes(shapes: &[GemmShape], path: &Path) -> Result<()> {
    let mut body = String::from("m,k,n\n");
    for s in shapes {
        body.push_str(&format!("{},{},{}\n", s.m, s.k, s.n));
    }
    fs::write(path, body).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_shapes(path: &Path) -> Result<Vec<GemmShape>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::io(format!("opening {}", path.display()), std::io::Error::other(e.to_string())))?;
    let perr = |line: u64, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    let headers = reader.headers().map_err(|e| perr(1, e.to_string()))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["m", "k", "n"] {
        return Err(perr(1, "header must be m,k,n".into()));
    }
    let mut shapes = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| perr(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(perr(line, format!("expected 3 fields, got {}", rec.len())));
        }
        let dims: std::result::Result<Vec<usize>, _> = rec.iter().map(|f| f.trim().parse::<usize>()).collect();
        let dims = dims.map_err(|_| perr(line, format!("non-integer dimension in {:?}", rec.iter().collect::<Vec<_>>())))?;
        shapes.push(GemmShape::new(dims[0], dims[1], dims[2]).map_err(|e| perr(line, e.to_string()))?);
    }
    Ok(shapes)
}

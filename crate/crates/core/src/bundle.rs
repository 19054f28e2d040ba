//! Versioned, checksummed persistence of the install-time artifacts.
//!
//! A bundle is a directory holding two files: `adsala.conf`, readable
//! `key=value` lines with host metadata, candidates and the transform
//! tables, and `model.bin`, the little-endian binary model. The last config
//! line carries a checksum over the rest of the config plus the model bytes.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{LabelTransform, TransformState};
use crate::models::{
    BoostingParams, Family, ForestParams, Hyperparameters, KnnParams, LinearParams, ModelParams, PreorderNode,
    RegressionModel, Tree,
};
use crate::selection::SpeedupEstimate;

pub const FORMAT_VERSION: u32 = 1;
pub const CONFIG_FILE: &str = "adsala.conf";
pub const MODEL_FILE: &str = "model.bin";
const MAGIC: &[u8; 8] = b"ADSALAMB";

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub format_version: u32,
    pub host_descriptor: String,
    pub max_threads: usize,
    /// Memory cap the training shapes were sampled under, bytes.
    pub train_mem_cap_bytes: u64,
    /// Thread counts the model may choose from, ascending.
    pub candidates: Vec<usize>,
    pub transform: TransformState,
    pub model: RegressionModel,
    pub selection: Option<SpeedupEstimate>,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        if self.candidates.is_empty() || self.candidates.windows(2).any(|w| w[0] >= w[1]) || self.candidates[0] == 0 {
            return Err(Error::Contract("candidates must be positive and strictly ascending".into()));
        }
        if self.model.n_features != self.transform.n_outputs() || self.model.trained_on != self.transform.output_fingerprint() {
            return Err(Error::Contract("model and transform disagree on the input schema".into()));
        }
        Ok(())
    }
}

fn checksum(config_payload: &str, model: &[u8]) -> u64 {
    let mut h = Sha256::new();
    h.update(config_payload.as_bytes());
    h.update(model);
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n").replace('\r', "\\r")
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c == '\\' {
            match it.next() {
                Some('n') => out.push('\n'),
                Some('r') => out.push('\r'),
                Some(o) => out.push(o),
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Canonical file contents: (config text, model bytes).
pub fn encode(bundle: &ModelBundle) -> Result<(String, Vec<u8>)> {
    bundle.validate()?;
    let t = &bundle.transform;
    let mut cfg = String::new();
    let _ = writeln!(cfg, "format_version={}", bundle.format_version);
    let _ = writeln!(cfg, "host_descriptor={}", escape(&bundle.host_descriptor));
    let _ = writeln!(cfg, "max_threads={}", bundle.max_threads);
    let _ = writeln!(cfg, "train_mem_cap_bytes={}", bundle.train_mem_cap_bytes);
    let _ = writeln!(cfg, "candidates={}", join(&bundle.candidates));
    let _ = writeln!(cfg, "label_transform={}", t.label_transform);
    let _ = writeln!(cfg, "feature_names={}", t.feature_names.join(","));
    let _ = writeln!(cfg, "lambdas={}", join(&t.lambdas));
    let _ = writeln!(cfg, "means={}", join(&t.means));
    let _ = writeln!(cfg, "stds={}", join(&t.stds));
    let _ = writeln!(cfg, "kept_features={}", t.kept_features().join(","));
    let _ = writeln!(cfg, "model_family={}", bundle.model.family);
    match &bundle.selection {
        None => {
            let _ = writeln!(cfg, "selection=none");
        }
        Some(s) => {
            let _ = writeln!(cfg, "selection.family={}", s.family);
            let _ = writeln!(cfg, "selection.rmse_s={}", s.rmse_s);
            let _ = writeln!(cfg, "selection.t_eval_s={}", s.t_eval_s);
            let _ = writeln!(cfg, "selection.est_speedup_no_overhead={}", s.est_speedup_no_overhead);
            let _ = writeln!(cfg, "selection.est_speedup_with_overhead={}", s.est_speedup_with_overhead);
            let _ = writeln!(cfg, "selection.aggregate_speedup_no_overhead={}", s.aggregate_speedup_no_overhead);
            let _ = writeln!(cfg, "selection.aggregate_speedup={}", s.aggregate_speedup);
            let _ = writeln!(cfg, "selection.mean_speedup={}", s.mean_speedup);
            let _ = writeln!(cfg, "selection.n_shapes={}", s.n_shapes);
        }
    }
    let model = encode_model(&bundle.model);
    let sum = checksum(&cfg, &model);
    let _ = writeln!(cfg, "checksum={sum:016x}");
    Ok((cfg, model))
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let dest = dir.join(name);
    let ctx = |what: &str| format!("{what} {}", tmp.display());
    let mut f = File::create(&tmp).map_err(|e| Error::io(ctx("creating"), e))?;
    f.write_all(bytes).map_err(|e| Error::io(ctx("writing"), e))?;
    f.sync_all().map_err(|e| Error::io(ctx("syncing"), e))?;
    fs::rename(&tmp, &dest).map_err(|e| Error::io(format!("renaming into {}", dest.display()), e))
}

/// Writes the bundle directory. Each file is replaced atomically; a crash
/// between the two renames leaves a pair the checksum rejects.
pub fn save_bundle(bundle: &ModelBundle, dir: &Path) -> Result<()> {
    let (cfg, model) = encode(bundle)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    write_atomic(dir, MODEL_FILE, &model)?;
    write_atomic(dir, CONFIG_FILE, cfg.as_bytes())
}

pub fn load_bundle(dir: &Path) -> Result<ModelBundle> {
    let cfg_path = dir.join(CONFIG_FILE);
    let model_path = dir.join(MODEL_FILE);
    let cfg = fs::read(&cfg_path).map_err(|e| Error::io(format!("reading {}", cfg_path.display()), e))?;
    let model = fs::read(&model_path).map_err(|e| Error::io(format!("reading {}", model_path.display()), e))?;
    let cfg = String::from_utf8(cfg).map_err(|_| Error::Corrupt(format!("{} is not UTF-8", cfg_path.display())))?;
    decode(&cfg, &model)
}

/// Parses and verifies file contents produced by [`encode`].
pub fn decode(cfg: &str, model: &[u8]) -> Result<ModelBundle> {
    // the version gate comes first so newer files get a precise error
    let first = cfg.lines().next().unwrap_or("");
    let version: u32 = first
        .strip_prefix("format_version=")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Corrupt("config does not start with format_version".into()))?;
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, supported: FORMAT_VERSION });
    }
    let body_end = cfg
        .rfind("checksum=")
        .filter(|&i| i == 0 || cfg.as_bytes()[i - 1] == b'\n')
        .ok_or_else(|| Error::Corrupt("config has no checksum line".into()))?;
    let (payload, sum_line) = cfg.split_at(body_end);
    let stored = u64::from_str_radix(sum_line.trim_end_matches('\n').trim_start_matches("checksum="), 16)
        .map_err(|_| Error::Corrupt("unreadable checksum".into()))?;
    let actual = checksum(payload, model);
    if stored != actual {
        return Err(Error::Corrupt(format!("checksum mismatch: stored {stored:016x}, computed {actual:016x}")));
    }

    let mut kv = std::collections::BTreeMap::new();
    for line in payload.lines() {
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Corrupt(format!("malformed config line {line:?}")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| Error::Corrupt(format!("config lacks {k}")));
    fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
        v.parse().map_err(|_| Error::Corrupt(format!("bad value for {k}: {v:?}")))
    }
    fn list<T: std::str::FromStr>(k: &str, v: &str) -> Result<Vec<T>> {
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',').map(|x| num(k, x)).collect()
    }
    let feature_names: Vec<String> = get("feature_names")?.split(',').map(str::to_string).collect();
    let kept_names: Vec<&str> = get("kept_features")?.split(',').collect();
    let kept = kept_names
        .iter()
        .map(|n| feature_names.iter().position(|f| f == n).ok_or_else(|| Error::Corrupt(format!("unknown kept feature {n:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let transform = TransformState {
        lambdas: list("lambdas", get("lambdas")?)?,
        means: list("means", get("means")?)?,
        stds: list("stds", get("stds")?)?,
        kept,
        label_transform: get("label_transform")?.parse::<LabelTransform>().map_err(|e| Error::Corrupt(e.to_string()))?,
        feature_names,
    };
    let model = decode_model(model)?;
    if get("model_family")? != model.family.as_str() {
        return Err(Error::Corrupt("config and model disagree on the family".into()));
    }
    let selection = if kv.get("selection") == Some(&"none") {
        None
    } else {
        let f = |k: &str| -> Result<f64> { num(k, get(&format!("selection.{k}"))?) };
        Some(SpeedupEstimate {
            family: get("selection.family")?.parse().map_err(|e: Error| Error::Corrupt(e.to_string()))?,
            rmse_s: f("rmse_s")?,
            t_eval_s: f("t_eval_s")?,
            est_speedup_no_overhead: f("est_speedup_no_overhead")?,
            est_speedup_with_overhead: f("est_speedup_with_overhead")?,
            aggregate_speedup_no_overhead: f("aggregate_speedup_no_overhead")?,
            aggregate_speedup: f("aggregate_speedup")?,
            mean_speedup: f("mean_speedup")?,
            n_shapes: num("selection.n_shapes", get("selection.n_shapes")?)?,
        })
    };
    let bundle = ModelBundle {
        format_version: version,
        host_descriptor: unescape(get("host_descriptor")?),
        max_threads: num("max_threads", get("max_threads")?)?,
        train_mem_cap_bytes: num("train_mem_cap_bytes", get("train_mem_cap_bytes")?)?,
        candidates: list("candidates", get("candidates")?)?,
        transform,
        model,
        selection,
    };
    bundle.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(bundle)
}

// ---- binary model codec ----

const REC_HEADER: u8 = 1;
const REC_HYPER: u8 = 2;
const REC_PARAMS: u8 = 3;

fn family_tag(f: Family) -> u8 {
    Family::ALL.iter().position(|&x| x == f).unwrap() as u8
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn tree(&mut self, t: &Tree) {
        let nodes = t.preorder();
        self.u64(nodes.len() as u64);
        for n in nodes {
            self.u32(n.feature.unwrap_or(u32::MAX));
            self.f64(n.threshold);
            self.f64(n.value);
        }
    }
    fn record(&mut self, tag: u8, body: Enc) {
        self.u8(tag);
        self.u64(body.0.len() as u64);
        self.0.extend_from_slice(&body.0);
    }
}

pub fn encode_model(m: &RegressionModel) -> Vec<u8> {
    let mut out = Enc::default();
    out.0.extend_from_slice(MAGIC);
    out.u32(FORMAT_VERSION);

    let mut h = Enc::default();
    h.u8(family_tag(m.family));
    h.u64(m.n_features as u64);
    h.u64(m.trained_on);
    out.record(REC_HEADER, h);

    let mut hp = Enc::default();
    hp.u32(m.hyperparameters.len() as u32);
    for (k, v) in &m.hyperparameters {
        hp.str(k);
        hp.f64(*v);
    }
    out.record(REC_HYPER, hp);

    let mut p = Enc::default();
    match &m.params {
        ModelParams::Linear(l) => {
            p.u8(0);
            p.f64s(&l.weights);
            p.f64(l.intercept);
        }
        ModelParams::Knn(k) => {
            p.u8(1);
            p.u64(k.k as u64);
            p.u64(k.points.n_cols() as u64);
            p.f64s(k.points.as_flat());
            p.f64s(&k.labels);
        }
        ModelParams::Tree(t) => {
            p.u8(2);
            p.tree(t);
        }
        ModelParams::Forest(f) => {
            p.u8(3);
            p.u64(f.trees.len() as u64);
            f.trees.iter().for_each(|t| p.tree(t));
        }
        ModelParams::Boosting(b) => {
            p.u8(4);
            p.f64(b.base);
            p.f64(b.learning_rate);
            p.u64(b.trees.len() as u64);
            b.trees.iter().for_each(|t| p.tree(t));
        }
    }
    out.record(REC_PARAMS, p);
    out.0
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Corrupt("model file truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let n = self.u64()?;
        // every element occupies at least one byte
        if n > (self.buf.len() - self.pos) as u64 {
            return Err(Error::Corrupt("length prefix exceeds the file".into()));
        }
        Ok(n as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.len()?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Corrupt("non-UTF-8 name".into()))
    }
    fn tree(&mut self) -> Result<Tree> {
        let n = self.len()?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let f = self.u32()?;
            nodes.push(PreorderNode {
                feature: (f != u32::MAX).then_some(f),
                threshold: self.f64()?,
                value: self.f64()?,
            });
        }
        Tree::from_preorder(&nodes).ok_or_else(|| Error::Corrupt("malformed tree".into()))
    }
    fn record(&mut self, tag: u8) -> Result<Dec<'a>> {
        if self.u8()? != tag {
            return Err(Error::Corrupt(format!("expected model record {tag}")));
        }
        let n = self.len()?;
        Ok(Dec { buf: self.take(n)?, pos: 0 })
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Corrupt("trailing bytes in model record".into()));
        }
        Ok(())
    }
}

pub fn decode_model(bytes: &[u8]) -> Result<RegressionModel> {
    let mut d = Dec { buf: bytes, pos: 0 };
    if d.take(8)? != MAGIC {
        return Err(Error::Corrupt("model file has the wrong magic".into()));
    }
    let version = d.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Version { found: version, supported: FORMAT_VERSION });
    }
    let mut h = d.record(REC_HEADER)?;
    let family = *Family::ALL.get(h.u8()? as usize).ok_or_else(|| Error::Corrupt("unknown family tag".into()))?;
    let n_features = h.u64()? as usize;
    let trained_on = h.u64()?;
    h.finish()?;

    let mut hp = d.record(REC_HYPER)?;
    let mut hyperparameters = Hyperparameters::new();
    for _ in 0..hp.u32()? {
        let k = hp.str()?;
        hyperparameters.insert(k, hp.f64()?);
    }
    hp.finish()?;

    let mut p = d.record(REC_PARAMS)?;
    let params = match p.u8()? {
        0 => {
            let weights = p.f64s()?;
            ModelParams::Linear(LinearParams { weights, intercept: p.f64()? })
        }
        1 => {
            let k = p.u64()? as usize;
            let cols = p.u64()? as usize;
            let flat = p.f64s()?;
            let labels = p.f64s()?;
            let points = crate::features::FeatureMatrix::from_flat(cols, flat).map_err(|e| Error::Corrupt(e.to_string()))?;
            if points.n_rows() != labels.len() || k == 0 || k > labels.len() {
                return Err(Error::Corrupt("inconsistent knn payload".into()));
            }
            ModelParams::Knn(KnnParams { k, points, labels })
        }
        2 => ModelParams::Tree(p.tree()?),
        3 => {
            let n = p.len()?;
            let trees = (0..n).map(|_| p.tree()).collect::<Result<Vec<_>>>()?;
            if trees.is_empty() {
                return Err(Error::Corrupt("forest without trees".into()));
            }
            ModelParams::Forest(ForestParams { trees })
        }
        4 => {
            let base = p.f64()?;
            let learning_rate = p.f64()?;
            let n = p.len()?;
            let trees = (0..n).map(|_| p.tree()).collect::<Result<Vec<_>>>()?;
            ModelParams::Boosting(BoostingParams { base, learning_rate, trees })
        }
        t => return Err(Error::Corrupt(format!("unknown parameter tag {t}"))),
    };
    p.finish()?;
    d.finish()?;
    let kind_ok = matches!(
        (family, &params),
        (Family::LinearOls | Family::ElasticNet, ModelParams::Linear(_))
            | (Family::Knn, ModelParams::Knn(_))
            | (Family::DecisionTree, ModelParams::Tree(_))
            | (Family::RandomForest, ModelParams::Forest(_))
            | (Family::GradientBoosting, ModelParams::Boosting(_))
    );
    if !kind_ok {
        return Err(Error::Corrupt("parameters do not match the family".into()));
    }
    let tree_ok = |t: &Tree| t.preorder().iter().all(|n| n.feature.is_none_or(|f| (f as usize) < n_features));
    let dims_ok = match &params {
        ModelParams::Linear(l) => l.weights.len() == n_features,
        ModelParams::Knn(k) => k.points.n_cols() == n_features,
        ModelParams::Tree(t) => tree_ok(t),
        ModelParams::Forest(f) => f.trees.iter().all(tree_ok),
        ModelParams::Boosting(b) => b.trees.iter().all(tree_ok),
    };
    if !dims_ok {
        return Err(Error::Corrupt("parameters reference more inputs than the model has".into()));
    }
    Ok(RegressionModel { family, hyperparameters, trained_on, n_features, params })
}

#[cfg(test)]
mod tests;

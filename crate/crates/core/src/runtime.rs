//! The deployed predictor: picks a thread count per GEMM call from model
//! predictions and dispatches the multiplication.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use crate::bundle::{load_bundle, ModelBundle};
use crate::error::{Error, Result};
use crate::features::{raw_features, TransformState, FEATURE_NAMES};
use crate::gemm::{GemmBackend, GemmShape, Matrix, NativeBackend};
use crate::host;
use crate::models::{RegressionModel, Regressor};

/// Candidates predicted within this relative margin of the fastest are
/// treated as ties, and the smallest thread count among them wins.
pub const TIE_BAND: f64 = 0.01;

/// Environment variable naming the bundle directory.
pub const BUNDLE_ENV: &str = "ADSALA_BUNDLE";
pub const DEFAULT_BUNDLE_DIR: &str = "adsala_bundle";

pub fn default_bundle_path() -> PathBuf {
    std::env::var_os(BUNDLE_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from(DEFAULT_BUNDLE_DIR))
}

/// Index of the chosen candidate given predicted runtimes (ascending
/// candidates assumed).
pub fn choose_index(runtimes: &[f64]) -> usize {
    let best = runtimes.iter().copied().fold(f64::INFINITY, |m, v| if v < m { v } else { m });
    if !best.is_finite() {
        // nothing usable predicted: fall back to the first finite entry, else the first
        return runtimes.iter().position(|v| v.is_finite()).unwrap_or(0);
    }
    runtimes
        .iter()
        .position(|&r| r <= best + TIE_BAND * best.abs())
        .expect("the minimum is within its own band")
}

/// Predicted runtime in seconds of `shape` on `n_threads`.
pub fn predict_runtime<M: Regressor + ?Sized>(model: &M, transform: &TransformState, shape: GemmShape, n_threads: usize) -> f64 {
    let input = transform.transform(&raw_features(shape, n_threads));
    transform.label_transform.inverse(model.predict_row(&input))
}

/// Reusable buffers for evaluating one model over every candidate.
pub struct SelectionPass<'a> {
    transform: &'a TransformState,
    candidates: &'a [usize],
    inputs: Vec<f64>,
    runtimes: Vec<f64>,
}

impl<'a> SelectionPass<'a> {
    pub fn new(transform: &'a TransformState, candidates: &'a [usize]) -> Result<Self> {
        transform.validate()?;
        if transform.feature_names.iter().map(String::as_str).ne(FEATURE_NAMES.iter().copied()) {
            return Err(Error::Contract("transform was not fitted on the GEMM feature schema".into()));
        }
        if candidates.is_empty() {
            return Err(Error::Parameter("no candidate thread counts".into()));
        }
        Ok(SelectionPass {
            transform,
            candidates,
            inputs: vec![0.0; candidates.len() * transform.n_outputs()],
            runtimes: vec![0.0; candidates.len()],
        })
    }

    /// Predicted runtime in seconds for each candidate.
    pub fn predict<M: Regressor + ?Sized>(&mut self, model: &M, shape: GemmShape) -> &[f64] {
        let w = self.transform.n_outputs();
        for (i, &t) in self.candidates.iter().enumerate() {
            let raw = raw_features(shape, t);
            self.transform.transform_into(&raw, &mut self.inputs[i * w..(i + 1) * w]);
        }
        let label = self.transform.label_transform;
        for (i, r) in self.runtimes.iter_mut().enumerate() {
            *r = label.inverse(model.predict_row(&self.inputs[i * w..(i + 1) * w]));
        }
        &self.runtimes
    }

    pub fn choose<M: Regressor + ?Sized>(&mut self, model: &M, shape: GemmShape) -> usize {
        let idx = choose_index(self.predict(model, shape));
        self.candidates[idx]
    }
}

/// Outcome of one [`Predictor::gemm`] call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decision {
    pub chosen_threads: usize,
    pub cache_hit: bool,
    /// Time spent evaluating the model; zero on a cache hit.
    pub eval_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PredictorStats {
    pub calls: u64,
    pub cache_hits: u64,
    pub eval_seconds: f64,
}

struct State {
    capacity: usize,
    /// Most recently used last.
    entries: VecDeque<(GemmShape, usize)>,
}

impl State {
    fn lookup(&mut self, shape: GemmShape) -> Option<usize> {
        let pos = self.entries.iter().position(|(s, _)| *s == shape)?;
        let hit = self.entries.remove(pos).unwrap();
        self.entries.push_back(hit);
        Some(hit.1)
    }

    fn insert(&mut self, shape: GemmShape, threads: usize) {
        if let Some(pos) = self.entries.iter().position(|(s, _)| *s == shape) {
            self.entries.remove(pos);
        }
        self.entries.push_back((shape, threads));
        while self.entries.len() > self.capacity {
            self.entries.pop_front();
        }
    }
}

/// Model, transform and candidate grid loaded once, plus a small decision
/// cache. Safe to share across threads; GEMM dispatch is serialized.
pub struct Predictor<M: Regressor = RegressionModel> {
    model: M,
    transform: TransformState,
    candidates: Vec<usize>,
    state: Mutex<State>,
    backend: Mutex<NativeBackend>,
    calls: AtomicU64,
    hits: AtomicU64,
    eval_nanos: AtomicU64,
}

impl<M: Regressor> Predictor<M> {
    /// Builds a predictor. Candidates above the host's logical core count
    /// are dropped with a warning. `cache_capacity` 1 remembers only the
    /// most recent shape.
    pub fn new(model: M, transform: TransformState, candidates: &[usize], cache_capacity: usize) -> Result<Self> {
        let mut cands = candidates.to_vec();
        cands.sort_unstable();
        cands.dedup();
        if cands.first().is_none_or(|&c| c == 0) {
            return Err(Error::Parameter("candidates must be a non-empty list of positive counts".into()));
        }
        let limit = host::logical_cores();
        if *cands.last().unwrap() > limit {
            log::warn!(
                "bundle candidates go up to {} threads but this host has {limit}; dropping the excess",
                cands.last().unwrap()
            );
            cands.retain(|&c| c <= limit);
            if cands.is_empty() {
                cands.push(1);
            }
        }
        if cache_capacity == 0 {
            return Err(Error::Parameter("cache capacity must be at least 1".into()));
        }
        // validates the transform as a side effect
        SelectionPass::new(&transform, &cands)?;
        if model.n_features() != transform.n_outputs() {
            return Err(Error::Contract(format!(
                "model expects {} inputs, transform yields {}",
                model.n_features(),
                transform.n_outputs()
            )));
        }
        if let Some(fp) = model.schema() {
            if fp != transform.output_fingerprint() {
                return Err(Error::Contract("model was trained on a different feature selection".into()));
            }
        }
        let backend = NativeBackend::new(*cands.last().unwrap())?;
        backend.warm_up();
        Ok(Predictor {
            model,
            transform,
            candidates: cands,
            state: Mutex::new(State { capacity: cache_capacity, entries: VecDeque::new() }),
            backend: Mutex::new(backend),
            calls: AtomicU64::new(0),
            hits: AtomicU64::new(0),
            eval_nanos: AtomicU64::new(0),
        })
    }

    pub fn candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn transform(&self) -> &TransformState {
        &self.transform
    }

    /// Predicted runtime in seconds for every candidate.
    pub fn predicted_runtimes(&self, shape: GemmShape) -> Vec<(usize, f64)> {
        let mut pass = SelectionPass::new(&self.transform, &self.candidates).expect("validated at construction");
        let rt = pass.predict(&self.model, shape).to_vec();
        self.candidates.iter().copied().zip(rt).collect()
    }

    /// Fresh model evaluation for `shape`; the result replaces the cached
    /// decision for that shape.
    pub fn predict_threads(&self, shape: GemmShape) -> usize {
        let t = self.evaluate(shape);
        self.lock_state().insert(shape, t);
        t
    }

    fn evaluate(&self, shape: GemmShape) -> usize {
        let mut pass = SelectionPass::new(&self.transform, &self.candidates).expect("validated at construction");
        pass.choose(&self.model, shape)
    }

    fn lock_state(&self) -> std::sync::MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Chooses the thread count (reusing the cached decision when the shape
    /// repeats) and computes `C ← alpha·A·B + beta·C`.
    pub fn gemm(&self, shape: GemmShape, alpha: f32, beta: f32, a: &Matrix, b: &Matrix, c: &mut Matrix) -> Result<Decision> {
        let decision = self.decide(shape);
        let mut backend = self.backend.lock().unwrap_or_else(|e| e.into_inner());
        backend.set_threads(decision.chosen_threads)?;
        backend.gemm(shape, alpha, beta, a, b, c)?;
        Ok(decision)
    }

    /// The thread choice [`Predictor::gemm`] would make, with cache and
    /// statistics updated, but without multiplying.
    pub fn decide(&self, shape: GemmShape) -> Decision {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut state = self.lock_state();
        if let Some(t) = state.lookup(shape) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Decision { chosen_threads: t, cache_hit: true, eval_seconds: 0.0 };
        }
        let t0 = Instant::now();
        let t = self.evaluate(shape);
        let eval = t0.elapsed();
        state.insert(shape, t);
        self.eval_nanos.fetch_add(eval.as_nanos() as u64, Ordering::Relaxed);
        Decision { chosen_threads: t, cache_hit: false, eval_seconds: eval.as_secs_f64().max(1e-9) }
    }

    pub fn stats(&self) -> PredictorStats {
        PredictorStats {
            calls: self.calls.load(Ordering::Relaxed),
            cache_hits: self.hits.load(Ordering::Relaxed),
            eval_seconds: self.eval_nanos.load(Ordering::Relaxed) as f64 * 1e-9,
        }
    }

    pub fn clear_cache(&self) {
        self.lock_state().entries.clear();
    }
}

impl Predictor<RegressionModel> {
    pub fn from_bundle(bundle: ModelBundle, cache_capacity: usize) -> Result<Self> {
        Predictor::new(bundle.model, bundle.transform, &bundle.candidates, cache_capacity)
    }
}

/// Loads and verifies a bundle directory; no file I/O happens afterwards.
pub fn load_predictor(path: &Path) -> Result<Predictor> {
    Predictor::from_bundle(load_bundle(path)?, 1)
}

/// GEMM with the thread count chosen by `predictor`.
pub fn adsala_gemm<M: Regressor>(
    predictor: &Predictor<M>,
    shape: GemmShape,
    alpha: f32,
    beta: f32,
    a: &Matrix,
    b: &Matrix,
    c: &mut Matrix,
) -> Result<Decision> {
    predictor.gemm(shape, alpha, beta, a, b, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{LabelTransform, THREADS_FEATURE};
    use crate::gemm::{naive_gemm, GemmParams};

    /// Runtime as a function of the raw thread count (identity transform).
    struct Stub<F: Fn(f64) -> f64 + Send + Sync>(F);

    impl<F: Fn(f64) -> f64 + Send + Sync> Regressor for Stub<F> {
        fn predict_row(&self, x: &[f64]) -> f64 {
            (self.0)(x[THREADS_FEATURE])
        }
        fn n_features(&self) -> usize {
            crate::features::N_FEATURES
        }
    }

    fn identity() -> TransformState {
        TransformState::identity(LabelTransform::Identity)
    }

    fn shape() -> GemmShape {
        GemmShape::new(100, 200, 300).unwrap()
    }

    #[test]
    fn stub_choices_follow_the_argmin() {
        let cands = [1, 2, 3, 4, 6, 8];
        let t = identity();
        let mut pass = SelectionPass::new(&t, &cands).unwrap();
        assert_eq!(pass.choose(&Stub(|t| 1.0 / t), shape()), 8);
        assert_eq!(pass.choose(&Stub(|t| t), shape()), 1);
        assert_eq!(pass.choose(&Stub(|_| 0.5), shape()), 1);
        assert_eq!(pass.choose(&Stub(|t| (t - 4.0).abs() + 10.0), shape()), 4);
        // 3..8 threads all predict within 1 % of each other
        assert_eq!(pass.choose(&Stub(|t| if t >= 3.0 { 1.0 + 0.001 * t } else { 2.0 }), shape()), 3);
    }

    #[test]
    fn tie_band_edges() {
        assert_eq!(choose_index(&[1.0101, 1.0]), 1);
        assert_eq!(choose_index(&[1.0099, 1.0]), 0);
        assert_eq!(choose_index(&[f64::NAN, 2.0, 3.0]), 1);
        assert_eq!(choose_index(&[f64::NAN, f64::NAN]), 0);
    }

    #[test]
    fn log_label_runtimes_are_exponentiated() {
        let cands = [1, 2];
        let t = TransformState::identity(LabelTransform::LogE);
        let mut pass = SelectionPass::new(&t, &cands).unwrap();
        let r = pass.predict(&Stub(|t| t.ln()), shape()).to_vec();
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_entry_cache_semantics() {
        let p = Predictor::new(Stub(|t| t), identity(), &[1], 1).unwrap();
        let s1 = GemmShape::new(8, 8, 8).unwrap();
        let s2 = GemmShape::new(9, 9, 9).unwrap();
        let first = p.decide(s1);
        let second = p.decide(s1);
        assert!(!first.cache_hit && second.cache_hit);
        assert_eq!(second.eval_seconds, 0.0);
        p.clear_cache();
        for s in [s1, s2, s1] {
            assert!(!p.decide(s).cache_hit);
        }
        let st = p.stats();
        assert_eq!((st.calls, st.cache_hits), (5, 1));
        let lru = Predictor::new(Stub(|t| t), identity(), &[1], 2).unwrap();
        let hits: Vec<bool> = [s1, s2, s1].iter().map(|&s| lru.decide(s).cache_hit).collect();
        assert_eq!(hits, vec![false, false, true]);
    }

    #[test]
    fn candidates_are_sorted_and_truncated() {
        let too_many = host::logical_cores() + 3;
        let p = Predictor::new(Stub(|t| t), identity(), &[too_many, 1, 1], 1).unwrap();
        assert_eq!(p.candidates(), &[1]);
        assert!(Predictor::new(Stub(|t| t), identity(), &[], 1).is_err());
        assert!(Predictor::new(Stub(|t| t), identity(), &[0, 1], 1).is_err());
        assert!(Predictor::new(Stub(|t| t), identity(), &[1], 0).is_err());
    }

    #[test]
    fn gemm_matches_reference() {
        let p = Predictor::new(Stub(|t| 1.0 / t), identity(), &[1], 1).unwrap();
        let s = GemmShape::new(37, 29, 41).unwrap();
        let a = Matrix::random(37, 29, 1).unwrap();
        let b = Matrix::random(29, 41, 2).unwrap();
        let mut c = Matrix::random(37, 41, 3).unwrap();
        let mut want = c.clone();
        naive_gemm(s, GemmParams::new(1.5, 0.5, 1), &a, &b, &mut want).unwrap();
        let d = adsala_gemm(&p, s, 1.5, 0.5, &a, &b, &mut c).unwrap();
        assert_eq!(d.chosen_threads, 1);
        for (x, y) in c.as_slice().iter().zip(want.as_slice()) {
            assert!((x - y).abs() < 1e-3, "{x} vs {y}");
        }
    }

    proptest::proptest! {
        #[test]
        fn scaling_predictions_keeps_the_choice(scale in 1e-6f64..1e6, p in 0.1f64..3.0, m in 1usize..5000) {
            let cands = [1, 2, 3, 4, 5, 6, 7, 8, 12, 16];
            let t = identity();
            let f = move |t: f64| (t - 5.5).abs().powf(p) + 0.3 * (m as f64).sqrt() / t;
            let mut pass = SelectionPass::new(&t, &cands).unwrap();
            let s = GemmShape::new(m, 64, 64).unwrap();
            let a = pass.choose(&Stub(f), s);
            let b = pass.choose(&Stub(move |x| scale * f(x)), s);
            proptest::prop_assert_eq!(a, b);
        }
    }
}

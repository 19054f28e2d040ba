use sha2::{Digest, Sha256};

use crate::gemm::GemmShape;

pub const N_FEATURES: usize = 11;

/// Feature order produced by [`raw_features`]. Indices 0..=3 are the raw
/// inputs, 4..=8 the serial terms, 9..=10 the per-thread parallel terms.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "m",
    "k",
    "n",
    "n_threads",
    "m*k",
    "k*n",
    "m*n",
    "m*k+k*n+m*n",
    "m*k*n",
    "m*k*n/n_threads",
    "(m*k+k*n+m*n)/n_threads",
];

pub const THREADS_FEATURE: usize = 3;

/// Named, ordered feature values.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Vec<String>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, schema: Vec<String>) -> Self {
        debug_assert_eq!(values.len(), schema.len());
        FeatureVector { values, schema }
    }

    pub fn fingerprint(&self) -> u64 {
        schema_fingerprint(&self.schema)
    }
}

pub fn raw_features(shape: GemmShape, n_threads: usize) -> [f64; N_FEATURES] {
    let (m, k, n) = (shape.m as f64, shape.k as f64, shape.n as f64);
    let t = n_threads as f64;
    let (mk, kn, mn) = (m * k, k * n, m * n);
    let mem = mk + kn + mn;
    let mkn = mk * n;
    [m, k, n, t, mk, kn, mn, mem, mkn, mkn / t, mem / t]
}

pub fn build_features(shape: GemmShape, n_threads: usize) -> FeatureVector {
    FeatureVector::new(
        raw_features(shape, n_threads).to_vec(),
        FEATURE_NAMES.iter().map(|s| s.to_string()).collect(),
    )
}

/// Stable 64-bit identity of an ordered list of feature names.
pub fn schema_fingerprint<S: AsRef<str>>(names: &[S]) -> u64 {
    let mut h = Sha256::new();
    for n in names {
        h.update(n.as_ref().as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(m: usize, k: usize, n: usize) -> GemmShape {
        GemmShape::new(m, k, n).unwrap()
    }

    #[test]
    fn worked_example() {
        assert_eq!(
            raw_features(s(2, 3, 4), 2),
            [2.0, 3.0, 4.0, 2.0, 6.0, 12.0, 8.0, 26.0, 24.0, 12.0, 13.0]
        );
        assert_eq!(
            raw_features(s(1, 1, 1), 1),
            [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 3.0, 1.0, 1.0, 3.0]
        );
    }

    #[test]
    fn single_thread_parallel_terms_equal_serial() {
        let f = raw_features(s(17, 300, 41), 1);
        assert_eq!(f[9], f[8]);
        assert_eq!(f[10], f[7]);
    }

    #[test]
    fn fingerprint_depends_on_order() {
        assert_ne!(schema_fingerprint(&["a", "b"]), schema_fingerprint(&["b", "a"]));
        assert_ne!(schema_fingerprint(&["ab"]), schema_fingerprint(&["a", "b"]));
        assert_eq!(build_features(s(1, 2, 3), 1).fingerprint(), schema_fingerprint(&FEATURE_NAMES));
    }
}

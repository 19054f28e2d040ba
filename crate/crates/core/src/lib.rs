//! Learned thread-count selection for multi-threaded SGEMM.
//!
//! At install time a machine benchmarks its own GEMM over quasi-randomly
//! sampled shapes and thread counts, fits a runtime regression model, and
//! persists it as a [`bundle::ModelBundle`]. At run time a
//! [`runtime::Predictor`] evaluates that model for every candidate thread
//! count and dispatches the GEMM on the fastest one.

pub mod bundle;
pub mod error;
pub mod features;
pub mod gemm;
pub mod harness;
pub mod host;
pub mod models;
pub mod runtime;
pub mod sampler;
pub mod selection;

pub use error::{Error, ErrorClass, Result};

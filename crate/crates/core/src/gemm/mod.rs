//! Single-precision GEMM: `C ← α·A·B + β·C` on row-major aligned matrices.

mod affinity;
mod backend;
mod kernel;
mod matrix;
mod pool;

use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

pub use affinity::{
    current_policy, current_thread_affinity, pin_current_thread, pinning_supported,
    set_affinity_policy, AffinityDescriptor, AffinityPolicy,
};
pub use backend::{GemmBackend, NativeBackend};
pub use kernel::BlockSizes;
pub use matrix::{Fill, Matrix, DEFAULT_ALIGNMENT};

use crate::error::{Error, Result};

/// Dimensions of one GEMM problem: A is m×k, B is k×n, C is m×n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GemmShape {
    pub m: usize,
    pub k: usize,
    pub n: usize,
}

impl GemmShape {
    pub fn new(m: usize, k: usize, n: usize) -> Result<Self> {
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::Shape(format!(
                "dimensions must be positive, got ({m}, {k}, {n})"
            )));
        }
        Ok(GemmShape { m, k, n })
    }

    pub fn flops(&self) -> f64 {
        2.0 * self.m as f64 * self.k as f64 * self.n as f64
    }
}

impl fmt::Display for GemmShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.m, self.k, self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl Precision {
    pub fn bytes(self) -> u64 {
        match self {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" | "s" | "f32" => Ok(Precision::Single),
            "double" | "d" | "f64" => Ok(Precision::Double),
            _ => Err(Error::Parameter(format!("unknown precision {s:?}"))),
        }
    }
}

/// Bytes held by A, B and C together.
pub fn memory_footprint(shape: GemmShape, precision: Precision) -> u64 {
    let (m, k, n) = (shape.m as u64, shape.k as u64, shape.n as u64);
    precision.bytes() * (m * k + k * n + m * n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Transpose {
    #[default]
    No,
    Yes,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GemmParams {
    pub alpha: f32,
    pub beta: f32,
    pub n_threads: usize,
    pub trans_a: Transpose,
    pub trans_b: Transpose,
}

impl GemmParams {
    pub fn new(alpha: f32, beta: f32, n_threads: usize) -> Self {
        GemmParams {
            alpha,
            beta,
            n_threads,
            trans_a: Transpose::No,
            trans_b: Transpose::No,
        }
    }

    fn check_transpose(&self) -> Result<()> {
        if self.trans_a != Transpose::No || self.trans_b != Transpose::No {
            return Err(Error::Parameter(
                "only the no-transpose path is implemented".into(),
            ));
        }
        Ok(())
    }
}

pub(crate) fn validate_operands(shape: GemmShape, a: &Matrix, b: &Matrix, c: &Matrix) -> Result<()> {
    let check = |name: &str, mat: &Matrix, rows: usize, cols: usize| {
        if mat.rows() != rows || mat.cols() != cols {
            Err(Error::Shape(format!(
                "{name} is {}x{}, expected {rows}x{cols} for shape {shape}",
                mat.rows(),
                mat.cols()
            )))
        } else {
            Ok(())
        }
    };
    check("A", a, shape.m, shape.k)?;
    check("B", b, shape.k, shape.n)?;
    check("C", c, shape.m, shape.n)
}

fn process_backend() -> &'static Mutex<NativeBackend> {
    static BACKEND: OnceLock<Mutex<NativeBackend>> = OnceLock::new();
    BACKEND.get_or_init(|| Mutex::new(NativeBackend::new(1).expect("one thread is always valid")))
}

/// Multi-threaded SGEMM on the process-wide native backend.
pub fn gemm(shape: GemmShape, params: GemmParams, a: &Matrix, b: &Matrix, c: &mut Matrix) -> Result<()> {
    params.check_transpose()?;
    backend::check_threads(params.n_threads)?;
    let mut be = process_backend().lock().unwrap_or_else(|e| e.into_inner());
    be.set_threads(params.n_threads)?;
    be.gemm(shape, params.alpha, params.beta, a, b, c)
}

/// Single-threaded triple-loop reference with f64 accumulation.
pub fn naive_gemm(shape: GemmShape, params: GemmParams, a: &Matrix, b: &Matrix, c: &mut Matrix) -> Result<()> {
    params.check_transpose()?;
    backend::check_threads(params.n_threads)?;
    validate_operands(shape, a, b, c)?;
    let (m, k, n) = (shape.m, shape.k, shape.n);
    let (a, b) = (a.as_slice(), b.as_slice());
    let alpha = params.alpha as f64;
    let beta = params.beta as f64;
    let c = c.as_mut_slice();
    for i in 0..m {
        for j in 0..n {
            let mut sum = 0.0f64;
            for l in 0..k {
                sum += a[i * k + l] as f64 * b[l * n + j] as f64;
            }
            let prev = if beta == 0.0 { 0.0 } else { beta * c[i * n + j] as f64 };
            c[i * n + j] = (alpha * sum + prev) as f32;
        }
    }
    Ok(())
}

use std::alloc::{self, Layout};
use std::fmt;
use std::ptr::NonNull;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const DEFAULT_ALIGNMENT: usize = 64;

/// Initial contents of a freshly allocated matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fill {
    Zeros,
    /// Uniform values in [-1, 1) from a seeded ChaCha stream.
    UniformRandom(u64),
}

/// Dense row-major single-precision matrix on an aligned heap buffer.
pub struct Matrix {
    ptr: NonNull<f32>,
    rows: usize,
    cols: usize,
    layout: Layout,
}

// SAFETY: Matrix uniquely owns its buffer; shared access is read-only.
unsafe impl Send for Matrix {}
unsafe impl Sync for Matrix {}

impl Matrix {
    /// Allocates a `rows × cols` matrix whose base address is a multiple of
    /// `alignment`. The alignment must be a power of two no smaller than a
    /// machine word.
    pub fn alloc(rows: usize, cols: usize, alignment: usize, fill: Fill) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if !alignment.is_power_of_two() || alignment < std::mem::size_of::<usize>() {
            return Err(Error::Parameter(format!(
                "alignment must be a power of two >= {} bytes, got {alignment}",
                std::mem::size_of::<usize>()
            )));
        }
        let len = rows
            .checked_mul(cols)
            .ok_or_else(|| Error::Resource(format!("{rows}x{cols} overflows usize")))?;
        let bytes = len
            .checked_mul(std::mem::size_of::<f32>())
            .ok_or_else(|| Error::Resource(format!("{rows}x{cols} overflows usize")))?;
        let layout = Layout::from_size_align(bytes, alignment)
            .map_err(|e| Error::Resource(format!("invalid layout: {e}")))?;
        // SAFETY: layout has non-zero size.
        let raw = unsafe { alloc::alloc_zeroed(layout) } as *mut f32;
        let ptr = NonNull::new(raw).ok_or_else(|| {
            Error::Resource(format!("allocation of {bytes} bytes failed"))
        })?;
        let mut m = Matrix {
            ptr,
            rows,
            cols,
            layout,
        };
        if let Fill::UniformRandom(seed) = fill {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for v in m.as_mut_slice() {
                *v = rng.random_range(-1.0f32..1.0);
            }
        }
        Ok(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::alloc(rows, cols, DEFAULT_ALIGNMENT, Fill::Zeros)
    }

    pub fn random(rows: usize, cols: usize, seed: u64) -> Result<Self> {
        Self::alloc(rows, cols, DEFAULT_ALIGNMENT, Fill::UniformRandom(seed))
    }

    /// Copies row-major `data` into a new aligned matrix.
    pub fn from_slice(rows: usize, cols: usize, data: &[f32]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} elements for {rows}x{cols}, got {}",
                rows * cols,
                data.len()
            )));
        }
        let mut m = Self::zeros(rows, cols)?;
        m.as_mut_slice().copy_from_slice(data);
        Ok(m)
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map(|r| r.as_ref().len()).unwrap_or(0);
        if rows.iter().any(|r| r.as_ref().len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let flat: Vec<f32> = rows.iter().flat_map(|r| r.as_ref().iter().copied()).collect();
        Self::from_slice(rows.len(), cols, &flat)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alignment(&self) -> usize {
        self.layout.align()
    }

    pub fn as_slice(&self) -> &[f32] {
        // SAFETY: ptr points to rows*cols initialized f32 values.
        unsafe { std::slice::from_raw_parts(self.ptr.as_ptr(), self.rows * self.cols) }
    }

    pub fn as_mut_slice(&mut self) -> &mut [f32] {
        // SAFETY: unique borrow of an owned buffer.
        unsafe { std::slice::from_raw_parts_mut(self.ptr.as_ptr(), self.rows * self.cols) }
    }

    pub fn as_ptr(&self) -> *const f32 {
        self.ptr.as_ptr()
    }

    pub fn as_mut_ptr(&mut self) -> *mut f32 {
        self.ptr.as_ptr()
    }

    pub fn get(&self, i: usize, j: usize) -> f32 {
        self.as_slice()[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f32) {
        let cols = self.cols;
        self.as_mut_slice()[i * cols + j] = v;
    }

    pub fn max_abs(&self) -> f32 {
        self.as_slice().iter().fold(0.0f32, |acc, v| acc.max(v.abs()))
    }

    pub fn to_rows(&self) -> Vec<Vec<f32>> {
        self.as_slice().chunks(self.cols).map(|r| r.to_vec()).collect()
    }
}

impl Drop for Matrix {
    fn drop(&mut self) {
        // SAFETY: allocated in `alloc` with this exact layout.
        unsafe { alloc::dealloc(self.ptr.as_ptr() as *mut u8, self.layout) }
    }
}

impl Clone for Matrix {
    fn clone(&self) -> Self {
        let mut m = Matrix::alloc(self.rows, self.cols, self.alignment(), Fill::Zeros)
            .expect("clone of an existing matrix allocation");
        m.as_mut_slice().copy_from_slice(self.as_slice());
        m
    }
}

impl PartialEq for Matrix {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols && self.as_slice() == other.as_slice()
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matrix")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .field("alignment", &self.alignment())
            .finish()
    }
}

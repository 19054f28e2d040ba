use std::sync::{Arc, Mutex};

use super::affinity::{self, AffinityDescriptor, AffinityPolicy};
use super::kernel::{compute_block, split_range, thread_grid, BlockSizes, Operands, MR, NR};
use super::pool::WorkerPool;
use super::{validate_operands, GemmShape, Matrix};
use crate::error::{Error, Result};
use crate::host;

/// A GEMM implementation whose thread count is set explicitly.
///
/// Only [`NativeBackend`] ships; vendor libraries can be plugged in by
/// implementing this trait.
pub trait GemmBackend: Send + Sync {
    fn name(&self) -> &str;

    fn threads(&self) -> usize;

    fn set_threads(&mut self, n_threads: usize) -> Result<()>;

    /// `C ← alpha·A·B + beta·C` on the configured number of threads.
    fn gemm(
        &self,
        shape: GemmShape,
        alpha: f32,
        beta: f32,
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
    ) -> Result<()>;
}

/// Blocked multi-threaded SGEMM over a persistent worker pool.
///
/// The pool is created lazily at the first call and recreated only when a
/// call asks for more workers than it holds; smaller thread counts run on a
/// prefix of the existing workers.
pub struct NativeBackend {
    blocks: BlockSizes,
    affinity: AffinityDescriptor,
    threads: usize,
    pool: Mutex<Option<Arc<WorkerPool>>>,
}

impl NativeBackend {
    /// Block sizes from the environment, affinity from the process policy.
    pub fn new(n_threads: usize) -> Result<Self> {
        Self::with_config(
            n_threads,
            BlockSizes::from_env(),
            affinity::current_policy(),
        )
    }

    pub fn with_config(n_threads: usize, blocks: BlockSizes, policy: AffinityPolicy) -> Result<Self> {
        check_threads(n_threads)?;
        if blocks.mc == 0 || blocks.kc == 0 || blocks.nc == 0 {
            return Err(Error::Parameter(format!("block sizes must be positive: {blocks:?}")));
        }
        let affinity = affinity::resolve(policy);
        if affinity.warning {
            log::warn!(
                "affinity policy {} unavailable on this platform; workers are unpinned",
                policy
            );
        }
        Ok(NativeBackend {
            blocks,
            affinity,
            threads: n_threads,
            pool: Mutex::new(None),
        })
    }

    pub fn block_sizes(&self) -> BlockSizes {
        self.blocks
    }

    pub fn affinity(&self) -> &AffinityDescriptor {
        &self.affinity
    }

    /// Per-worker pinning outcome of the current pool, if one exists.
    pub fn pinned_workers(&self) -> Option<Vec<bool>> {
        self.pool.lock().unwrap().as_ref().map(|p| p.pinned().to_vec())
    }

    /// Creates the worker pool now instead of at the first call.
    pub fn warm_up(&self) {
        self.pool_for(self.threads);
    }

    fn pool_for(&self, workers: usize) -> Arc<WorkerPool> {
        let mut slot = self.pool.lock().unwrap();
        match slot.as_ref() {
            Some(p) if p.capacity() >= workers => Arc::clone(p),
            _ => {
                // drop the old pool first so its threads exit
                *slot = None;
                let p = Arc::new(WorkerPool::new(workers, &self.affinity));
                *slot = Some(Arc::clone(&p));
                p
            }
        }
    }

    /// Runs the blocked kernel on exactly `threads` workers without checking
    /// `threads` against the host core count.
    pub(crate) fn run(
        &self,
        shape: GemmShape,
        alpha: f32,
        beta: f32,
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
        threads: usize,
    ) -> Result<()> {
        validate_operands(shape, a, b, c)?;
        if alpha == 0.0 {
            scale_in_place(c, beta);
            return Ok(());
        }
        let ops = Operands {
            m: shape.m,
            k: shape.k,
            n: shape.n,
            alpha,
            beta,
            a: a.as_ptr(),
            b: b.as_ptr(),
            c: c.as_mut_ptr(),
        };
        let blocks = self.blocks;
        let (row_parts, col_parts) = thread_grid(shape.m, shape.n, threads);
        let job = move |worker: usize| {
            let rows = split_range(ops.m, row_parts, worker / col_parts, MR);
            let cols = split_range(ops.n, col_parts, worker % col_parts, NR);
            // SAFETY: the grid tiles C into disjoint rectangles, one per worker.
            unsafe { compute_block(&ops, rows, cols, blocks) };
        };
        if threads == 1 {
            job(0);
        } else {
            self.pool_for(threads).run(threads, job);
        }
        Ok(())
    }
}

impl GemmBackend for NativeBackend {
    fn name(&self) -> &str {
        "native"
    }

    fn threads(&self) -> usize {
        self.threads
    }

    fn set_threads(&mut self, n_threads: usize) -> Result<()> {
        check_threads(n_threads)?;
        self.threads = n_threads;
        Ok(())
    }

    fn gemm(
        &self,
        shape: GemmShape,
        alpha: f32,
        beta: f32,
        a: &Matrix,
        b: &Matrix,
        c: &mut Matrix,
    ) -> Result<()> {
        self.run(shape, alpha, beta, a, b, c, self.threads)
    }
}

pub(crate) fn check_threads(n_threads: usize) -> Result<()> {
    let max = host::logical_cores();
    if n_threads == 0 || n_threads > max {
        return Err(Error::Parameter(format!(
            "n_threads must be in 1..={max}, got {n_threads}"
        )));
    }
    Ok(())
}

fn scale_in_place(c: &mut Matrix, beta: f32) {
    if beta == 1.0 {
        return;
    }
    for v in c.as_mut_slice() {
        *v = if beta == 0.0 { 0.0 } else { beta * *v };
    }
}

//! Cache-blocked SGEMM kernel: packed A/B panels feeding an MR×NR
//! register-tile micro-kernel.

use std::cell::RefCell;
use std::ops::Range;
use std::sync::OnceLock;

pub const MR: usize = 6;
pub const NR: usize = 16;

/// Cache block sizes in elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSizes {
    pub mc: usize,
    pub kc: usize,
    pub nc: usize,
}

impl Default for BlockSizes {
    fn default() -> Self {
        BlockSizes {
            mc: 128,
            kc: 256,
            nc: 512,
        }
    }
}

impl BlockSizes {
    /// Defaults overridden by `ADSALA_BLOCK_MC`, `ADSALA_BLOCK_KC` and
    /// `ADSALA_BLOCK_NC`.
    pub fn from_env() -> Self {
        let read = |key: &str, default: usize| -> usize {
            match std::env::var(key) {
                Ok(v) => match v.trim().parse::<usize>() {
                    Ok(n) if n > 0 => n,
                    _ => {
                        log::warn!("ignoring invalid {key}={v:?}");
                        default
                    }
                },
                Err(_) => default,
            }
        };
        let d = Self::default();
        BlockSizes {
            mc: read("ADSALA_BLOCK_MC", d.mc),
            kc: read("ADSALA_BLOCK_KC", d.kc),
            nc: read("ADSALA_BLOCK_NC", d.nc),
        }
    }

    /// Rounds mc/nc up to whole register tiles.
    pub(crate) fn normalized(self) -> Self {
        BlockSizes {
            mc: self.mc.div_ceil(MR) * MR,
            kc: self.kc.max(1),
            nc: self.nc.div_ceil(NR) * NR,
        }
    }
}

/// Splits C into a `row_parts × col_parts` grid with `row_parts * col_parts
/// == threads`, preferring row panels when the tile work is equal.
pub(crate) fn thread_grid(m: usize, n: usize, threads: usize) -> (usize, usize) {
    let mut best = (threads, 1);
    let mut best_cost = usize::MAX;
    for pr in (1..=threads).rev() {
        if threads % pr != 0 {
            continue;
        }
        let pc = threads / pr;
        let rows = m.div_ceil(MR).div_ceil(pr) * MR;
        let cols = n.div_ceil(NR).div_ceil(pc) * NR;
        let cost = rows.min(m.max(1)) * cols.min(n.max(1));
        if cost < best_cost {
            best_cost = cost;
            best = (pr, pc);
        }
    }
    best
}

/// Range of `len` assigned to part `index` of `parts`, aligned to `unit`.
pub(crate) fn split_range(len: usize, parts: usize, index: usize, unit: usize) -> Range<usize> {
    let units = len.div_ceil(unit);
    let base = units / parts;
    let extra = units % parts;
    let start_u = index * base + index.min(extra);
    let count_u = base + usize::from(index < extra);
    let start = (start_u * unit).min(len);
    let end = ((start_u + count_u) * unit).min(len);
    start..end
}

/// Raw view of the operands shared with worker threads.
#[derive(Clone, Copy)]
pub(crate) struct Operands {
    pub m: usize,
    pub k: usize,
    pub n: usize,
    pub alpha: f32,
    pub beta: f32,
    pub a: *const f32,
    pub b: *const f32,
    pub c: *mut f32,
}

// SAFETY: workers read A/B and write disjoint tiles of C.
unsafe impl Send for Operands {}
unsafe impl Sync for Operands {}

thread_local! {
    static PACK_BUFFERS: RefCell<(Vec<f32>, Vec<f32>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

/// Computes the C sub-block `rows × cols`. Callers guarantee that no other
/// thread writes the same region concurrently.
///
/// # Safety
/// Pointers in `ops` must be valid for the full m×k, k×n and m×n extents.
pub(crate) unsafe fn compute_block(
    ops: &Operands,
    rows: Range<usize>,
    cols: Range<usize>,
    blocks: BlockSizes,
) {
    if rows.is_empty() || cols.is_empty() {
        return;
    }
    let blocks = blocks.normalized();
    let kernel = micro_kernel();
    PACK_BUFFERS.with(|cell| {
        let mut bufs = cell.borrow_mut();
        let (pa, pb) = &mut *bufs;
        let need_a = blocks.mc * blocks.kc;
        let need_b = blocks.kc * blocks.nc;
        if pa.len() < need_a {
            pa.resize(need_a, 0.0);
        }
        if pb.len() < need_b {
            pb.resize(need_b, 0.0);
        }

        let mut jc = cols.start;
        while jc < cols.end {
            let nc = blocks.nc.min(cols.end - jc);
            let mut pc = 0;
            while pc < ops.k {
                let kc = blocks.kc.min(ops.k - pc);
                pack_b(ops, pc, kc, jc, nc, pb);
                let first = pc == 0;
                let mut ic = rows.start;
                while ic < rows.end {
                    let mc = blocks.mc.min(rows.end - ic);
                    pack_a(ops, ic, mc, pc, kc, pa);
                    macro_tile(ops, kernel, pa, pb, ic, mc, jc, nc, kc, first);
                    ic += mc;
                }
                pc += kc;
            }
            jc += nc;
        }
    });
}

/// Packs A[ic..ic+mc, pc..pc+kc] into MR-row slivers, k-major, zero padded.
unsafe fn pack_a(ops: &Operands, ic: usize, mc: usize, pc: usize, kc: usize, out: &mut [f32]) {
    let lda = ops.k;
    let mut off = 0;
    let mut ir = 0;
    while ir < mc {
        let mr = MR.min(mc - ir);
        for p in 0..kc {
            for i in 0..MR {
                out[off + p * MR + i] = if i < mr {
                    *ops.a.add((ic + ir + i) * lda + pc + p)
                } else {
                    0.0
                };
            }
        }
        off += kc * MR;
        ir += MR;
    }
}

/// Packs B[pc..pc+kc, jc..jc+nc] into NR-column slivers, k-major, zero padded.
unsafe fn pack_b(ops: &Operands, pc: usize, kc: usize, jc: usize, nc: usize, out: &mut [f32]) {
    let ldb = ops.n;
    let mut off = 0;
    let mut jr = 0;
    while jr < nc {
        let nr = NR.min(nc - jr);
        for p in 0..kc {
            let src = ops.b.add((pc + p) * ldb + jc + jr);
            let dst = &mut out[off + p * NR..off + p * NR + NR];
            if nr == NR {
                std::ptr::copy_nonoverlapping(src, dst.as_mut_ptr(), NR);
            } else {
                for (j, d) in dst.iter_mut().enumerate() {
                    *d = if j < nr { *src.add(j) } else { 0.0 };
                }
            }
        }
        off += kc * NR;
        jr += NR;
    }
}

#[allow(clippy::too_many_arguments)]
unsafe fn macro_tile(
    ops: &Operands,
    kernel: KernelFn,
    pa: &[f32],
    pb: &[f32],
    ic: usize,
    mc: usize,
    jc: usize,
    nc: usize,
    kc: usize,
    first: bool,
) {
    let ldc = ops.n;
    let mut acc = [[0.0f32; NR]; MR];
    let mut jr = 0;
    while jr < nc {
        let nr = NR.min(nc - jr);
        let b_panel = pb.as_ptr().add((jr / NR) * kc * NR);
        let mut ir = 0;
        while ir < mc {
            let mr = MR.min(mc - ir);
            let a_panel = pa.as_ptr().add((ir / MR) * kc * MR);
            kernel(kc, a_panel, b_panel, &mut acc);
            for (i, row) in acc.iter().enumerate().take(mr) {
                let c_row = ops.c.add((ic + ir + i) * ldc + jc + jr);
                for (j, &v) in row.iter().enumerate().take(nr) {
                    let dst = c_row.add(j);
                    *dst = if !first {
                        *dst + ops.alpha * v
                    } else if ops.beta == 0.0 {
                        ops.alpha * v
                    } else {
                        ops.alpha * v + ops.beta * *dst
                    };
                }
            }
            ir += MR;
        }
        jr += NR;
    }
}

type KernelFn = unsafe fn(usize, *const f32, *const f32, &mut [[f32; NR]; MR]);

#[inline(always)]
unsafe fn kernel_body<const FUSED: bool>(
    kc: usize,
    a: *const f32,
    b: *const f32,
    out: &mut [[f32; NR]; MR],
) {
    let mut c = [[0.0f32; NR]; MR];
    let a = std::slice::from_raw_parts(a, kc * MR);
    let b = std::slice::from_raw_parts(b, kc * NR);
    for (ap, bp) in a.chunks_exact(MR).zip(b.chunks_exact(NR)) {
        for i in 0..MR {
            let av = ap[i];
            for j in 0..NR {
                c[i][j] = if FUSED {
                    av.mul_add(bp[j], c[i][j])
                } else {
                    c[i][j] + av * bp[j]
                };
            }
        }
    }
    *out = c;
}

unsafe fn kernel_portable(kc: usize, a: *const f32, b: *const f32, out: &mut [[f32; NR]; MR]) {
    kernel_body::<false>(kc, a, b, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn kernel_avx2_fma(kc: usize, a: *const f32, b: *const f32, out: &mut [[f32; NR]; MR]) {
    kernel_body::<true>(kc, a, b, out)
}

fn micro_kernel() -> KernelFn {
    static KERNEL: OnceLock<KernelFn> = OnceLock::new();
    *KERNEL.get_or_init(|| {
        #[cfg(target_arch = "x86_64")]
        {
            if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
                return kernel_avx2_fma as KernelFn;
            }
        }
        kernel_portable as KernelFn
    })
}

//! Prints native-kernel GFLOPS for a few square shapes at every thread count.
//!
//! ```bash
//! cargo run --release -p adsala-core --example gflops
//! ```

use std::time::Instant;

use adsala_core::gemm::{gemm, GemmParams, GemmShape, Matrix};
use adsala_core::host;

fn main() -> adsala_core::Result<()> {
    for dim in [64, 256, 1024, 2048] {
        let shape = GemmShape::new(dim, dim, dim)?;
        let a = Matrix::random(dim, dim, 1)?;
        let b = Matrix::random(dim, dim, 2)?;
        let mut c = Matrix::zeros(dim, dim)?;
        for t in 1..=host::logical_cores() {
            let p = GemmParams::new(1.0, 0.0, t);
            gemm(shape, p, &a, &b, &mut c)?;
            let reps = (2e9 / shape.flops()).clamp(1.0, 200.0) as usize;
            let start = Instant::now();
            for _ in 0..reps {
                gemm(shape, p, &a, &b, &mut c)?;
            }
            let secs = start.elapsed().as_secs_f64() / reps as f64;
            println!("{dim:>5}^3 t={t:<3} {:>8.2} GFLOPS", shape.flops() / secs / 1e9);
        }
    }
    Ok(())
}

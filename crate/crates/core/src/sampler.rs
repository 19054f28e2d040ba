//! Scrambled Halton sampling of GEMM shapes under a memory cap.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gemm::{memory_footprint, GemmShape, Precision};

pub const DEFAULT_BASES: [u32; 3] = [2, 3, 4];
pub const DEFAULT_DIM_MIN: usize = 16;
pub const DEFAULT_MEM_CAP_BYTES: u64 = 500 * (1 << 20);

/// How a unit-interval coordinate becomes a matrix dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DimensionMap {
    /// Uniform in sqrt(dimension): denser at small sizes.
    #[default]
    SquareLaw,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub bases: [u32; 3],
    pub scramble_seed: u64,
    pub dim_min: usize,
    pub dim_max: usize,
    pub mem_cap_bytes: u64,
    pub precision: Precision,
    pub map: DimensionMap,
}

impl SamplerConfig {
    /// Default domain for a memory cap: `dim_max` is the largest cube edge
    /// whose footprint fits under the cap.
    pub fn with_cap(mem_cap_bytes: u64, scramble_seed: u64) -> Self {
        let precision = Precision::Single;
        SamplerConfig {
            bases: DEFAULT_BASES,
            scramble_seed,
            dim_min: DEFAULT_DIM_MIN,
            dim_max: cube_edge_for_cap(mem_cap_bytes, precision).max(DEFAULT_DIM_MIN),
            mem_cap_bytes,
            precision,
            map: DimensionMap::SquareLaw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bases.iter().any(|&b| b < 2) {
            return Err(Error::Parameter(format!("bases must be >= 2: {:?}", self.bases)));
        }
        if self.dim_min == 0 || self.dim_min > self.dim_max {
            return Err(Error::Parameter(format!(
                "need 1 <= dim_min <= dim_max, got {}..{}",
                self.dim_min, self.dim_max
            )));
        }
        let smallest = GemmShape::new(self.dim_min, self.dim_min, self.dim_min)?;
        if memory_footprint(smallest, self.precision) > self.mem_cap_bytes {
            return Err(Error::Parameter(format!(
                "memory cap {} B is below the footprint of the smallest shape {smallest}",
                self.mem_cap_bytes
            )));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::with_cap(DEFAULT_MEM_CAP_BYTES, 0)
    }
}

/// Largest d with bytes·3d² ≤ cap.
pub fn cube_edge_for_cap(mem_cap_bytes: u64, precision: Precision) -> usize {
    let per = 3 * precision.bytes();
    let mut d = ((mem_cap_bytes / per) as f64).sqrt() as u64;
    while per * (d + 1) * (d + 1) <= mem_cap_bytes {
        d += 1;
    }
    while d > 0 && per * d * d > mem_cap_bytes {
        d -= 1;
    }
    d as usize
}

/// Van der Corput digit reversal of `index` in `base`.
pub fn radical_inverse(index: u64, base: u32) -> Result<f64> {
    if base < 2 {
        return Err(Error::Parameter(format!("base must be >= 2, got {base}")));
    }
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut i = index;
    let mut factor = inv;
    let mut value = 0.0;
    while i > 0 {
        value += (i % b) as f64 * factor;
        i /= b;
        factor *= inv;
    }
    Ok(value)
}

/// Digit permutation of one base.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DigitPermutation {
    base: u32,
    perm: Vec<u32>,
    digits: u32,
}

impl DigitPermutation {
    pub fn identity(base: u32) -> Result<Self> {
        Self::from_perm(base, (0..base).collect())
    }

    /// Uniformly random permutation drawn from `seed`.
    pub fn random(base: u32, seed: u64) -> Result<Self> {
        let mut perm: Vec<u32> = (0..base).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        perm.shuffle(&mut rng);
        Self::from_perm(base, perm)
    }

    pub fn from_perm(base: u32, perm: Vec<u32>) -> Result<Self> {
        if base < 2 {
            return Err(Error::Parameter(format!("base must be >= 2, got {base}")));
        }
        let mut sorted = perm.clone();
        sorted.sort_unstable();
        if sorted != (0..base).collect::<Vec<_>>() {
            return Err(Error::Parameter(format!("{perm:?} is not a permutation of 0..{base}")));
        }
        // enough digits that base^-digits is below f64 resolution
        let digits = (53.0 / (base as f64).log2()).ceil() as u32;
        Ok(DigitPermutation { base, perm, digits })
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.perm
    }

    /// Radical inverse with every digit (including the implicit leading
    /// zeros up to f64 resolution) mapped through the permutation.
    pub fn scrambled_inverse(&self, index: u64) -> f64 {
        let b = self.base as u64;
        let inv = 1.0 / self.base as f64;
        let mut i = index;
        let mut factor = inv;
        let mut value = 0.0;
        for _ in 0..self.digits {
            value += self.perm[(i % b) as usize] as f64 * factor;
            i /= b;
            factor *= inv;
        }
        value.min(1.0 - f64::EPSILON)
    }
}

/// Scrambled Halton generator over three coordinates.
#[derive(Debug, Clone)]
pub struct ScrambledHalton {
    perms: [DigitPermutation; 3],
}

impl ScrambledHalton {
    pub fn new(bases: [u32; 3], seed: u64) -> Result<Self> {
        let make = |dim: usize| {
            let sub_seed = seed
                .wrapping_mul(0x9E37_79B9_7F4A_7C15)
                .wrapping_add((dim as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03));
            DigitPermutation::random(bases[dim], sub_seed)
        };
        Ok(ScrambledHalton {
            perms: [make(0)?, make(1)?, make(2)?],
        })
    }

    pub fn from_permutations(perms: [DigitPermutation; 3]) -> Self {
        ScrambledHalton { perms }
    }

    pub fn permutations(&self) -> &[DigitPermutation; 3] {
        &self.perms
    }

    pub fn point(&self, index: u64) -> [f64; 3] {
        [
            self.perms[0].scrambled_inverse(index),
            self.perms[1].scrambled_inverse(index),
            self.perms[2].scrambled_inverse(index),
        ]
    }
}

/// First `count` points of the scrambled sequence for `config`.
pub fn scrambled_halton(count: usize, config: &SamplerConfig) -> Result<Vec<[f64; 3]>> {
    let gen = ScrambledHalton::new(config.bases, config.scramble_seed)?;
    Ok((0..count as u64).map(|i| gen.point(i)).collect())
}

/// Maps a unit coordinate into `[dim_min, dim_max]`.
pub fn unit_to_dimension(u: f64, dim_min: usize, dim_max: usize, map: DimensionMap) -> usize {
    let (lo, hi) = (dim_min as f64, dim_max as f64);
    let v = match map {
        DimensionMap::SquareLaw => {
            let s = lo.sqrt() + u * (hi.sqrt() - lo.sqrt());
            s * s
        }
        DimensionMap::Linear => lo + u * (hi - lo),
    };
    (v.round() as usize).clamp(dim_min, dim_max)
}

/// Draws `count` distinct admissible shapes, skipping points whose
/// footprint exceeds the cap. Gives up after `10 × count` draws.
pub fn sample_shapes(count: usize, config: &SamplerConfig) -> Result<Vec<GemmShape>> {
    if count == 0 {
        return Err(Error::Parameter("count must be >= 1".into()));
    }
    config.validate()?;
    let gen = ScrambledHalton::new(config.bases, config.scramble_seed)?;
    let max_draws = count.saturating_mul(10);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    let mut draws = 0;
    while out.len() < count && draws < max_draws {
        let p = gen.point(draws as u64);
        draws += 1;
        let dim = |u| unit_to_dimension(u, config.dim_min, config.dim_max, config.map);
        let shape = GemmShape::new(dim(p[0]), dim(p[1]), dim(p[2]))?;
        if memory_footprint(shape, config.precision) > config.mem_cap_bytes {
            continue;
        }
        if seen.insert(shape) {
            out.push(shape);
        }
    }
    if out.len() < count {
        return Err(Error::Exhausted {
            requested: count,
            produced: out.len(),
            draws,
        });
    }
    Ok(out)
}

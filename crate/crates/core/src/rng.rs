//! Counter-based random streams.
//!
//! Every random quantity in the crate is a pure function of a 64-bit seed and
//! an integer key (a lattice site, or a `(disorder, path)` index pair). Draws
//! therefore never depend on iteration order or on how work is split across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of signed coordinates into a key derived from `seed`.
pub fn key(seed: u64, coords: &[i64]) -> u64 {
    let mut h = mix64(seed ^ 0x6c69_6673_6368_6974);
    for (axis, &c) in coords.iter().enumerate() {
        h = mix64(h ^ (c as u64).wrapping_mul(GOLDEN).rotate_left(axis as u32 * 7 + 1));
    }
    mix64(h ^ coords.len() as u64)
}

/// Uniform draw on the open interval (0, 1) from a single key.
#[inline]
pub fn open_unit(k: u64) -> f64 {
    // 53 random bits, shifted off zero by half an ulp of the grid
    ((mix64(k) >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// A ChaCha stream keyed by `(seed, a, b)`; used per Monte Carlo task.
pub fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key(seed, &[a as i64, b as i64, 0x5354_524d]))
}

/// Derives a child seed, e.g. one disorder realization per outer sample.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    key(seed, &[index as i64, 0x0043_4849_4c44])
}

//! Seeded random streams.
//!
//! Every random decision in the crate (weight init, class splits, epoch
//! shuffles) draws from a [`Xoshiro256PlusPlus`] generator whose 64-bit seed
//! is derived from a base seed and a stream index through splitmix64. The
//! generator's own `seed_from_u64` expands that word into the 256-bit state
//! with splitmix64 again.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type SeededRng = Xoshiro256PlusPlus;

/// Stream tags keep independent consumers of the same base seed apart.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Encoder = 1,
    Reciprocal = 2,
    Head = 3,
    Split = 4,
    Shuffle = 5,
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `(seed, stream, index)`, e.g. `(seed, Shuffle, epoch)`.
pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> SeededRng {
    let word = splitmix64(splitmix64(seed ^ splitmix64(stream as u64)) ^ index);
    SeededRng::seed_from_u64(word)
}

/// Standard normal variate by the Box-Muller transform (cosine branch only).
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // u1 in (0, 1] so that ln(u1) is finite
    let u1 = 1.0 - rng.gen::<f64>();
    let u2 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize, mean: f64, std: f64) -> Vec<f64> {
    (0..n).map(|_| mean + std * standard_normal(rng)).collect()
}

/// In-place Fisher-Yates shuffle.
pub fn shuffle<T, R: Rng + ?Sized>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = rng.gen_range(0..=i);
        items.swap(i, j);
    }
}

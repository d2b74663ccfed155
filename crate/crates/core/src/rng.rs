//! Seeded random streams.
//!
//! Every stochastic routine takes an explicit 64-bit seed and builds a
//! [`ChaCha8Rng`] from it. Sub-streams are never carved out of a shared
//! generator; instead a child seed is derived with [`mix_seed`], a SplitMix64
//! fold over the parent seed and a list of integer labels.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The PRNG family used everywhere in the crate.
pub type SeededRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base` and an ordered list of labels.
///
/// `mix_seed(s, &[a, b])` differs from `mix_seed(s, &[b, a])` and from
/// `mix_seed(s, &[a])`, so labels can encode (cell, slot), (seed, repeat),
/// (seed, iteration) and so on without collisions in practice.
pub fn mix_seed(base: u64, labels: &[u64]) -> u64 {
    let mut h = splitmix64(base);
    for (pos, &label) in labels.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(label.wrapping_add((pos as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

/// Builds a generator for `seed`.
pub fn rng_from_seed(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Builds a generator for the child stream `mix_seed(base, labels)`.
pub fn derived_rng(base: u64, labels: &[u64]) -> SeededRng {
    rng_from_seed(mix_seed(base, labels))
}

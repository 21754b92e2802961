//! Seed derivation.
//!
//! All randomness in the crate flows from explicit integer keys: a global
//! seed is mixed with structural counters (record index, epoch, step, layer)
//! to derive the seed of a fresh ChaCha stream. State never has to be
//! serialized; a checkpoint only stores the counters.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 finalizer: bijective avalanche mix of a 64-bit word.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Combine a seed with structural counters into one well-mixed key.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut acc = mix64(seed);
    for &p in parts {
        acc = mix64(acc ^ mix64(p));
    }
    acc
}

/// Deterministic ChaCha stream keyed by (seed, counters).
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

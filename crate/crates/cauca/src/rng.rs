//! Deterministic seed derivation.
//!
//! Every random decision in the crate flows from a single master seed through
//! labelled sub-streams, so that adding or reordering one consumer never
//! shifts the draws of another. A sub-seed is a hash of (parent seed, label,
//! index); the generator everywhere is ChaCha8, which is reproducible across
//! platforms.

use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;

/// splitmix64 finalizer; good avalanche, stable across platforms.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// Derive a child seed from a parent seed, a stream label, and an index.
pub fn derive_seed(parent: u64, label: &str, index: u64) -> u64 {
    let mut s = splitmix64(parent ^ fnv1a(label));
    s = splitmix64(s ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    s
}

/// ChaCha8 generator for a labelled sub-stream.
pub fn stream(parent: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(parent, label, index))
}

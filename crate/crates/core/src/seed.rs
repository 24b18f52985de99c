//! Stable hashing and sub-seed derivation.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from
//! `derive_seed(master, label)`. The derivation is FNV-1a 64 over the label
//! bytes, xor-ed into the master seed and passed through one SplitMix64
//! finalizer round. Both primitives are fixed here so results do not depend on
//! the standard library's hasher, which is allowed to change between releases.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for the stream named `label` under `master`.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    mix64(master ^ fnv1a64(label.as_bytes()))
}

pub fn rng_for(master: u64, label: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label))
}

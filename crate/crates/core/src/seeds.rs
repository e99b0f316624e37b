//! Seed derivation and stable content hashing.
//!
//! Every stochastic component draws from its own named stream derived from a
//! single run seed, so adding or removing one consumer never perturbs the
//! others. Streams are stable across platforms and releases.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a over bytes; used for stream tags and content hashes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Derive a child seed from (seed, tag, index).
pub fn derive_seed(seed: u64, tag: &str, index: u64) -> u64 {
    let mut z = splitmix64(seed);
    z = splitmix64(z ^ fnv1a(tag.as_bytes()));
    splitmix64(z ^ index)
}

/// A deterministic RNG for the named stream.
pub fn stream_rng(seed: u64, tag: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Stable hex content hash for provenance records.
pub fn content_hash(bytes: &[u8]) -> String {
    format!("{:016x}", fnv1a(bytes))
}

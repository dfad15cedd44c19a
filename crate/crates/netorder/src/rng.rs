//! Seed derivation for reproducible, independently seeded random streams.
//!
//! Every random decision in the library flows from one master seed. Streams
//! are derived by hashing (master, label, index), so worker scheduling can
//! never change which numbers a given path, graph or split sees.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over bytes, used to fold stream labels into seed material.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// splitmix64 finalizer; decorrelates nearby inputs.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a master seed, a stream label and an index.
pub fn derive_seed(master: u64, label: &str, index: u64) -> u64 {
    let mut s = splitmix64(master ^ fnv1a(label.as_bytes()));
    s = splitmix64(s ^ index.wrapping_mul(0x9e3779b97f4a7c15));
    s
}

/// ChaCha stream for `(master, label, index)`. Identical arguments always
/// yield an identical generator, regardless of platform or thread order.
pub fn stream(master: u64, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, label, index))
}

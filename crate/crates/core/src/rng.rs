//! Seeded random streams.
//!
//! Every random decision draws from a ChaCha stream selected by a base seed
//! and a stable key, so independent units (videos, trees, runs) get
//! independent streams regardless of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn stable_hash(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stream for `(seed, purpose, index)`.
pub fn stream(seed: u64, purpose: &str, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key = stable_hash(purpose.as_bytes()) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    rng.set_stream(key);
    rng
}

/// Stream keyed by a text identifier such as a video id.
pub fn keyed(seed: u64, purpose: &str, id: &str) -> StreamRng {
    stream(seed, purpose, stable_hash(id.as_bytes()))
}

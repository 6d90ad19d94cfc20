//! Seeded random streams.
//!
//! Every stochastic component draws from a `ChaCha8Rng`. Independent
//! streams (per seed, per epoch, per candidate, ...) are derived by mixing
//! a base seed with a list of tags, so a stream is a pure function of its
//! coordinates and never of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mix a base seed with tags into a single 64-bit stream id.
pub fn stream_id(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    h
}

pub fn seeded(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// A generator for the stream identified by `(seed, tags)`.
pub fn stream(seed: u64, tags: &[u64]) -> Rng {
    Rng::seed_from_u64(stream_id(seed, tags))
}

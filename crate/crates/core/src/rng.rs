//! Seeding.
//!
//! Every stochastic operation takes a [`Rng`], which is ChaCha8 seeded from a
//! 64-bit value. Component seeds are derived from one global seed with
//! [`subseed`]: the component label is hashed with 64-bit FNV-1a, xored into
//! the parent seed, and the result is passed through the SplitMix64
//! finalizer. Two labels therefore never share a stream, and adding a new
//! component leaves the seeds of existing ones untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn fnv1a(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of a named component from a parent seed.
pub fn subseed(seed: u64, label: &str) -> u64 {
    splitmix64(seed ^ fnv1a(label))
}

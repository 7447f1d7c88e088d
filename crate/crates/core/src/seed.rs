//! Counter-based stream derivation.
//!
//! Every random stream used by the pipeline is keyed by a base seed plus a
//! tuple of counters, so work can be evaluated in any order or on any number
//! of threads without changing results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a key with a list of counters into a single 64-bit seed.
pub fn derive(key: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix64(key), |acc, &c| splitmix64(acc ^ splitmix64(c.wrapping_add(0x632B_E59B_D9B4_E019))))
}

pub fn stream(key: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(key, counters))
}

//! Seeded random streams.
//!
//! Every consumer of randomness owns its own stream, derived from the run
//! seed plus a stream tag, so replicas never share generator state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Named stream tags.
pub mod stream {
    pub const TRACE: u64 = 1;
    pub const ENV_INIT: u64 = 2;
    pub const NET_INIT: u64 = 3;
    pub const EXPLORE: u64 = 4;
    pub const REPLAY: u64 = 5;
    pub const POLICY: u64 = 6;
    pub const EVAL_TRACE: u64 = 7;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent generator for `(seed, tag, index)`.
pub fn stream_rng(seed: u64, tag: u64, index: u64) -> SimRng {
    let mixed = splitmix64(splitmix64(splitmix64(seed) ^ tag) ^ index);
    SimRng::seed_from_u64(mixed)
}

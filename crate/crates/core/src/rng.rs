//! Index-addressed random streams.
//!
//! Every stochastic step draws from a ChaCha8 stream whose seed is a hash of
//! `(base seed, stream tag, index)`, so replication `k` of a scenario sees the
//! same numbers whether it runs first, last or on another thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags used across the crate.
pub mod stream {
    pub const FIELD_NOISE: u64 = 0x4649_454c_44;
    pub const NUGGET_NOISE: u64 = 0x4e55_4747;
    pub const TEST_POINTS: u64 = 0x5445_5354;
    pub const SAMPLE: u64 = 0x5341_4d50;
    pub const COMPONENT: u64 = 0x434f_4d50;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic seed for `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub fn stream_rng(base: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

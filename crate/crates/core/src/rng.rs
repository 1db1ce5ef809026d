//! Deterministic stream derivation.
//!
//! A stream is identified by a master seed plus a tag path such as
//! `(chain index)` or `(start index, noise index)`. Tags are folded through
//! SplitMix64 so neighbouring indices give unrelated ChaCha keys.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Stream = ChaCha8Rng;

/// Domain tags keep streams of different experiments apart even when they
/// share a master seed and index.
pub mod tag {
    pub const MCMC: u64 = 0x6d63_6d63;
    pub const EXACT: u64 = 0x6b6e_6578;
    pub const GAUSS: u64 = 0x6761_7573;
    pub const DBM: u64 = 0x0064_626d;
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const FIELD: u64 = 0x6669_656c;
    pub const SLICE: u64 = 0x736c_6963;
    pub const SUBSAMPLE: u64 = 0x7375_6273;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    tags.iter()
        .fold(splitmix64(master), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn stream(master: u64, tags: &[u64]) -> Stream {
    Stream::seed_from_u64(derive_seed(master, tags))
}

//! Seed plumbing.
//!
//! Every random stream in the toolkit is a ChaCha8 generator seeded with
//! `seed_from_u64(seed)` and switched to stream `index`, so results depend
//! only on `(seed, index)` and never on thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator for stream `index` of `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A child seed for `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    stream(seed, index).next_u64()
}

/// Stream tags used when deriving sub-seeds for the demo.
pub mod tags {
    pub const COHORT: u64 = 0x636f_686f;
    pub const INIT: u64 = 0x696e_6974;
    pub const TRAIN: u64 = 0x0074_726e;
    pub const MC: u64 = 0x6d63;
    pub const SIGN: u64 = 0x7369_676e;
}

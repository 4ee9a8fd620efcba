//! Seeded random streams.
//!
//! Every consumer of randomness owns its own ChaCha stream derived from the
//! run seed and a fixed tag, so adding draws in one place never shifts the
//! sequence seen by another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type LabRng = ChaCha8Rng;

/// Stream tags used by the training loop.
pub mod tag {
    pub const ROLLOUT: u64 = 1;
    pub const ENV: u64 = 2;
    pub const TOPOLOGY: u64 = 3;
    pub const BUFFER: u64 = 4;
    pub const SEARCH: u64 = 5;
    pub const EVAL: u64 = 6;
    pub const INIT: u64 = 7;
    pub const LAB: u64 = 8;
}

/// Independent stream `(seed, tag, index)`.
pub fn stream(seed: u64, tag: u64, index: u64) -> LabRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.wrapping_mul(1 << 32).wrapping_add(index));
    rng
}

pub fn seeded(seed: u64) -> LabRng {
    ChaCha8Rng::seed_from_u64(seed)
}

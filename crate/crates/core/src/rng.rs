use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::splitmix64;

/// Independent, reproducible generator for sub-stream `stream` of `seed`.
pub fn derive(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream))
}

pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream.wrapping_add(0x5851_f42d)))
}

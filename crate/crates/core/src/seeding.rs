//! Reproducible random streams.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generator used everywhere a seed is accepted.
pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent seed for `stream` (a site id, a trial index) from a
/// global seed. Distinct streams of the same global seed never share output.
pub fn derive_seed(global: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(global);
    rng.set_stream(stream.wrapping_add(1));
    rng.next_u64()
}

//! Seeded random streams.
//!
//! Every run index gets its own ChaCha8 stream derived from the root seed, so
//! results do not depend on which worker executed which run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type RandomStream = ChaCha8Rng;

/// Independent stream number `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> RandomStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

//! Seeded random substreams.
//!
//! Every stochastic unit of work (a replicate, a posterior draw, a bootstrap resample)
//! owns the ChaCha8 stream keyed by its index under a parent seed, so results do not
//! depend on scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SubstreamRng = ChaCha8Rng;

/// Generator for work item `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> SubstreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws a fresh child seed from a parent generator.
pub fn child_seed(rng: &mut impl RngCore) -> u64 {
    rng.next_u64()
}

//! Counter-based per-trial random streams.
//!
//! Every trial draws from its own ChaCha stream addressed by (seed,
//! trial id), so results are independent of scheduling and worker count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The random stream for one trial of a campaign.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

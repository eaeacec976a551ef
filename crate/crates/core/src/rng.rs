//! Seeded random streams.
//!
//! Every trial draws from its own ChaCha20 stream keyed by
//! `(master_seed, trial_index)`: the seed selects the key and the trial index
//! selects the 64-bit stream id. Streams never overlap, so a sweep produces
//! the same numbers regardless of how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type TrialRng = ChaCha20Rng;

/// Stream id reserved for quantities shared by all trials of one run
/// (for example the common spectrum of a sweep).
pub const SHARED_STREAM: u64 = u64::MAX;

/// Returns the random stream for `trial` under `master_seed`.
pub fn trial_rng(master_seed: u64, trial: u64) -> TrialRng {
    let mut rng = ChaCha20Rng::seed_from_u64(master_seed);
    rng.set_stream(trial);
    rng
}

/// Human-readable description of the seed derivation, recorded in manifests.
pub fn derivation(master_seed: u64, trial: u64) -> String {
    format!("chacha20(seed_from_u64({master_seed}), stream={trial})")
}

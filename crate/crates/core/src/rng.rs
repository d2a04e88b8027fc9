//! Reproducible random streams keyed by `(seed, trial)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for one trial. Streams for different trial indices
/// never overlap, so trials can run in any order or in parallel.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

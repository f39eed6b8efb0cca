use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent child seed for sub-task `stream` of a seeded computation.
pub(crate) fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

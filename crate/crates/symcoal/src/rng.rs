//! Reproducible RNG streams for replicate ensembles.
//!
//! Every replicate draws from its own ChaCha12 stream: the master seed
//! keys the cipher and the replicate index selects the 64-bit stream
//! (nonce). Distinct indices give independent, collision-free streams by
//! construction, so results do not depend on how replicates are scheduled
//! across workers.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// RNG for replicate `index` of the ensemble keyed by `master_seed`.
pub fn replicate_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

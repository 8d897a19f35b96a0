//! Reproducible random-number plumbing.
//!
//! Bootstrap replicates and Monte Carlo repetitions each get their own
//! stream derived from `(master_seed, index)`, so results are identical
//! no matter how work is scheduled across threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Derives an independent child seed from a master seed and a counter.
///
/// SplitMix64 finalizer applied to the pair; the golden-ratio increment
/// keeps distinct indices from colliding.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for replicate `index` of a run seeded with `master_seed`.
///
/// Each replicate gets a distinct ChaCha stream, so draws depend only on
/// `(master_seed, index)` and never on execution order.
pub fn replicate_rng(master_seed: u64, index: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(derive_seed(master_seed, index));
    rng
}

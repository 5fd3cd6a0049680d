//! Seeded random streams.
//!
//! Every replicate gets its own ChaCha stream keyed by the master seed and
//! the replicate index, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub type StreamRng = ChaCha8Rng;

/// Stream reserved for tie-breaking auxiliaries.
pub const TIE_BREAK_STREAM: u64 = u64::MAX;

/// Independent stream `index` under `master`.
pub fn stream(master: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Derive a child master seed, for nested replicate farms.
pub fn child_seed(master: u64, index: u64) -> u64 {
    use rand::RngCore;
    stream(master, index).next_u64()
}

/// Run `f(i, rng_i)` for `i in 0..count` on the current rayon pool and
/// return the results in index order.
pub fn replicate<T, F>(count: usize, master: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize, &mut StreamRng) -> T + Sync,
{
    (0..count)
        .into_par_iter()
        .map(|i| f(i, &mut stream(master, i as u64)))
        .collect()
}

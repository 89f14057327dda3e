//! Counter-based random streams: one independent ChaCha8 stream per
//! (seed, stream index) pair, so walk `i` draws the same numbers no matter
//! which thread runs it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type WalkRng = ChaCha8Rng;

pub fn stream(seed: u64, index: u64) -> WalkRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Uniform variate in `[0, 1)`.
#[inline]
pub fn uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

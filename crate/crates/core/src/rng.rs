//! Seeded random streams.
//!
//! Every stochastic routine in the crate takes an explicit generator. The
//! generator is ChaCha8, which is counter based: a `(seed, stream)` pair
//! fully determines the sequence, so independent sub-streams can be handed
//! to components or jobs without sharing state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type EimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> EimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for sub-stream `stream` of `seed`.
pub fn substream(seed: u64, stream: u64) -> EimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Fresh seed drawn from an existing generator.
pub fn child_seed<R: Rng + ?Sized>(rng: &mut R) -> u64 {
    rng.random()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
}

/// Fisher-Yates permutation of `0..n`.
pub fn permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

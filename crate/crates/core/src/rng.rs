//! Deterministic generator derivation for repetitions and folds.
//!
//! Every repetition owns an independent ChaCha8 stream selected by its index,
//! so results do not depend on scheduling or thread count. Gaussian draws use
//! the ziggurat sampler from `rand_distr`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Generator for repetition `rep`: key from `base_seed`, stream `rep`.
pub fn rep_rng(base_seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(rep);
    rng
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Uniformly random ordering of `0..n`.
pub fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

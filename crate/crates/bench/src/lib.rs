//! Shared fixtures for the benchmarks.

use hga_core::{derive_stream, Dataset, EuclideanInstance, GaRng, HyperGenome, Tour};
use rand::seq::SliceRandom;

pub fn rng(seed: u64) -> GaRng {
    derive_stream(seed, &[])
}

pub fn instance(n: usize) -> EuclideanInstance {
    EuclideanInstance::random_unit_square(n, 11).expect("n > 0")
}

/// Two independent random tours over `0..n`.
pub fn tour_pair(n: usize, rng: &mut GaRng) -> (Tour, Tour) {
    let mut a: Vec<usize> = (0..n).collect();
    let mut b = a.clone();
    a.shuffle(rng);
    b.shuffle(rng);
    (Tour::new(a), Tour::new(b))
}

/// Noisy samples of `4x² + 3x + 4` on `[0, 5]`.
pub fn quadratic_dataset(points: usize) -> Dataset {
    Dataset::generate(&[4.0, 3.0, 4.0], 0.2, 0.0, 5.0, points, 5).expect("valid dataset")
}

pub fn quadratic_hyper() -> HyperGenome {
    HyperGenome::new(0.5, 0.01, 2, 0.5).expect("valid hyperparameters")
}

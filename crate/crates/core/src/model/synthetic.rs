//! Synthetic two-class Gaussian blob dataset for known-learnable tasks.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model::Sample;

/// Generate `n` samples from two Gaussian blobs with unit per-coordinate
/// standard deviation. Class centers sit at `+/- separation/2` along the
/// normalized all-ones direction, so the distance between them is
/// `separation`. Labels are drawn uniformly.
pub fn two_class_blobs<R: Rng>(n: usize, dim: usize, separation: f64, rng: &mut R) -> Vec<Sample> {
    let unit = 1.0 / (dim as f64).sqrt();
    let offset = separation / 2.0 * unit;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    (0..n)
        .map(|_| {
            let label = usize::from(rng.random_bool(0.5));
            let center = if label == 0 { -offset } else { offset };
            let features = (0..dim).map(|_| center + noise.sample(rng)).collect();
            Sample::new(features, label)
        })
        .collect()
}

//! Small synthetic datasets for training tests.
#![allow(dead_code)]

use ldc::dataio::{Dataset, Split};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `K` classes over `N` features; class `k` shifts a different third of the
/// features up, so the problem is separable but not trivially so.
pub fn blobs(n: usize, m: usize, k: usize, len: usize, seed: u64, split: Split) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(len * n);
    let mut labels = Vec::with_capacity(len);
    for i in 0..len {
        let label = i % k;
        for j in 0..n {
            let center = if j % k == label { 0.75 } else { 0.3 };
            let v: f64 = center + rng.random_range(-0.25..0.25);
            features.push((v.clamp(0.0, 1.0) * (m - 1) as f64).round() as u16);
        }
        labels.push(label);
    }
    Dataset::new("blobs", features, labels, n, m, k, split).unwrap()
}

pub fn splits(seed: u64) -> (Dataset, Dataset) {
    (
        blobs(12, 16, 3, 300, seed, Split::Train),
        blobs(12, 16, 3, 90, seed + 1, Split::Test),
    )
}

//! Shared instance generators for the integration suites.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use vocab_squeeze::ingest::{LabelCounts, SortedFeature};

/// Random masses (normalized uniforms) and uniform conditionals.
pub fn random_feature_probs(rng: &mut ChaCha8Rng, n: usize) -> SortedFeature<f64> {
    let raw: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(0.05..1.0), rng.gen_range(0.0..1.0)))
        .collect();
    let total: f64 = raw.iter().map(|(p, _)| p).sum();
    let pairs = raw.into_iter().map(|(p, c)| (p / total, c)).collect();
    SortedFeature::from_probabilities("inst", pairs).unwrap()
}

/// Integer-count-backed random feature.
pub fn random_feature_counts(rng: &mut ChaCha8Rng, n: usize) -> SortedFeature<f64> {
    let counts: Vec<LabelCounts> = (0..n)
        .map(|_| LabelCounts::new(rng.gen_range(1..50), rng.gen_range(0..50)))
        .collect();
    SortedFeature::from_raw_counts("inst", counts).unwrap()
}

/// Random subset of {1..n−1} where each element joins with probability `p`.
pub fn random_splits(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<usize> {
    (1..n).filter(|_| rng.gen_bool(p)).collect()
}

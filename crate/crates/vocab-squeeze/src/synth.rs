//! Synthetic aggregated-count data: Zipfian value frequencies with label
//! conditionals drawn from a two-bump mixture, independent of frequency.
//! That independence is the interesting case for benchmarking — it is where
//! count-threshold filtering has nothing to latch onto.
//!
//! Generation is deterministic given the seed; each feature consumes its own
//! counter-derived RNG stream, so per-feature parallelism cannot reorder the
//! randomness.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ingest::{FeatureTable, LabelCounts, SortedFeature};

#[derive(Debug, Clone)]
pub struct SynthConfig {
    /// Vocabulary size per feature.
    pub values_per_feature: usize,
    pub num_features: usize,
    /// Zipf exponent for value frequencies (1.0 ≈ classic Zipf).
    pub zipf_exponent: f64,
    pub seed: u64,
    /// Target total count per feature; every value keeps at least one
    /// occurrence, so tiny targets get exceeded.
    pub samples_per_feature: u64,
    /// Centers of the two conditional bumps. Centers near each other make a
    /// nearly label-independent feature.
    pub cond_centers: (f64, f64),
    /// Half-width of the triangular jitter around each bump center.
    pub cond_jitter: f64,
}

impl SynthConfig {
    pub fn new(values_per_feature: usize, num_features: usize) -> Self {
        Self {
            values_per_feature,
            num_features,
            zipf_exponent: 1.05,
            seed: 0,
            samples_per_feature: 64 * values_per_feature as u64,
            cond_centers: (0.25, 0.75),
            cond_jitter: 0.18,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.values_per_feature == 0 {
            return Err(Error::InvalidConfig("need at least one value".into()));
        }
        if self.num_features == 0 {
            return Err(Error::InvalidConfig("need at least one feature".into()));
        }
        if !(self.zipf_exponent >= 0.0) {
            return Err(Error::InvalidConfig(
                "zipf exponent must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

fn feature_rng(seed: u64, feature_idx: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(feature_idx as u64);
    rng
}

/// Conditional from the two-bump mixture; the sum of two uniforms gives each
/// bump a soft triangular shape.
fn sample_conditional(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> f64 {
    let center = if rng.gen_bool(0.5) {
        cfg.cond_centers.0
    } else {
        cfg.cond_centers.1
    };
    let jitter = cfg.cond_jitter * (rng.gen_range(0.0..1.0f64) + rng.gen_range(0.0..1.0f64) - 1.0);
    (center + jitter).clamp(0.002, 0.998)
}

/// Counts for one feature, value ids `v0000000`, `v0000001`, … in frequency
/// rank order.
pub fn generate_feature_counts(cfg: &SynthConfig, feature_idx: usize) -> Vec<LabelCounts> {
    let n = cfg.values_per_feature;
    let mut rng = feature_rng(cfg.seed, feature_idx);
    let weights: Vec<f64> = (1..=n).map(|r| 1.0 / (r as f64).powf(cfg.zipf_exponent)).collect();
    let total_w: f64 = weights.iter().sum();
    let scale = cfg.samples_per_feature as f64 / total_w;
    weights
        .into_iter()
        .map(|w| {
            let count = ((w * scale).round() as u64).max(1);
            let cond = sample_conditional(cfg, &mut rng);
            let c0 = ((cond * count as f64).round() as u64).min(count);
            LabelCounts::new(c0, count - c0)
        })
        .collect()
}

/// Full multi-feature table with names `f00`, `f01`, …
pub fn generate_table(cfg: &SynthConfig) -> Result<FeatureTable> {
    cfg.validate()?;
    let mut table = FeatureTable::new();
    for fi in 0..cfg.num_features {
        let name = format!("f{fi:02}");
        for (vi, counts) in generate_feature_counts(cfg, fi).into_iter().enumerate() {
            table.insert(&name, &format!("v{vi:07}"), counts);
        }
    }
    Ok(table)
}

/// Single synthetic feature as a ready-to-optimize sorted feature, skipping
/// the table and value-id materialization (used by the scaling benchmarks).
pub fn generate_sorted_feature(cfg: &SynthConfig, feature_idx: usize) -> Result<SortedFeature<f64>> {
    cfg.validate()?;
    SortedFeature::from_raw_counts(
        &format!("f{feature_idx:02}"),
        generate_feature_counts(cfg, feature_idx),
    )
}

//! The information-theoretic kernel.
//!
//! Everything here is expressed through one convex function
//!
//! ```text
//! f(t) = t·log(t / P(C=0)) + (1-t)·log((1-t) / P(C=1)),   t ∈ [0, 1]
//! ```
//!
//! with the 0·log 0 = 0 convention. The mutual information of a feature is a
//! mass-weighted sum of f over its values; the objective of a consecutive
//! partition is the same sum over its blocks; and the gain of splitting a
//! block at `s` has the closed form
//!
//! ```text
//! Δ = p·f(α) + q·f(β) − (p+q)·f((pα+qβ)/(p+q))
//! ```
//!
//! where (p, α) and (q, β) are the mass and conditional mean of the two sides.
//! The closed form is non-negative by convexity and submodular in the split
//! set, which is what the greedy optimizers exploit.

use crate::error::{Error, Result};
use crate::ingest::SortedFeature;
use crate::scalar::Real;

/// Logarithm base for information quantities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogBase {
    /// Base 2: values in bits.
    #[default]
    Bits,
    /// Natural log: values in nats.
    Nats,
}

impl LogBase {
    #[inline]
    fn log<F: Real>(self, x: F) -> F {
        match self {
            LogBase::Bits => x.log2(),
            LogBase::Nats => x.ln(),
        }
    }

    /// Converts a value measured in this base to bits.
    pub fn to_bits<F: Real>(self, x: F) -> F {
        match self {
            LogBase::Bits => x,
            LogBase::Nats => x / F::from_f64(std::f64::consts::LN_2).unwrap(),
        }
    }
}

/// The label prior and log base that parameterize f.
#[derive(Debug, Clone, Copy)]
pub struct MiContext<F> {
    p0: F,
    base: LogBase,
}

impl<F: Real> MiContext<F> {
    pub fn new(p0: F, base: LogBase) -> Result<Self> {
        if !(F::zero()..=F::one()).contains(&p0) || !p0.is_finite() {
            return Err(Error::InvalidProbability(p0.as_f64()));
        }
        Ok(Self { p0, base })
    }

    /// Skips the range check; used where p0 was just computed from a
    /// normalized distribution.
    pub(crate) fn new_unchecked(p0: F, base: LogBase) -> Self {
        Self { p0, base }
    }

    pub fn p0(&self) -> F {
        self.p0
    }

    pub fn base(&self) -> LogBase {
        self.base
    }

    /// True when P(C=0) ∈ {0, 1}: f is undefined and every mutual-information
    /// quantity is 0 by convention.
    pub fn is_degenerate(&self) -> bool {
        self.p0 == F::zero() || self.p0 == F::one()
    }

    /// f without the degeneracy check. Callers must have short-circuited
    /// degenerate contexts; t must lie in [0, 1].
    #[inline]
    pub(crate) fn f_raw(&self, t: F) -> F {
        debug_assert!(!self.is_degenerate());
        debug_assert!((F::zero()..=F::one()).contains(&t), "t = {t} outside [0,1]");
        let one = F::one();
        let mut acc = F::zero();
        if t > F::zero() {
            acc = acc + t * self.base.log(t / self.p0);
        }
        if t < one {
            acc = acc + (one - t) * self.base.log((one - t) / (one - self.p0));
        }
        // f ≥ 0 with equality at p0; rounding near p0 can dip a hair below.
        acc.max(F::zero())
    }
}

/// The convex divergence kernel f(t). Finite on all of [0, 1] thanks to the
/// 0·log 0 = 0 convention; f(p0) = 0; non-negative.
pub fn f_div<F: Real>(t: F, ctx: &MiContext<F>) -> Result<F> {
    if ctx.is_degenerate() {
        return Err(Error::DegenerateLabel(ctx.p0.as_f64()));
    }
    if !(F::zero()..=F::one()).contains(&t) || !t.is_finite() {
        return Err(Error::InvalidProbability(t.as_f64()));
    }
    Ok(ctx.f_raw(t))
}

/// I(X; C) of the uncompressed feature: Σ_i p_x_i · f(cond_i).
/// Returns 0 for degenerate label distributions.
pub fn mutual_information<F: Real>(feat: &SortedFeature<F>, base: LogBase) -> F {
    let ctx = feat.mi_context(base);
    if ctx.is_degenerate() {
        return F::zero();
    }
    (0..feat.n()).map(|i| feat.p_x(i) * ctx.f_raw(feat.cond(i))).sum()
}

/// A sorted set of split points S ⊆ {1, …, n−1}. The sentinels 0 and n are
/// implied; |S| = m−1 splits define m consecutive clusters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BoundarySet {
    splits: Vec<usize>,
}

impl BoundarySet {
    /// Sorts the given splits and validates that they are distinct and ≥ 1.
    /// The upper bound (≤ n−1) is checked where a feature is available.
    pub fn new(mut splits: Vec<usize>) -> Result<Self> {
        splits.sort_unstable();
        if splits.first() == Some(&0) {
            return Err(Error::BoundaryOutOfRange {
                boundary: 0,
                max: usize::MAX,
            });
        }
        if let Some(w) = splits.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::DuplicateBoundary(w[0]));
        }
        Ok(Self { splits })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// All n−1 splits: the identity partition Z = X.
    pub fn all_splits(n: usize) -> Self {
        Self {
            splits: (1..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.splits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.splits.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.splits
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.splits.iter().copied()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.splits.binary_search(&s).is_ok()
    }

    pub(crate) fn validate(&self, n: usize) -> Result<()> {
        if let Some(&max) = self.splits.last() {
            if max > n.saturating_sub(1) {
                return Err(Error::BoundaryOutOfRange {
                    boundary: max,
                    max: n.saturating_sub(1),
                });
            }
        }
        Ok(())
    }

    /// Iterates the half-open blocks `[lo, hi)` (sorted-index space) that the
    /// splits carve out of {0, …, n−1}.
    pub fn blocks(&self, n: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let los = std::iter::once(0).chain(self.splits.iter().copied());
        let his = self.splits.iter().copied().chain(std::iter::once(n));
        los.zip(his)
    }
}

/// General value → cluster-id assignment over a feature's sorted index space.
/// Unlike a [`BoundarySet`], clusters need not be consecutive; baselines that
/// pool arbitrary values (frequency OOV, divisive) need this generality.
/// Empty clusters are representable (bucketing records them).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressionMap {
    cluster_of: Vec<usize>,
    num_clusters: usize,
    oov: Option<usize>,
}

impl CompressionMap {
    pub fn new(cluster_of: Vec<usize>, num_clusters: usize, oov: Option<usize>) -> Result<Self> {
        if let Some(&bad) = cluster_of.iter().find(|&&z| z >= num_clusters) {
            return Err(Error::ClusterOutOfRange {
                id: bad,
                clusters: num_clusters,
            });
        }
        if let Some(o) = oov {
            if o >= num_clusters {
                return Err(Error::ClusterOutOfRange {
                    id: o,
                    clusters: num_clusters,
                });
            }
        }
        Ok(Self {
            cluster_of,
            num_clusters,
            oov,
        })
    }

    /// Every value its own cluster.
    pub fn identity(n: usize) -> Self {
        Self {
            cluster_of: (0..n).collect(),
            num_clusters: n,
            oov: None,
        }
    }

    /// Everything pooled into one cluster.
    pub fn single(n: usize) -> Self {
        Self {
            cluster_of: vec![0; n],
            num_clusters: 1.min(n).max(1),
            oov: None,
        }
    }

    /// Consecutive clusters from a boundary set.
    pub fn from_boundaries(set: &BoundarySet, n: usize) -> Result<Self> {
        set.validate(n)?;
        let mut cluster_of = vec![0usize; n];
        for (z, (lo, hi)) in set.blocks(n).enumerate() {
            for c in cluster_of.iter_mut().take(hi).skip(lo) {
                *c = z;
            }
        }
        Ok(Self {
            cluster_of,
            num_clusters: set.len() + 1,
            oov: None,
        })
    }

    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn num_clusters(&self) -> usize {
        self.num_clusters
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster_of[i]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn oov_cluster(&self) -> Option<usize> {
        self.oov
    }

    /// Number of clusters that actually received a value.
    pub fn nonempty_clusters(&self) -> usize {
        let mut used = vec![false; self.num_clusters];
        for &z in &self.cluster_of {
            used[z] = true;
        }
        used.iter().filter(|&&u| u).count()
    }

    /// Renumbers nonempty clusters densely (ascending by old id) and drops
    /// empty ones. Returns the new map and the realized cluster count.
    pub fn densified(&self) -> (CompressionMap, usize) {
        let mut used = vec![false; self.num_clusters];
        for &z in &self.cluster_of {
            used[z] = true;
        }
        let mut rename = vec![usize::MAX; self.num_clusters];
        let mut next = 0;
        for (old, &u) in used.iter().enumerate() {
            if u {
                rename[old] = next;
                next += 1;
            }
        }
        let cluster_of = self.cluster_of.iter().map(|&z| rename[z]).collect();
        let oov = self.oov.and_then(|o| (rename[o] != usize::MAX).then_some(rename[o]));
        (
            CompressionMap {
                cluster_of,
                num_clusters: next,
                oov,
            },
            next,
        )
    }
}

/// Mass and conditional mean of the sorted-index block [lo, hi), from exact
/// integer sums when the feature carries counts.
fn block_stats<F: Real>(feat: &SortedFeature<F>, lo: usize, hi: usize) -> (F, F) {
    match (feat.counts(), feat.total_count()) {
        (Some(counts), Some(total)) => {
            let (mut t, mut z) = (0u64, 0u64);
            for c in &counts[lo..hi] {
                t += c.total();
                z += c.c0;
            }
            (
                F::from_count(t) / F::from_count(total),
                F::from_count(z) / F::from_count(t),
            )
        }
        _ => {
            let mut mass = F::zero();
            let mut joint = F::zero();
            for i in lo..hi {
                mass = mass + feat.p_x(i);
                joint = joint + feat.joint0(i);
            }
            (mass, (joint / mass).min(F::one()).max(F::zero()))
        }
    }
}

/// F(S) = I(Z; C) where Z pools each block of the consecutive partition
/// induced by S. F(∅) = 0 (one cluster carries no information); the full
/// split set gives back I(X; C).
pub fn evaluate_partition<F: Real>(
    feat: &SortedFeature<F>,
    set: &BoundarySet,
    base: LogBase,
) -> Result<F> {
    set.validate(feat.n())?;
    let ctx = feat.mi_context(base);
    if ctx.is_degenerate() {
        return Ok(F::zero());
    }
    let mut total = F::zero();
    for (lo, hi) in set.blocks(feat.n()) {
        let (mass, cond) = block_stats(feat, lo, hi);
        total = total + mass * ctx.f_raw(cond);
    }
    Ok(total)
}

/// The closed-form gain of splitting a block of mass p+q and conditional
/// means α (left) and β (right) into two. Non-negative by convexity.
pub fn marginal_gain<F: Real>(p: F, q: F, alpha: F, beta: F, ctx: &MiContext<F>) -> Result<F> {
    if !(p > F::zero()) || !p.is_finite() {
        return Err(Error::NonPositiveMass(p.as_f64()));
    }
    if !(q > F::zero()) || !q.is_finite() {
        return Err(Error::NonPositiveMass(q.as_f64()));
    }
    for t in [alpha, beta] {
        if !(F::zero()..=F::one()).contains(&t) || !t.is_finite() {
            return Err(Error::InvalidProbability(t.as_f64()));
        }
    }
    if alpha == beta {
        // Splitting identical conditionals gains nothing; this also covers
        // every input a degenerate context can physically produce.
        return Ok(F::zero());
    }
    if ctx.is_degenerate() {
        return Err(Error::DegenerateLabel(ctx.p0().as_f64()));
    }
    let merged = (p * alpha + q * beta) / (p + q);
    let g = p * ctx.f_raw(alpha) + q * ctx.f_raw(beta) - (p + q) * ctx.f_raw(merged);
    // Rounding can push the difference a hair below zero.
    Ok(g.max(F::zero()))
}

/// I(Z; C) for an arbitrary (not necessarily consecutive) assignment.
/// Agrees with [`evaluate_partition`] whenever the map is consecutive.
pub fn partition_mi<F: Real>(
    feat: &SortedFeature<F>,
    map: &CompressionMap,
    base: LogBase,
) -> Result<F> {
    if map.len() != feat.n() {
        return Err(Error::MapSizeMismatch {
            covered: map.len(),
            expected: feat.n(),
        });
    }
    let ctx = feat.mi_context(base);
    if ctx.is_degenerate() {
        return Ok(F::zero());
    }
    let mut total = F::zero();
    match (feat.counts(), feat.total_count()) {
        (Some(counts), Some(grand)) => {
            let mut tot = vec![0u64; map.num_clusters()];
            let mut c0 = vec![0u64; map.num_clusters()];
            for (i, c) in counts.iter().enumerate() {
                let z = map.cluster_of(i);
                tot[z] += c.total();
                c0[z] += c.c0;
            }
            for z in 0..map.num_clusters() {
                if tot[z] > 0 {
                    let mass = F::from_count(tot[z]) / F::from_count(grand);
                    let cond = F::from_count(c0[z]) / F::from_count(tot[z]);
                    total = total + mass * ctx.f_raw(cond);
                }
            }
        }
        _ => {
            let mut mass = vec![F::zero(); map.num_clusters()];
            let mut joint = vec![F::zero(); map.num_clusters()];
            for i in 0..feat.n() {
                let z = map.cluster_of(i);
                mass[z] = mass[z] + feat.p_x(i);
                joint[z] = joint[z] + feat.joint0(i);
            }
            for z in 0..map.num_clusters() {
                if mass[z] > F::zero() {
                    let cond = (joint[z] / mass[z]).min(F::one()).max(F::zero());
                    total = total + mass[z] * ctx.f_raw(cond);
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{LabelCounts, SortedFeature};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn ctx(p0: f64) -> MiContext<f64> {
        MiContext::new(p0, LogBase::Bits).unwrap()
    }

    /// Independent oracle: I(X;C) by the textbook double sum over the joint,
    /// never through f.
    fn mi_direct(p_x: &[f64], cond: &[f64]) -> f64 {
        let p0: f64 = p_x.iter().zip(cond).map(|(p, c)| p * c).sum();
        let p_c = [p0, 1.0 - p0];
        let mut total = 0.0;
        for (p, c) in p_x.iter().zip(cond) {
            for (label, pc) in p_c.iter().enumerate() {
                let joint = if label == 0 { p * c } else { p * (1.0 - c) };
                if joint > 0.0 && *pc > 0.0 {
                    total += joint * (joint / (p * pc)).log2();
                }
            }
        }
        total
    }

    /// The n=4 uniform instance used across the test suite.
    fn four_value_feature() -> SortedFeature<f64> {
        SortedFeature::from_probabilities(
            "four",
            vec![(0.25, 0.1), (0.25, 0.2), (0.25, 0.8), (0.25, 0.9)],
        )
        .unwrap()
    }

    #[test]
    fn f_vanishes_at_p0() {
        assert_eq!(f_div(0.5, &ctx(0.5)).unwrap(), 0.0);
        assert!(f_div(0.3, &ctx(0.3)).unwrap().abs() < 1e-15);
    }

    #[test]
    fn f_at_endpoints() {
        // f(0) = log2(1/(1-p0)), f(1) = log2(1/p0); both finite.
        assert_relative_eq!(f_div(0.0, &ctx(0.5)).unwrap(), 1.0);
        assert_relative_eq!(f_div(1.0, &ctx(0.5)).unwrap(), 1.0);
        assert_relative_eq!(f_div(0.0, &ctx(0.25)).unwrap(), (4.0f64 / 3.0).log2());
        assert_relative_eq!(f_div(1.0, &ctx(0.25)).unwrap(), 2.0);
    }

    #[test]
    fn f_rejects_degenerate_and_out_of_range() {
        assert!(matches!(
            f_div(0.5, &MiContext::new(0.0, LogBase::Bits).unwrap()),
            Err(Error::DegenerateLabel(_))
        ));
        assert!(matches!(
            f_div(1.5, &ctx(0.5)),
            Err(Error::InvalidProbability(_))
        ));
        assert!(MiContext::new(1.5f64, LogBase::Bits).is_err());
    }

    #[test]
    fn f_matches_direct_mi_on_two_point_instance() {
        // Half the mass at cond 1/3, half at 5/12; p0 = 3/8. Then
        // I(X;C) = 0.5 f(1/3) + 0.5 f(5/12), checked against the Eq.-(1) sum.
        let p_x = [0.5, 0.5];
        let cond = [1.0 / 3.0, 5.0 / 12.0];
        let c = ctx(0.375);
        let via_f = 0.5 * f_div(cond[0], &c).unwrap() + 0.5 * f_div(cond[1], &c).unwrap();
        assert_relative_eq!(via_f, mi_direct(&p_x, &cond), epsilon = 1e-12);
    }

    #[test]
    fn mutual_information_deterministic_channel() {
        let feat =
            SortedFeature::from_probabilities("d", vec![(0.5, 0.0), (0.5, 1.0)]).unwrap();
        assert_relative_eq!(mutual_information(&feat, LogBase::Bits), 1.0);
    }

    #[test]
    fn mutual_information_constant_conditional_is_zero() {
        let feat =
            SortedFeature::<f64>::from_probabilities("c", vec![(0.3, 0.4), (0.7, 0.4)]).unwrap();
        assert!(mutual_information(&feat, LogBase::Bits).abs() < 1e-15);
    }

    #[test]
    fn mutual_information_matches_direct_oracle() {
        let feat = four_value_feature();
        let expected = mi_direct(&[0.25; 4], &[0.1, 0.2, 0.8, 0.9]);
        assert_relative_eq!(
            mutual_information(&feat, LogBase::Bits),
            expected,
            epsilon = 1e-12
        );
        // Frozen from the oracle.
        assert_relative_eq!(expected, 0.4045381558, epsilon = 1e-9);
    }

    #[test]
    fn mutual_information_degenerate_label_is_zero() {
        let feat = SortedFeature::<f64>::from_counts(
            "deg",
            vec![
                ("a".into(), LabelCounts::new(2, 0)),
                ("b".into(), LabelCounts::new(3, 0)),
            ],
        )
        .unwrap();
        assert_eq!(mutual_information(&feat, LogBase::Bits), 0.0);
    }

    #[test]
    fn evaluate_partition_full_and_empty() {
        let feat = four_value_feature();
        let full = evaluate_partition(&feat, &BoundarySet::all_splits(4), LogBase::Bits).unwrap();
        assert_relative_eq!(
            full,
            mutual_information(&feat, LogBase::Bits),
            epsilon = 1e-12
        );
        let none = evaluate_partition(&feat, &BoundarySet::empty(), LogBase::Bits).unwrap();
        assert!(none.abs() < 1e-15);
    }

    #[test]
    fn evaluate_partition_middle_split() {
        // Exhaustive over the three singleton splits: {2} is best.
        let feat = four_value_feature();
        let mut best = (0, f64::MIN);
        for s in 1..4 {
            let v =
                evaluate_partition(&feat, &BoundarySet::new(vec![s]).unwrap(), LogBase::Bits)
                    .unwrap();
            if v > best.1 {
                best = (s, v);
            }
        }
        assert_eq!(best.0, 2);
        assert_relative_eq!(best.1, 0.3901596953, epsilon = 1e-9);
    }

    #[test]
    fn evaluate_partition_rejects_out_of_range() {
        let feat = four_value_feature();
        assert!(matches!(
            evaluate_partition(&feat, &BoundarySet::new(vec![4]).unwrap(), LogBase::Bits),
            Err(Error::BoundaryOutOfRange { .. })
        ));
    }

    #[test]
    fn marginal_gain_basics() {
        let c = ctx(0.5);
        assert_eq!(marginal_gain(0.4, 0.6, 0.3, 0.3, &c).unwrap(), 0.0);
        assert_relative_eq!(marginal_gain(0.5, 0.5, 0.0, 1.0, &c).unwrap(), 1.0);
        assert!(matches!(
            marginal_gain(0.0, 0.5, 0.1, 0.2, &c),
            Err(Error::NonPositiveMass(_))
        ));
        assert!(matches!(
            marginal_gain(0.5, -0.1, 0.1, 0.2, &c),
            Err(Error::NonPositiveMass(_))
        ));
    }

    #[test]
    fn marginal_gain_matches_partition_difference() {
        // Constructed 2-value feature: gain of the only split must equal
        // F({1}) - F(∅).
        let cases = [
            (0.3, 0.7, 0.2, 0.9),
            (0.5, 0.5, 0.0, 1.0),
            (0.9, 0.1, 0.45, 0.55),
        ];
        for (p, q, a, b) in cases {
            let feat =
                SortedFeature::from_probabilities("two", vec![(p, a), (q, b)]).unwrap();
            let c = feat.mi_context(LogBase::Bits);
            let gain = marginal_gain(p, q, a, b, &c).unwrap();
            let split =
                evaluate_partition(&feat, &BoundarySet::new(vec![1]).unwrap(), LogBase::Bits)
                    .unwrap();
            assert_relative_eq!(gain, split, epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_mi_identity_and_single() {
        let feat = four_value_feature();
        let id = partition_mi(&feat, &CompressionMap::identity(4), LogBase::Bits).unwrap();
        assert_relative_eq!(
            id,
            mutual_information(&feat, LogBase::Bits),
            epsilon = 1e-12
        );
        let one = partition_mi(&feat, &CompressionMap::single(4), LogBase::Bits).unwrap();
        assert!(one.abs() < 1e-15);
    }

    #[test]
    fn partition_mi_agrees_with_evaluate_on_consecutive_maps() {
        let feat = four_value_feature();
        for s in 1..4 {
            let set = BoundarySet::new(vec![s]).unwrap();
            let via_map = partition_mi(
                &feat,
                &CompressionMap::from_boundaries(&set, 4).unwrap(),
                LogBase::Bits,
            )
            .unwrap();
            let via_set = evaluate_partition(&feat, &set, LogBase::Bits).unwrap();
            assert_relative_eq!(via_map, via_set, epsilon = 1e-12);
        }
    }

    #[test]
    fn partition_mi_rejects_size_mismatch() {
        let feat = four_value_feature();
        assert!(matches!(
            partition_mi(&feat, &CompressionMap::identity(3), LogBase::Bits),
            Err(Error::MapSizeMismatch { .. })
        ));
    }

    /// The adversarial frequency-filter construction (n = 3k): top-k values
    /// carry no label signal, the tail carries 1/3 bit.
    fn frequency_adversary(k: usize) -> SortedFeature<f64> {
        let n = 3 * k;
        let mut pairs = Vec::new();
        for _ in 0..k {
            pairs.push((2.0 / n as f64, 0.5));
        }
        for _ in 0..k {
            pairs.push((0.5 / n as f64, 0.0));
        }
        for _ in 0..k {
            pairs.push((0.5 / n as f64, 1.0));
        }
        SortedFeature::from_probabilities("adv", pairs).unwrap()
    }

    #[test]
    fn top_frequency_singletons_plus_oov_lose_everything() {
        // Keep the k most frequent values as singletons, pool the rest: the
        // pooled cluster's conditional collapses to 1/2, so I(Z;C) = 0 even
        // though I(X;C) = 1/3 bit.
        let k = 2;
        let feat = frequency_adversary(k);
        assert_relative_eq!(
            mutual_information(&feat, LogBase::Bits),
            1.0 / 3.0,
            epsilon = 1e-12
        );
        // Sorted order: k values at cond 0, then k at 0.5 (the frequent ones),
        // then k at 1. Frequent singletons keep ids 0..k, all else pools.
        let mut assign = vec![0usize; 3 * k];
        let mut next = 0;
        for (i, a) in assign.iter_mut().enumerate() {
            if (k..2 * k).contains(&i) {
                *a = next;
                next += 1;
            }
        }
        let oov = next;
        for (i, a) in assign.iter_mut().enumerate() {
            if !(k..2 * k).contains(&i) {
                *a = oov;
            }
        }
        let map = CompressionMap::new(assign, k + 1, Some(oov)).unwrap();
        let kept = partition_mi(&feat, &map, LogBase::Bits).unwrap();
        assert!(kept.abs() < 1e-12);
    }

    #[test]
    fn densified_renumbers_and_tracks_oov() {
        let map = CompressionMap::new(vec![3, 3, 7, 5], 9, Some(7)).unwrap();
        let (dense, realized) = map.densified();
        assert_eq!(realized, 3);
        assert_eq!(dense.assignments(), &[0, 0, 2, 1]);
        assert_eq!(dense.oov_cluster(), Some(2));
    }

    // ---- property tests ---------------------------------------------------

    /// Random convex piecewise-linear function: max of affine pieces.
    #[derive(Debug, Clone)]
    struct PiecewiseConvex {
        pieces: Vec<(f64, f64)>, // (slope, intercept)
    }

    impl PiecewiseConvex {
        fn eval(&self, x: f64) -> f64 {
            self.pieces
                .iter()
                .map(|(a, b)| a * x + b)
                .fold(f64::NEG_INFINITY, f64::max)
        }
    }

    fn arb_piecewise() -> impl Strategy<Value = PiecewiseConvex> {
        prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..6)
            .prop_map(|pieces| PiecewiseConvex { pieces })
    }

    fn lemma_gap(f: impl Fn(f64) -> f64, p: f64, q: f64, a: f64, b: f64) -> f64 {
        p * f(a) + q * f(b) - (p + q) * f((p * a + q * b) / (p + q))
    }

    proptest! {
        #[test]
        fn f_is_convex(
            t1 in 0.0f64..=1.0,
            t2 in 0.0f64..=1.0,
            lambda in 0.0f64..=1.0,
            p0 in 0.01f64..=0.99,
        ) {
            let c = ctx(p0);
            let lhs = c.f_raw(lambda * t1 + (1.0 - lambda) * t2);
            let rhs = lambda * c.f_raw(t1) + (1.0 - lambda) * c.f_raw(t2);
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn f_nonnegative_and_zero_at_p0(t in 0.0f64..=1.0, p0 in 0.01f64..=0.99) {
            let c = ctx(p0);
            prop_assert!(c.f_raw(t) >= -1e-15);
            prop_assert!(c.f_raw(p0).abs() < 1e-12);
        }

        /// Raising the right endpoint of the split (β → γ ≥ β) cannot shrink
        /// the convexity gap; normalized weights.
        #[test]
        fn widening_gap_normalized(
            raw in prop::array::uniform3(0.0f64..=1.0),
            p in 0.01f64..=0.99,
            p0 in 0.01f64..=0.99,
        ) {
            let mut v = raw;
            v.sort_by(f64::total_cmp);
            let [a, b, g] = v;
            let q = 1.0 - p;
            let c = ctx(p0);
            let f = |t: f64| c.f_raw(t);
            prop_assert!(lemma_gap(f, p, q, a, b) <= lemma_gap(f, p, q, a, g) + 1e-12);
        }

        /// Same inequality with arbitrary positive masses, for f and for a
        /// random convex piecewise-linear function.
        #[test]
        fn widening_gap_general_masses(
            raw in prop::array::uniform3(0.0f64..=1.0),
            p in 0.01f64..=2.0,
            q in 0.01f64..=2.0,
            p0 in 0.01f64..=0.99,
            pw in arb_piecewise(),
        ) {
            let mut v = raw;
            v.sort_by(f64::total_cmp);
            let [a, b, g] = v;
            let c = ctx(p0);
            let f = |t: f64| c.f_raw(t);
            prop_assert!(lemma_gap(f, p, q, a, b) <= lemma_gap(f, p, q, a, g) + 1e-12);
            let pf = |t: f64| pw.eval(t);
            prop_assert!(lemma_gap(pf, p, q, a, b) <= lemma_gap(pf, p, q, a, g) + 1e-10);
        }

        /// Mirror inequality: lowering the left endpoint (α → γ ≤ α) cannot
        /// shrink the gap either.
        #[test]
        fn widening_gap_left(
            raw in prop::array::uniform3(0.0f64..=1.0),
            p in 0.01f64..=2.0,
            q in 0.01f64..=2.0,
            p0 in 0.01f64..=0.99,
            pw in arb_piecewise(),
        ) {
            let mut v = raw;
            v.sort_by(f64::total_cmp);
            let [g, a, b] = v;
            let c = ctx(p0);
            let f = |t: f64| c.f_raw(t);
            prop_assert!(lemma_gap(f, p, q, a, b) <= lemma_gap(f, p, q, g, b) + 1e-12);
            let pf = |t: f64| pw.eval(t);
            prop_assert!(lemma_gap(pf, p, q, a, b) <= lemma_gap(pf, p, q, g, b) + 1e-10);
        }

        /// Growing one side's mass (q → q' > q) cannot shrink the gap.
        #[test]
        fn growing_mass_gap(
            a in 0.0f64..=1.0,
            b in 0.0f64..=1.0,
            p in 0.01f64..=1.0,
            q in 0.01f64..=0.5,
            dq in 0.001f64..=0.5,
            p0 in 0.01f64..=0.99,
            pw in arb_piecewise(),
        ) {
            let c = ctx(p0);
            let f = |t: f64| c.f_raw(t);
            prop_assert!(lemma_gap(f, p, q, a, b) <= lemma_gap(f, p, q + dq, a, b) + 1e-12);
            let pf = |t: f64| pw.eval(t);
            prop_assert!(lemma_gap(pf, p, q, a, b) <= lemma_gap(pf, p, q + dq, a, b) + 1e-10);
        }

        /// Random instances: monotonicity under refinement and submodularity
        /// of the split objective.
        #[test]
        fn refinement_monotone_and_submodular(
            raw in prop::collection::vec((0.01f64..=1.0, 0.0f64..=1.0), 3..10),
            pick in prop::collection::vec(any::<bool>(), 10),
            extra in 0usize..10,
        ) {
            let total: f64 = raw.iter().map(|(p, _)| p).sum();
            let pairs: Vec<(f64, f64)> = raw.iter().map(|&(p, c)| (p / total, c)).collect();
            let n = pairs.len();
            let feat = SortedFeature::from_probabilities("prop", pairs).unwrap();

            // S1 ⊆ S2 ⊆ {1..n-1}, s ∉ S2.
            let mut s2: Vec<usize> = (1..n).filter(|&s| pick[s % pick.len()]).collect();
            let s = 1 + extra % (n - 1);
            s2.retain(|&x| x != s);
            let s1: Vec<usize> = s2.iter().copied().step_by(2).collect();

            let f_of = |splits: Vec<usize>| {
                evaluate_partition(&feat, &BoundarySet::new(splits).unwrap(), LogBase::Bits)
                    .unwrap()
            };
            let f1 = f_of(s1.clone());
            let f2 = f_of(s2.clone());
            let mut s1s = s1.clone();
            s1s.push(s);
            let mut s2s = s2.clone();
            s2s.push(s);
            let g1 = f_of(s1s) - f1;
            let g2 = f_of(s2s) - f2;

            // Monotone under refinement, bounded by I(X;C).
            prop_assert!(f1 >= -1e-15 && g1 >= -1e-12 && g2 >= -1e-12);
            prop_assert!(f2 + g2 <= mutual_information(&feat, LogBase::Bits) + 1e-12);
            // Submodular: the marginal gain shrinks as the set grows.
            prop_assert!(g1 >= g2 - 1e-12);
        }
    }
}

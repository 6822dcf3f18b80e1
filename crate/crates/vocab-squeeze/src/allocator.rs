//! Spending one global vocabulary budget across many categorical features.
//!
//! Three strategies: merge per-feature greedy marginals and cut globally
//! (the budget flows to wherever the information is), split the budget
//! uniformly, or split it proportionally to each feature's mutual
//! information. Every feature always keeps at least one cluster, so the
//! compressed mapping still covers all values.

use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_index::BoundaryIndex;
use crate::error::{Error, Result};
use crate::greedy::{self, GreedyConfig, GreedyStep};
use crate::ingest::SortedFeature;
use crate::mi::{evaluate_partition, mutual_information, BoundarySet, LogBase};
use crate::scalar::Real;

/// How per-feature marginal rankings are produced for the global strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RankingMode {
    /// Exact greedy ranking; O(n·budget) per feature, for modest sizes.
    Classic,
    /// Sampled greedy ranking; quasi-linear, the scalable default.
    Stochastic { epsilon: f64 },
}

/// Per-feature line of an allocation report.
#[derive(Debug, Clone, Serialize)]
pub struct FeatureReport {
    pub name: String,
    /// Vocabulary size before compression.
    pub n: usize,
    /// Clusters after compression.
    pub m: usize,
    pub mi_before_bits: f64,
    pub mi_after_bits: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationReport {
    pub per_feature: Vec<FeatureReport>,
    pub avg_mi_loss: f64,
}

/// Result of the global submodular allocation.
#[derive(Debug, Clone)]
pub struct GlobalSelection {
    /// One boundary set per input feature, same order.
    pub boundary_sets: Vec<BoundarySet>,
    /// Realized per-feature vocabulary sizes (selected boundaries + 1).
    pub budgets: Vec<usize>,
    pub report: AllocationReport,
}

/// (Σ_i X_i − Z_i) / (Σ_j X_j): the fraction of total mutual information the
/// compression gave up. Requires X_i ≥ Z_i ≥ 0 and a positive denominator.
pub fn average_mi_loss<F: Real>(before: &[F], after: &[F]) -> Result<F> {
    debug_assert_eq!(before.len(), after.len());
    let total: F = before.iter().copied().sum();
    if !(total > F::zero()) {
        return Err(Error::InvalidConfig(
            "total mutual information is zero; the loss ratio is undefined".into(),
        ));
    }
    let kept: F = after.iter().copied().sum();
    // Rounding guard only; data processing keeps the true value in [0, 1].
    Ok(((total - kept) / total).max(F::zero()).min(F::one()))
}

fn check_budget(num_features: usize, total_budget: usize) -> Result<()> {
    if total_budget < num_features {
        return Err(Error::BudgetTooSmall {
            budget: total_budget,
            min: num_features,
        });
    }
    if num_features == 0 {
        return Err(Error::InvalidConfig("no features to allocate over".into()));
    }
    Ok(())
}

/// Distributes `surplus` one cluster at a time, cycling features in input
/// order and skipping the ones already at their vocabulary size.
fn redistribute(budgets: &mut [usize], caps: &[usize], mut surplus: usize) {
    while surplus > 0 {
        let mut gave = false;
        for (b, &cap) in budgets.iter_mut().zip(caps) {
            if surplus == 0 {
                break;
            }
            if *b < cap {
                *b += 1;
                surplus -= 1;
                gave = true;
            }
        }
        if !gave {
            break; // every feature saturated
        }
    }
}

/// Equal shares, remainder to the largest vocabularies; shares above a
/// feature's vocabulary size are clamped and re-distributed round-robin.
pub fn allocate_uniform<F: Real>(
    feats: &[SortedFeature<F>],
    total_budget: usize,
) -> Result<Vec<usize>> {
    check_budget(feats.len(), total_budget)?;
    let count = feats.len();
    let caps: Vec<usize> = feats.iter().map(SortedFeature::n).collect();
    let mut budgets = vec![total_budget / count; count];
    let remainder = total_budget % count;
    let mut by_vocab: Vec<usize> = (0..count).collect();
    by_vocab.sort_by(|&a, &b| caps[b].cmp(&caps[a]).then(a.cmp(&b)));
    for &i in by_vocab.iter().take(remainder) {
        budgets[i] += 1;
    }
    clamp_and_redistribute(&mut budgets, &caps);
    Ok(budgets)
}

fn clamp_and_redistribute(budgets: &mut [usize], caps: &[usize]) {
    let mut surplus = 0;
    for (b, &cap) in budgets.iter_mut().zip(caps) {
        if *b > cap {
            surplus += *b - cap;
            *b = cap;
        }
    }
    redistribute(budgets, caps, surplus);
}

/// Shares proportional to each feature's mutual information, rounded by
/// largest remainder, floored at one cluster each, clamped to vocabulary
/// sizes. Falls back to the uniform split (with a warning) when every
/// feature has zero mutual information.
pub fn allocate_mi_proportional<F: Real>(
    feats: &[SortedFeature<F>],
    total_budget: usize,
    base: LogBase,
) -> Result<Vec<usize>> {
    check_budget(feats.len(), total_budget)?;
    let count = feats.len();
    let mi: Vec<f64> = feats
        .iter()
        .map(|f| mutual_information(f, base).as_f64())
        .collect();
    let total_mi: f64 = mi.iter().sum();
    if !(total_mi > 0.0) {
        log::warn!("all features carry zero mutual information; falling back to uniform shares");
        return allocate_uniform(feats, total_budget);
    }
    let caps: Vec<usize> = feats.iter().map(SortedFeature::n).collect();
    let raw: Vec<f64> = mi
        .iter()
        .map(|&m| total_budget as f64 * m / total_mi)
        .collect();
    let mut budgets: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = budgets.iter().sum();
    let mut order: Vec<usize> = (0..count).collect();
    // Largest fractional remainder first; ties to the larger vocabulary, then
    // input order (which keeps the all-equal case identical to uniform).
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.total_cmp(&fa)
            .then(caps[b].cmp(&caps[a]))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(total_budget - assigned) {
        budgets[i] += 1;
    }
    // Floor of one cluster per feature, paid for by the largest shares.
    loop {
        let Some(poor) = budgets.iter().position(|&b| b == 0) else {
            break;
        };
        let donor = (0..count)
            .filter(|&i| budgets[i] >= 2)
            .max_by(|&a, &b| budgets[a].cmp(&budgets[b]).then(b.cmp(&a)))
            .expect("budget ≥ feature count guarantees a donor");
        budgets[donor] -= 1;
        budgets[poor] += 1;
    }
    clamp_and_redistribute(&mut budgets, &caps);
    Ok(budgets)
}

pub(crate) fn derive_seed(seed: u64, index: usize) -> u64 {
    // splitmix64 of the pair; gives each feature an independent stream no
    // matter how the per-feature work is scheduled.
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Ranks boundaries inside every feature by greedy marginal gain, merges all
/// rankings, and keeps the `total_budget − #features` globally best. Each
/// feature ends with (its selected boundaries + 1) clusters, so the realized
/// vocabulary sizes sum to min(total_budget, Σ original sizes).
pub fn allocate_global_submodular<F: Real>(
    feats: &[SortedFeature<F>],
    total_budget: usize,
    mode: RankingMode,
    seed: u64,
    base: LogBase,
) -> Result<GlobalSelection> {
    check_budget(feats.len(), total_budget)?;
    let count = feats.len();
    let global_slots = total_budget - count;

    let rankings: Vec<Vec<GreedyStep<F>>> = feats
        .par_iter()
        .enumerate()
        .map(|(i, feat)| -> Result<Vec<GreedyStep<F>>> {
            let cap = feat.n().saturating_sub(1).min(global_slots);
            if cap == 0 {
                return Ok(Vec::new());
            }
            let mut index = BoundaryIndex::build(feat, base)?;
            match mode {
                RankingMode::Classic => greedy::marginal_ranking(&mut index, cap),
                RankingMode::Stochastic { epsilon } => {
                    let cfg = GreedyConfig::stochastic(cap + 1, epsilon, derive_seed(seed, i));
                    Ok(greedy::stochastic_greedy(&mut index, &cfg)?.steps)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let mut merged: Vec<(F, usize, usize)> = rankings
        .iter()
        .enumerate()
        .flat_map(|(fi, steps)| steps.iter().map(move |s| (s.gain, fi, s.split)))
        .collect();
    merged.sort_by(|&(ga, fa, sa), &(gb, fb, sb)| {
        gb.partial_cmp(&ga)
            .expect("finite gains")
            .then_with(|| feats[fa].name().cmp(feats[fb].name()))
            .then(sa.cmp(&sb))
    });

    let mut chosen: Vec<Vec<usize>> = vec![Vec::new(); count];
    for &(_, fi, split) in merged.iter().take(global_slots) {
        chosen[fi].push(split);
    }
    let boundary_sets: Vec<BoundarySet> = chosen
        .into_iter()
        .map(BoundarySet::new)
        .collect::<Result<_>>()?;
    let budgets: Vec<usize> = boundary_sets.iter().map(|s| s.len() + 1).collect();

    let report = build_report(feats, &boundary_sets, base)?;
    Ok(GlobalSelection {
        boundary_sets,
        budgets,
        report,
    })
}

/// Report assembly for consecutive (boundary-set) compressions.
pub fn build_report<F: Real>(
    feats: &[SortedFeature<F>],
    sets: &[BoundarySet],
    base: LogBase,
) -> Result<AllocationReport> {
    let mut per_feature = Vec::with_capacity(feats.len());
    let mut before = Vec::with_capacity(feats.len());
    let mut after = Vec::with_capacity(feats.len());
    for (feat, set) in feats.iter().zip(sets) {
        let x = mutual_information(feat, base);
        let z = evaluate_partition(feat, set, base)?;
        before.push(x);
        after.push(z);
        per_feature.push(FeatureReport {
            name: feat.name().to_owned(),
            n: feat.n(),
            m: set.len() + 1,
            mi_before_bits: base.to_bits(x).as_f64(),
            mi_after_bits: base.to_bits(z).as_f64(),
        });
    }
    let avg_mi_loss = match average_mi_loss(&before, &after) {
        Ok(v) => v.as_f64(),
        Err(_) => 0.0, // no information to lose
    };
    Ok(AllocationReport {
        per_feature,
        avg_mi_loss,
    })
}

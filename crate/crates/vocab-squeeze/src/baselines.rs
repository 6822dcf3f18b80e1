//! Heuristic baselines and exact small-instance oracles.
//!
//! The heuristics (bucketing, frequency filtering, divisive clustering) exist
//! to be compared against; none of them carries an approximation guarantee,
//! and the unit tests reproduce the adversarial instances on which bucketing
//! and frequency filtering retain zero information. The oracles (dynamic
//! program, brute force) are exact and guarded to small instances; they anchor
//! every approximation-ratio test in the crate.

use std::cmp::Reverse;

use itertools::Itertools;

use crate::boundary_index::PrefixTables;
use crate::error::{Error, Result};
use crate::ingest::SortedFeature;
use crate::mi::{evaluate_partition, BoundarySet, CompressionMap, LogBase, MiContext};
use crate::scalar::Real;

/// Outcome of equal-width conditional-probability bucketing.
#[derive(Debug, Clone)]
pub struct BucketingResult<F> {
    pub k_buckets: usize,
    /// Value i goes to bucket ⌊cond_i · k⌋ (the last bucket is closed above).
    pub map: CompressionMap,
    /// Buckets that actually received a value.
    pub realized: usize,
    /// The loss bound Δ_max: the largest oscillation of f within one bucket.
    /// Zero for degenerate label distributions.
    pub delta_max: F,
}

/// Splits [0, 1] into `k_buckets` equal intervals of conditional probability
/// and pools the values falling into each. Oblivious to the mass distribution,
/// which is exactly how it loses: the map is always consecutive in sorted
/// order, yet every value can land in one bucket.
pub fn bucketing<F: Real>(
    feat: &SortedFeature<F>,
    k_buckets: usize,
    base: LogBase,
) -> Result<BucketingResult<F>> {
    if k_buckets == 0 {
        return Err(Error::InvalidConfig("bucket count must be ≥ 1".into()));
    }
    let n = feat.n();
    let k = F::from_usize(k_buckets).unwrap();
    let assign: Vec<usize> = (0..n)
        .map(|i| {
            let b = (feat.cond(i) * k).floor().to_usize().unwrap_or(0);
            b.min(k_buckets - 1)
        })
        .collect();
    let map = CompressionMap::new(assign, k_buckets, None)?;
    let realized = map.nonempty_clusters();
    let ctx = feat.mi_context(base);
    let delta_max = if ctx.is_degenerate() {
        F::zero()
    } else {
        bucketing_loss_bound(k_buckets, &ctx)?
    };
    Ok(BucketingResult {
        k_buckets,
        map,
        realized,
        delta_max,
    })
}

/// Δ_max = max over buckets j of (max f − min f on the j-th interval),
/// evaluated analytically: f is convex with its minimum f(p0) = 0, so the
/// maximum over a closed interval sits at an endpoint and the minimum is 0
/// when p0 lies inside, otherwise at the nearer endpoint.
pub fn bucketing_loss_bound<F: Real>(k_buckets: usize, ctx: &MiContext<F>) -> Result<F> {
    if ctx.is_degenerate() {
        return Err(Error::DegenerateLabel(ctx.p0().as_f64()));
    }
    if k_buckets == 0 {
        return Err(Error::InvalidConfig("bucket count must be ≥ 1".into()));
    }
    let k = F::from_usize(k_buckets).unwrap();
    let mut worst = F::zero();
    for j in 0..k_buckets {
        let a = F::from_usize(j).unwrap() / k;
        let b = if j + 1 == k_buckets {
            F::one()
        } else {
            F::from_usize(j + 1).unwrap() / k
        };
        let fa = ctx.f_raw(a);
        let fb = ctx.f_raw(b);
        let hi = fa.max(fb);
        let lo = if (a..=b).contains(&ctx.p0()) {
            F::zero()
        } else {
            fa.min(fb)
        };
        worst = worst.max(hi - lo);
    }
    Ok(worst)
}

/// Outcome of count-threshold feature selection across one or more features.
#[derive(Debug, Clone)]
pub struct FrequencyResult {
    /// Smallest retained count; `None` when nothing was retained or the
    /// features carry no counts.
    pub threshold: Option<u64>,
    /// One map per input feature: singleton clusters for retained values,
    /// one OOV cluster (highest id) pooling the rest.
    pub maps: Vec<CompressionMap>,
    pub retained_per_feature: Vec<usize>,
    pub retained_total: usize,
}

/// Retains the `budget` highest-count values across all given features as
/// singleton clusters and pools everything else into one OOV cluster per
/// feature. Ranking ties break by feature name, then ascending value id.
/// Label-oblivious by construction. Features built without counts fall back
/// to a probability-mass ranking.
pub fn frequency_filter<F: Real>(
    feats: &[SortedFeature<F>],
    budget: usize,
) -> Result<FrequencyResult> {
    let use_counts = feats.iter().all(|f| f.counts().is_some());
    // (weight, feature position, value position) with a deterministic order.
    let mut entries: Vec<(u64, usize, usize)> = Vec::new();
    for (fi, feat) in feats.iter().enumerate() {
        for i in 0..feat.n() {
            let w = if use_counts {
                feat.counts().unwrap()[i].total()
            } else {
                // Scale masses to a comparable integer grid.
                (feat.p_x(i).as_f64() * 1e15) as u64
            };
            entries.push((w, fi, i));
        }
    }
    entries.sort_by(|&(wa, fa, ia), &(wb, fb, ib)| {
        Reverse(wa)
            .cmp(&Reverse(wb))
            .then_with(|| value_key(feats, fa, ia).cmp(&value_key(feats, fb, ib)))
    });
    let retained = &entries[..budget.min(entries.len())];
    let threshold = if use_counts {
        retained.iter().map(|&(w, _, _)| w).min()
    } else {
        None
    };

    let mut keep: Vec<Vec<bool>> = feats.iter().map(|f| vec![false; f.n()]).collect();
    for &(_, fi, i) in retained {
        keep[fi][i] = true;
    }
    let mut maps = Vec::with_capacity(feats.len());
    let mut retained_per_feature = Vec::with_capacity(feats.len());
    for kept in &keep {
        let r = kept.iter().filter(|&&k| k).count();
        let has_oov = r < kept.len();
        let num_clusters = r + usize::from(has_oov);
        let mut next = 0;
        let assign: Vec<usize> = kept
            .iter()
            .map(|&k| {
                if k {
                    next += 1;
                    next - 1
                } else {
                    r
                }
            })
            .collect();
        maps.push(CompressionMap::new(
            assign,
            num_clusters.max(1),
            has_oov.then_some(r),
        )?);
        retained_per_feature.push(r);
    }
    Ok(FrequencyResult {
        threshold,
        maps,
        retained_per_feature,
        retained_total: retained.len(),
    })
}

/// Sort key for frequency ties: feature name first, then value id (or sorted
/// position where ids are absent).
fn value_key<'a, F: Real>(
    feats: &'a [SortedFeature<F>],
    fi: usize,
    i: usize,
) -> (&'a str, Option<&'a str>, usize) {
    match feats[fi].id(i) {
        Some(id) => (feats[fi].name(), Some(id), 0),
        None => (feats[fi].name(), None, i),
    }
}

/// KL divergence between the two-point label distributions (t, 1−t) and
/// (c, 1−c), in the context's log base; +∞ when a zero coordinate of c meets
/// a nonzero coordinate of t.
fn kl<F: Real>(t: F, c: F, base: LogBase) -> F {
    let one = F::one();
    let log = |x: F| match base {
        LogBase::Bits => x.log2(),
        LogBase::Nats => x.ln(),
    };
    let mut acc = F::zero();
    if t > F::zero() {
        acc = acc + t * log(t / c); // c = 0 → +∞, as intended
    }
    if t < one {
        acc = acc + (one - t) * log((one - t) / (one - c));
    }
    acc
}

/// Iterative KL-divergence clustering in the style of divisive information-
/// theoretic feature clustering: initialize m contiguous equal-mass groups in
/// the conditional-sorted order, then alternate assigning each value to the
/// cluster with nearest conditional (in KL) and recomputing cluster
/// conditionals as mass-weighted means. The retained-information objective is
/// non-decreasing across iterations (asserted). The map it returns need not
/// be consecutive.
///
/// `_seed` is reserved for a randomized-initialization mode; the current
/// initialization is deterministic.
pub fn divisive_cluster<F: Real>(
    feat: &SortedFeature<F>,
    m: usize,
    max_iters: usize,
    _seed: u64,
    base: LogBase,
) -> Result<CompressionMap> {
    if m == 0 {
        return Err(Error::InvalidConfig("cluster count must be ≥ 1".into()));
    }
    let n = feat.n();
    let m = m.min(n);
    if m == n {
        return Ok(CompressionMap::identity(n));
    }
    if m == 1 {
        return Ok(CompressionMap::single(n));
    }

    // Contiguous equal-mass initialization, guaranteed non-empty.
    let mut assign = vec![0usize; n];
    {
        let total: F = (0..n).map(|i| feat.p_x(i)).sum();
        let mut cum = F::zero();
        let mut z = 0usize;
        for (i, a) in assign.iter_mut().enumerate() {
            *a = z;
            cum = cum + feat.p_x(i);
            let target = total * F::from_usize(z + 1).unwrap() / F::from_usize(m).unwrap();
            // Advance when the running mass crosses the next quantile, but
            // never leave fewer values than clusters still to fill.
            if z + 1 < m && cum >= target && n - i - 1 >= m - z - 1 {
                z += 1;
            }
            // Force the advance if only just enough values remain.
            if z + 1 < m && n - i - 1 == m - z - 1 {
                z += 1;
            }
        }
    }

    let ctx = feat.mi_context(base);
    let mut prev_objective = F::neg_infinity();
    for _ in 0..max_iters {
        // Update step: cluster conditionals as mass-weighted means.
        let mut mass = vec![F::zero(); m];
        let mut joint = vec![F::zero(); m];
        for i in 0..n {
            mass[assign[i]] = mass[assign[i]] + feat.p_x(i);
            joint[assign[i]] = joint[assign[i]] + feat.joint0(i);
        }
        let centroid: Vec<F> = (0..m)
            .map(|z| {
                if mass[z] > F::zero() {
                    joint[z] / mass[z]
                } else {
                    F::zero()
                }
            })
            .collect();

        let objective: F = if ctx.is_degenerate() {
            F::zero()
        } else {
            (0..m)
                .filter(|&z| mass[z] > F::zero())
                .map(|z| mass[z] * ctx.f_raw(centroid[z].min(F::one()).max(F::zero())))
                .sum()
        };
        assert!(
            objective >= prev_objective - F::from_f64(1e-9).unwrap(),
            "divisive objective regressed: {prev_objective} -> {objective}"
        );
        prev_objective = objective;

        // Assign step. KL(t ‖ c) is unimodal in c with its minimum at c = t,
        // so over centroids sorted by conditional only the two bracketing a
        // value can attain the argmin.
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            centroid[a]
                .partial_cmp(&centroid[b])
                .unwrap()
                .then(a.cmp(&b))
        });
        let mut new_assign = vec![0usize; n];
        let mut ptr = 0usize;
        for i in 0..n {
            let t = feat.cond(i);
            while ptr + 1 < m && centroid[order[ptr + 1]] < t {
                ptr += 1;
            }
            let mut best = order[ptr];
            let mut best_kl = kl(t, centroid[best], base);
            if ptr + 1 < m {
                let cand = order[ptr + 1];
                let cand_kl = kl(t, centroid[cand], base);
                if cand_kl < best_kl || (cand_kl == best_kl && cand < best) {
                    best = cand;
                    best_kl = cand_kl;
                }
            }
            let _ = best_kl;
            new_assign[i] = best;
        }

        // Re-seed empty clusters with the value farthest (in KL) from its
        // current centroid, taken from clusters that can spare one.
        let mut sizes = vec![0usize; m];
        for &z in &new_assign {
            sizes[z] += 1;
        }
        for z in 0..m {
            while sizes[z] == 0 {
                let mut donor: Option<(usize, F)> = None;
                for i in 0..n {
                    let zi = new_assign[i];
                    if sizes[zi] < 2 {
                        continue;
                    }
                    let d = kl(feat.cond(i), centroid[zi], base);
                    match donor {
                        Some((_, best)) if d <= best => {}
                        _ => donor = Some((i, d)),
                    }
                }
                let Some((i, _)) = donor else { break };
                sizes[new_assign[i]] -= 1;
                new_assign[i] = z;
                sizes[z] += 1;
            }
        }

        if new_assign == assign {
            break;
        }
        assign = new_assign;
    }
    CompressionMap::new(assign, m, None)
}

fn clamp_clusters<F: Real>(feat: &SortedFeature<F>, m: usize) -> usize {
    let n = feat.n();
    if m > n {
        log::warn!(
            "cluster budget {m} exceeds vocabulary size {n} for `{}`; clamping",
            feat.name()
        );
    }
    m.min(n)
}

/// Exact optimum by dynamic programming over block scores, O(n²m) time.
/// Guarded to n ≤ 5000: this is a test oracle, not a production path.
/// Backtracking ties take the smallest split.
pub fn dp_optimal<F: Real>(
    feat: &SortedFeature<F>,
    m: usize,
    base: LogBase,
) -> Result<(BoundarySet, F)> {
    if m == 0 {
        return Err(Error::InvalidConfig("cluster count must be ≥ 1".into()));
    }
    let n = feat.n();
    if n > 5000 {
        return Err(Error::InstanceTooLarge(format!(
            "dp oracle guarded to n ≤ 5000, got {n}"
        )));
    }
    let m = clamp_clusters(feat, m);
    let ctx = feat.mi_context(base);
    if ctx.is_degenerate() {
        return Ok((BoundarySet::new((1..m).collect())?, F::zero()));
    }
    let tables = PrefixTables::from_feature(feat);
    let score = |a: usize, b: usize| -> F {
        let (mass, cond) = tables.block(a, b);
        mass * ctx.f_raw(cond)
    };

    // dp[i] after layer j: best objective for the first i values in j blocks.
    let neg = F::neg_infinity();
    let mut prev = vec![neg; n + 1];
    prev[0] = F::zero();
    let mut back = vec![vec![0u32; n + 1]; m + 1];
    let mut cur = vec![neg; n + 1];
    for j in 1..=m {
        for c in cur.iter_mut() {
            *c = neg;
        }
        // Block j may end at i ∈ [j, n − (m − j)].
        for i in j..=(n - (m - j)) {
            let mut best = neg;
            let mut best_t = j - 1;
            for t in (j - 1)..i {
                if prev[t] == neg {
                    continue;
                }
                let v = prev[t] + score(t, i);
                if v > best {
                    best = v;
                    best_t = t;
                }
            }
            cur[i] = best;
            back[j][i] = best_t as u32;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let optimum = prev[n];
    let mut splits = Vec::with_capacity(m - 1);
    let mut i = n;
    for j in (2..=m).rev() {
        let t = back[j][i] as usize;
        splits.push(t);
        i = t;
    }
    splits.reverse();
    Ok((BoundarySet::new(splits)?, optimum))
}

fn binomial(n: usize, k: usize) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul((n - i) as u128)?;
        acc /= (i + 1) as u128;
        if acc > 10u128.pow(12) {
            return None;
        }
    }
    Some(acc)
}

/// Exhaustive optimum over all C(n−1, m−1) boundary sets, evaluated through
/// the scratch partition route (deliberately independent of the prefix-table
/// machinery). Ties take the lexicographically smallest set.
pub fn brute_force_optimal<F: Real>(
    feat: &SortedFeature<F>,
    m: usize,
    base: LogBase,
) -> Result<(BoundarySet, F)> {
    brute_force_optimal_containing(feat, m, &[], base)
}

/// Exhaustive optimum restricted to boundary sets containing `forced`.
pub fn brute_force_optimal_containing<F: Real>(
    feat: &SortedFeature<F>,
    m: usize,
    forced: &[usize],
    base: LogBase,
) -> Result<(BoundarySet, F)> {
    if m == 0 {
        return Err(Error::InvalidConfig("cluster count must be ≥ 1".into()));
    }
    let n = feat.n();
    let m = clamp_clusters(feat, m);
    let want = m - 1;
    if forced.len() > want {
        return Err(Error::InvalidConfig(format!(
            "{} forced boundaries exceed the {want}-split budget",
            forced.len()
        )));
    }
    let free: Vec<usize> = (1..n).filter(|s| !forced.contains(s)).collect();
    let choose = want - forced.len();
    match binomial(free.len(), choose) {
        Some(c) if c <= 1_000_000 => {}
        _ => {
            return Err(Error::InstanceTooLarge(format!(
                "C({}, {choose}) combinations exceed the brute-force guard",
                free.len()
            )))
        }
    }
    let mut best: Option<(BoundarySet, F)> = None;
    for combo in free.into_iter().combinations(choose) {
        let mut splits = combo;
        splits.extend_from_slice(forced);
        let set = BoundarySet::new(splits)?;
        let value = evaluate_partition(feat, &set, base)?;
        match &best {
            Some((_, bv)) if value <= *bv => {}
            _ => best = Some((set, value)),
        }
    }
    Ok(best.expect("at least one boundary set exists"))
}

//! Sharded threshold optimizer.
//!
//! Forcing a boundary at every shard edge makes each shard's gain queries
//! fully local: both neighbors of any local candidate are inside the shard, so
//! a shard holds only its slice of the prefix tables — O(n / num_shards)
//! entries — and never talks to its peers. A coordinator broadcasts a
//! geometrically decaying threshold `w_i = (1−ε)^i · w_0`; each round, every
//! shard inserts the local candidates whose current gain clears the threshold
//! and reports them. Forcing the edges costs at most an ε fraction of the
//! optimum, leaving a (1 − 1/e − 2ε) guarantee overall.
//!
//! Transport is an in-process simulation behind the [`ShardPool`] trait; the
//! message types are plain serializable structs so the same coordinator logic
//! can sit on a real RPC layer.

use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeSet;
use std::ops::Bound::{Excluded, Unbounded};

use crate::boundary_index::{gain_between, BoundaryIndex, PrefixTables};
use crate::error::{Error, Result};
use crate::greedy::GreedyStep;
use crate::ingest::SortedFeature;
use crate::mi::{evaluate_partition, BoundarySet, LogBase, MiContext};
use crate::scalar::Real;

/// How one feature's candidate space is cut into shards.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardPlan {
    pub n: usize,
    /// Interior boundaries to select, counting the forced ones.
    pub budget: usize,
    pub epsilon: f64,
    pub num_shards: usize,
    /// Pre-selected boundaries at the shard edges.
    pub forced: Vec<usize>,
    /// Half-open index ranges (lo, hi], one per shard.
    pub ranges: Vec<(usize, usize)>,
    /// True when the forced boundaries would have eaten the whole budget and
    /// the plan fell back to a single shard.
    pub degraded: bool,
}

/// Cuts {1..n−1} into ⌈εk⌉ contiguous shards (one shard when εk < 2) and
/// spends part of the budget on the forced edge boundaries.
pub fn plan_shards<F: Real>(
    feat: &SortedFeature<F>,
    budget: usize,
    epsilon: f64,
) -> Result<ShardPlan> {
    plan_shards_with(feat, budget, epsilon, None)
}

/// [`plan_shards`] with an explicit shard-count override replacing the
/// ⌈εk⌉ rule (still subject to the budget degrade check).
pub fn plan_shards_with<F: Real>(
    feat: &SortedFeature<F>,
    budget: usize,
    epsilon: f64,
    shards_override: Option<usize>,
) -> Result<ShardPlan> {
    let n = feat.n();
    if budget == 0 {
        return Err(Error::BudgetTooSmall { budget: 0, min: 1 });
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidConfig(
            "a feature needs at least two values to have interior boundaries".into(),
        ));
    }
    let budget = if budget > n - 1 {
        log::warn!("budget {budget} exceeds n−1 = {}; clamping", n - 1);
        n - 1
    } else {
        budget
    };
    let ek = epsilon * budget as f64;
    let mut num_shards = match shards_override {
        Some(0) => {
            return Err(Error::InvalidConfig("shard count must be ≥ 1".into()));
        }
        Some(s) => s,
        None if ek < 2.0 => 1,
        None => ek.ceil() as usize,
    };
    let mut degraded = false;
    if num_shards - 1 >= budget {
        log::warn!(
            "{} forced boundaries would exhaust the budget {budget}; degrading to one shard",
            num_shards - 1
        );
        num_shards = 1;
        degraded = true;
    }
    let chunk = n.div_ceil(num_shards);
    let mut edges: Vec<usize> = (0..=num_shards).map(|j| (j * chunk).min(n)).collect();
    edges.dedup();
    let forced: Vec<usize> = edges[1..edges.len() - 1].to_vec();
    let ranges: Vec<(usize, usize)> = edges.windows(2).map(|w| (w[0], w[1])).collect();
    Ok(ShardPlan {
        n,
        budget,
        epsilon,
        num_shards: ranges.len(),
        forced,
        ranges,
        degraded,
    })
}

/// Coordinator → shard broadcast for one round.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RoundMessage<F> {
    pub round: usize,
    pub threshold: F,
    /// Global budget still unspent; shards cap their per-round insertions at
    /// this, so the collective overshoot stays within one round's worth.
    pub remaining_budget: usize,
}

/// Shard → coordinator report: the splits inserted this round, in insertion
/// order.
#[derive(Debug, Clone)]
pub struct ShardReply<F> {
    pub inserted: Vec<GreedyStep<F>>,
}

impl<F> Default for ShardReply<F> {
    fn default() -> Self {
        Self {
            inserted: Vec::new(),
        }
    }
}

/// One line of the round trace, serializable as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub threshold: f64,
    pub inserted_per_shard: Vec<usize>,
}

/// Renders the round trace as JSON lines.
pub fn trace_to_jsonl(rounds: &[RoundTrace]) -> String {
    rounds
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace serializes"))
        .fold(String::new(), |mut acc, line| {
            acc.push_str(&line);
            acc.push('\n');
            acc
        })
}

/// One shard: a slice of the prefix tables plus the local boundary set,
/// seeded with the shard's two edges.
#[derive(Debug, Clone)]
pub struct ShardState<F> {
    range: (usize, usize),
    tables: PrefixTables<F>,
    local: BTreeSet<usize>,
    ctx: MiContext<F>,
}

impl<F: Real> ShardState<F> {
    fn new(range: (usize, usize), tables: PrefixTables<F>, ctx: MiContext<F>) -> Self {
        let mut local = BTreeSet::new();
        local.insert(range.0);
        local.insert(range.1);
        Self {
            range,
            tables,
            local,
            ctx,
        }
    }

    /// Prefix entries held; the space bound under test.
    pub fn entries(&self) -> usize {
        self.tables.entries()
    }

    pub fn range(&self) -> (usize, usize) {
        self.range
    }

    fn gain(&self, s: usize) -> F {
        let lo = *self.local.range(..s).next_back().expect("edge sentinel");
        let hi = *self
            .local
            .range((Excluded(s), Unbounded))
            .next()
            .expect("edge sentinel");
        gain_between(&self.tables, &self.ctx, lo, s, hi)
    }

    /// Largest single-candidate gain against the forced-edge solution.
    fn max_single_gain(&self) -> F {
        let (lo, hi) = self.range;
        let mut best = F::zero();
        for s in lo + 1..hi {
            best = best.max(gain_between(&self.tables, &self.ctx, lo, s, hi));
        }
        best
    }

    /// Ascending scan; inserts every untried candidate whose current local
    /// gain clears the threshold, up to the remaining budget.
    fn run_round(&mut self, msg: &RoundMessage<F>) -> ShardReply<F> {
        let (lo, hi) = self.range;
        let mut reply = ShardReply::default();
        for s in lo + 1..hi {
            if reply.inserted.len() >= msg.remaining_budget {
                break;
            }
            if self.local.contains(&s) {
                continue;
            }
            let gain = self.gain(s);
            if gain >= msg.threshold {
                self.local.insert(s);
                reply.inserted.push(GreedyStep { split: s, gain });
            }
        }
        reply
    }
}

/// The transport boundary: anything that can broadcast a round to every shard
/// and gather ordered replies.
pub trait ShardPool<F> {
    fn num_shards(&self) -> usize;
    fn max_single_gain(&self) -> F;
    fn run_round(&mut self, msg: &RoundMessage<F>) -> Vec<ShardReply<F>>;
}

/// In-process pool; shards run a round in parallel with no shared state.
pub struct LocalShardPool<F> {
    shards: Vec<ShardState<F>>,
}

impl<F: Real> LocalShardPool<F> {
    pub fn from_plan(plan: &ShardPlan, feat: &SortedFeature<F>, base: LogBase) -> Self {
        let master = PrefixTables::from_feature(feat);
        let ctx = feat.mi_context(base);
        let shards = plan
            .ranges
            .iter()
            .map(|&(lo, hi)| ShardState::new((lo, hi), master.slice(lo, hi), ctx))
            .collect();
        Self { shards }
    }

    /// Largest prefix-table footprint across shards.
    pub fn max_entries(&self) -> usize {
        self.shards.iter().map(ShardState::entries).max().unwrap_or(0)
    }
}

impl<F: Real> ShardPool<F> for LocalShardPool<F> {
    fn num_shards(&self) -> usize {
        self.shards.len()
    }

    fn max_single_gain(&self) -> F {
        let maxima: Vec<F> = self
            .shards
            .par_iter()
            .map(ShardState::max_single_gain)
            .collect();
        maxima.into_iter().fold(F::zero(), F::max)
    }

    fn run_round(&mut self, msg: &RoundMessage<F>) -> Vec<ShardReply<F>> {
        self.shards
            .par_iter_mut()
            .map(|shard| shard.run_round(msg))
            .collect()
    }
}

/// One selected boundary with its bookkeeping for the trim step.
#[derive(Debug, Clone, Copy)]
pub struct Selection<F> {
    pub split: usize,
    pub gain: F,
    pub forced: bool,
}

/// Drops the lowest-insertion-gain non-forced selections (ties: smaller
/// split first) until at most `budget` remain. Forced boundaries are never
/// dropped.
pub fn trim<F: Real>(mut solution: Vec<Selection<F>>, budget: usize) -> BoundarySet {
    let overshoot = solution.len().saturating_sub(budget);
    if overshoot > 0 {
        let mut removable: Vec<usize> = (0..solution.len())
            .filter(|&i| !solution[i].forced)
            .collect();
        removable.sort_by(|&a, &b| {
            solution[a]
                .gain
                .partial_cmp(&solution[b].gain)
                .expect("finite gains")
                .then(solution[a].split.cmp(&solution[b].split))
        });
        let drop: BTreeSet<usize> = removable.into_iter().take(overshoot).collect();
        solution = solution
            .into_iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, s)| s)
            .collect();
    }
    BoundarySet::new(solution.into_iter().map(|s| s.split).collect())
        .expect("selections are distinct interior splits")
}

/// Full outcome of a distributed run.
#[derive(Debug, Clone)]
pub struct DistributedResult<F> {
    pub boundaries: BoundarySet,
    /// Insertion gains of the final solution, re-derived by replaying it in
    /// ascending order so they telescope exactly to the objective (the raw
    /// round-by-round gains stop telescoping once the trim removes elements).
    pub steps: Vec<GreedyStep<F>>,
    pub objective: F,
    pub rounds: Vec<RoundTrace>,
    pub plan: ShardPlan,
    /// Largest shard prefix-table footprint observed.
    pub max_shard_entries: usize,
}

/// Runs the threshold rounds on an in-process pool.
pub fn run_threshold_rounds<F: Real>(
    plan: &ShardPlan,
    feat: &SortedFeature<F>,
    base: LogBase,
) -> Result<DistributedResult<F>> {
    let mut pool = LocalShardPool::from_plan(plan, feat, base);
    let max_entries = pool.max_entries();
    run_with_pool(plan, &mut pool, feat, base, max_entries)
}

/// Coordinator loop over an arbitrary transport.
pub fn run_with_pool<F: Real, P: ShardPool<F>>(
    plan: &ShardPlan,
    pool: &mut P,
    feat: &SortedFeature<F>,
    base: LogBase,
    max_shard_entries: usize,
) -> Result<DistributedResult<F>> {
    let n = plan.n;
    let eps = plan.epsilon;
    let mut selections: Vec<Selection<F>> = plan
        .forced
        .iter()
        .map(|&s| Selection {
            split: s,
            gain: F::zero(),
            forced: true,
        })
        .collect();
    let mut rounds = Vec::new();

    let w0 = pool.max_single_gain();
    if w0 > F::zero() {
        let max_round = (n as f64).ln() / (1.0 / (1.0 - eps)).ln();
        let max_round = max_round.ceil().max(0.0) as usize;
        // Gains below this floor cannot matter at the guarantee level.
        let floor = w0 * F::from_f64(eps / n as f64).unwrap();
        let decay = F::from_f64(1.0 - eps).unwrap();
        let mut threshold = w0;
        for round in 0..=max_round {
            let remaining = plan.budget - selections.len().min(plan.budget);
            if remaining == 0 || threshold < floor {
                break;
            }
            let msg = RoundMessage {
                round,
                threshold,
                remaining_budget: remaining,
            };
            let replies = pool.run_round(&msg);
            let mut per_shard = Vec::with_capacity(replies.len());
            for reply in replies {
                per_shard.push(reply.inserted.len());
                selections.extend(reply.inserted.into_iter().map(|step| Selection {
                    split: step.split,
                    gain: step.gain,
                    forced: false,
                }));
            }
            rounds.push(RoundTrace {
                round,
                threshold: threshold.as_f64(),
                inserted_per_shard: per_shard,
            });
            threshold = threshold * decay;
        }
    }

    let boundaries = trim(selections, plan.budget);
    let objective = evaluate_partition(feat, &boundaries, base)?;

    // Replay for telescoping per-step gains.
    let mut replay = BoundaryIndex::build(feat, base)?;
    let mut steps = Vec::with_capacity(boundaries.len());
    for s in boundaries.iter() {
        let gain = replay.insert(s)?;
        steps.push(GreedyStep { split: s, gain });
    }
    debug_assert!((replay.objective() - objective).abs().as_f64() < 1e-9);

    Ok(DistributedResult {
        boundaries,
        steps,
        objective,
        rounds,
        plan: plan.clone(),
        max_shard_entries,
    })
}

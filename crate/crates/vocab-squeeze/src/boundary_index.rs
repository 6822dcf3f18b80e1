//! Incremental gain queries against a growing split set.
//!
//! One O(n) pass builds prefix tables; after that, the gain of any candidate
//! split against the current solution is an O(log |S|) neighbor lookup plus
//! O(1) arithmetic, and inserting a chosen split is O(log |S|). The split set
//! itself lives in a `BTreeSet` (any ordered set with logarithmic
//! predecessor/successor would do).
//!
//! When the feature carries integer counts, the tables store exact count
//! prefix sums and every block statistic is an integer difference normalized
//! once, so query results are bit-for-bit reproducible across runs and
//! insertion orders.

use std::collections::BTreeSet;
use std::ops::Bound::{Excluded, Unbounded};

use crate::error::{Error, Result};
use crate::ingest::SortedFeature;
use crate::mi::{BoundarySet, LogBase, MiContext};
use crate::scalar::Real;

/// Cumulative mass and cumulative joint P(X, C=0) indexed by 0..=n, backed by
/// integer count prefix sums when the feature has counts. `offset` lets a
/// shard hold just its slice of the tables while still being addressed by
/// global indices.
#[derive(Debug, Clone)]
pub struct PrefixTables<F> {
    offset: usize,
    backing: Backing<F>,
}

/// (cumulative total, cumulative label-0) pairs are kept interleaved so one
/// prefix lookup touches one cache line.
#[derive(Debug, Clone)]
enum Backing<F> {
    Counts {
        cum: Vec<(u64, u64)>,
        grand_total: u64,
    },
    Mass {
        cum: Vec<(F, F)>,
    },
}

impl<F: Real> PrefixTables<F> {
    pub fn from_feature(feat: &SortedFeature<F>) -> Self {
        let n = feat.n();
        let backing = match feat.counts() {
            Some(counts) => {
                let mut cum = Vec::with_capacity(n + 1);
                cum.push((0, 0));
                let (mut t, mut z) = (0u64, 0u64);
                for c in counts {
                    t += c.total();
                    z += c.c0;
                    cum.push((t, z));
                }
                Backing::Counts {
                    cum,
                    grand_total: t,
                }
            }
            None => {
                let mut cum = Vec::with_capacity(n + 1);
                cum.push((F::zero(), F::zero()));
                let (mut m, mut j) = (F::zero(), F::zero());
                for i in 0..n {
                    m = m + feat.p_x(i);
                    j = j + feat.joint0(i);
                    cum.push((m, j));
                }
                Backing::Mass { cum }
            }
        };
        Self { offset: 0, backing }
    }

    /// Number of prefix entries actually stored (n+1 for a full table,
    /// range length + 1 for a shard slice).
    pub fn entries(&self) -> usize {
        match &self.backing {
            Backing::Counts { cum, .. } => cum.len(),
            Backing::Mass { cum } => cum.len(),
        }
    }

    /// First global index covered.
    pub fn first_index(&self) -> usize {
        self.offset
    }

    /// Last global index covered.
    pub fn last_index(&self) -> usize {
        self.offset + self.entries() - 1
    }

    /// Clones the sub-table covering global indices `lo..=hi`. Differences
    /// within the slice are unchanged, so block statistics stay exact.
    pub fn slice(&self, lo: usize, hi: usize) -> Self {
        assert!(self.offset <= lo && lo < hi && hi <= self.last_index());
        let a = lo - self.offset;
        let b = hi - self.offset;
        let backing = match &self.backing {
            Backing::Counts { cum, grand_total } => Backing::Counts {
                cum: cum[a..=b].to_vec(),
                grand_total: *grand_total,
            },
            Backing::Mass { cum } => Backing::Mass {
                cum: cum[a..=b].to_vec(),
            },
        };
        Self { offset: lo, backing }
    }

    /// Cumulative mass P(X ≤ x_i) at global index i.
    pub fn cum_mass(&self, i: usize) -> F {
        let i = i - self.offset;
        match &self.backing {
            Backing::Counts { cum, grand_total } => {
                F::from_count(cum[i].0) / F::from_count(*grand_total)
            }
            Backing::Mass { cum } => cum[i].0,
        }
    }

    /// Cumulative joint P(X ≤ x_i, C=0) at global index i.
    pub fn cum_joint(&self, i: usize) -> F {
        let i = i - self.offset;
        match &self.backing {
            Backing::Counts { cum, grand_total } => {
                F::from_count(cum[i].1) / F::from_count(*grand_total)
            }
            Backing::Mass { cum } => cum[i].1,
        }
    }

    /// Hints the cache that entry `i` is about to be read. Batch evaluators
    /// issue these for a whole sample before computing, overlapping the
    /// memory latency that dominates gain queries on multi-million-value
    /// features.
    #[inline]
    pub fn prefetch(&self, i: usize) {
        let i = i - self.offset;
        #[cfg(target_arch = "x86_64")]
        unsafe {
            use std::arch::x86_64::{_mm_prefetch, _MM_HINT_T0};
            match &self.backing {
                Backing::Counts { cum, .. } => {
                    _mm_prefetch(cum.as_ptr().add(i) as *const i8, _MM_HINT_T0)
                }
                Backing::Mass { cum } => {
                    _mm_prefetch(cum.as_ptr().add(i) as *const i8, _MM_HINT_T0)
                }
            }
        }
        #[cfg(not(target_arch = "x86_64"))]
        let _ = i;
    }

    /// Mass and conditional mean of the value block spanned by global
    /// boundaries `a < b` (values a+1..=b in 1-based terms).
    #[inline]
    pub fn block(&self, a: usize, b: usize) -> (F, F) {
        debug_assert!(a < b, "empty block {a}..{b}");
        debug_assert!(
            a >= self.offset && b <= self.last_index(),
            "block {a}..{b} outside local range {}..{}",
            self.offset,
            self.last_index()
        );
        let (a, b) = (a - self.offset, b - self.offset);
        match &self.backing {
            Backing::Counts { cum, grand_total } => {
                let (ta, za) = cum[a];
                let (tb, zb) = cum[b];
                let dt = tb - ta;
                debug_assert!(dt > 0);
                (
                    F::from_count(dt) / F::from_count(*grand_total),
                    F::from_count(zb - za) / F::from_count(dt),
                )
            }
            Backing::Mass { cum } => {
                let (ma, ja) = cum[a];
                let (mb, jb) = cum[b];
                let dm = mb - ma;
                debug_assert!(dm > F::zero());
                // Cumulative rounding can nudge the ratio past 1.
                (dm, ((jb - ja) / dm).min(F::one()).max(F::zero()))
            }
        }
    }
}

/// Gain of splitting the block (lo, hi] at s, per the closed form. Shared by
/// the single-machine index and the shard-local states.
#[inline]
pub(crate) fn gain_between<F: Real>(
    tables: &PrefixTables<F>,
    ctx: &MiContext<F>,
    lo: usize,
    s: usize,
    hi: usize,
) -> F {
    let (p, alpha) = tables.block(lo, s);
    let (q, beta) = tables.block(s, hi);
    if alpha == beta {
        return F::zero();
    }
    let merged = (p * alpha + q * beta) / (p + q);
    let g = p * ctx.f_raw(alpha) + q * ctx.f_raw(beta) - (p + q) * ctx.f_raw(merged);
    g.max(F::zero())
}

/// The query structure: prefix tables plus the ordered split set S
/// (initialized to {0, n}) and a running objective value.
#[derive(Debug, Clone)]
pub struct BoundaryIndex<F> {
    n: usize,
    tables: PrefixTables<F>,
    set: BTreeSet<usize>,
    objective: F,
    ctx: MiContext<F>,
}

impl<F: Real> BoundaryIndex<F> {
    /// One O(n) pass over the feature; S starts as {0, n} with objective 0.
    pub fn build(feat: &SortedFeature<F>, base: LogBase) -> Result<Self> {
        let n = feat.n();
        if n == 0 {
            return Err(Error::EmptyVocabulary);
        }
        let mut set = BTreeSet::new();
        set.insert(0);
        set.insert(n);
        Ok(Self {
            n,
            tables: PrefixTables::from_feature(feat),
            set,
            objective: F::zero(),
            ctx: feat.mi_context(base),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ctx(&self) -> &MiContext<F> {
        &self.ctx
    }

    pub fn tables(&self) -> &PrefixTables<F> {
        &self.tables
    }

    /// Running objective: the sum of all insertion gains so far.
    pub fn objective(&self) -> F {
        self.objective
    }

    /// Number of interior splits selected so far.
    pub fn num_interior(&self) -> usize {
        self.set.len() - 2
    }

    pub fn contains(&self, s: usize) -> bool {
        self.set.contains(&s)
    }

    /// The interior splits as a boundary set.
    pub fn interior(&self) -> BoundarySet {
        BoundarySet::new(
            self.set
                .iter()
                .copied()
                .filter(|&s| s != 0 && s != self.n)
                .collect(),
        )
        .expect("interior splits are valid")
    }

    /// Iterator over all boundaries including the sentinels 0 and n.
    pub fn boundaries(&self) -> impl Iterator<Item = usize> + '_ {
        self.set.iter().copied()
    }

    /// Predecessor and successor of s in S ∪ {0, n}, excluding s itself.
    pub fn neighbors(&self, s: usize) -> (usize, usize) {
        debug_assert!(s >= 1 && s <= self.n - 1, "neighbors of out-of-range {s}");
        let before = self.set.range(..s).next_back().copied().unwrap_or(0);
        let after = self
            .set
            .range((Excluded(s), Unbounded))
            .next()
            .copied()
            .unwrap_or(self.n);
        (before, after)
    }

    /// Marginal gain of adding s to the current solution; read-only. Two tree
    /// descents: the successor lookup doubles as the duplicate check.
    pub fn query_gain(&self, s: usize) -> Result<F> {
        if s < 1 || s > self.n.saturating_sub(1) {
            return Err(Error::BoundaryOutOfRange {
                boundary: s,
                max: self.n.saturating_sub(1),
            });
        }
        let hi = *self.set.range(s..).next().expect("sentinel n present");
        if hi == s {
            return Err(Error::DuplicateBoundary(s));
        }
        let lo = self.set.range(..s).next_back().copied().unwrap_or(0);
        Ok(gain_between(&self.tables, &self.ctx, lo, s, hi))
    }

    /// Gain when the enclosing block (lo, hi) is already known (candidate
    /// scans track it incrementally and skip the tree lookup).
    #[inline]
    pub(crate) fn gain_with_neighbors(&self, lo: usize, s: usize, hi: usize) -> F {
        gain_between(&self.tables, &self.ctx, lo, s, hi)
    }

    /// Inserts s, returning the gain credited at insertion time.
    pub fn insert(&mut self, s: usize) -> Result<F> {
        let gain = self.query_gain(s)?;
        self.set.insert(s);
        self.objective = self.objective + gain;
        Ok(gain)
    }
}

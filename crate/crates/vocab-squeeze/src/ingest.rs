//! Ingestion: aggregated count parsing, maximum-likelihood probability
//! estimates, and the conditional-probability sort that every downstream
//! algorithm relies on.
//!
//! Input is line-oriented TSV: `feature<TAB>value<TAB>count_c0<TAB>count_c1`,
//! UTF-8, LF or CRLF, `#`-prefixed comment lines allowed. Duplicate
//! (feature, value) lines have their counts summed.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Occurrence counts of one feature value under each label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    /// Occurrences with label 0.
    pub c0: u64,
    /// Occurrences with label 1.
    pub c1: u64,
}

impl LabelCounts {
    pub fn new(c0: u64, c1: u64) -> Self {
        Self { c0, c1 }
    }

    pub fn total(&self) -> u64 {
        self.c0 + self.c1
    }

    fn merge(&mut self, other: LabelCounts) {
        self.c0 += other.c0;
        self.c1 += other.c1;
    }
}

/// One parsed input record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledCountRecord {
    pub feature: String,
    pub value: String,
    pub counts: LabelCounts,
}

/// Aggregated counts grouped by feature, with deterministic (lexicographic)
/// iteration order for features and values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FeatureTable {
    features: BTreeMap<String, BTreeMap<String, LabelCounts>>,
}

impl FeatureTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a record, summing counts with any existing (feature, value) entry.
    /// Zero-total records are dropped.
    pub fn insert(&mut self, feature: &str, value: &str, counts: LabelCounts) {
        if counts.total() == 0 {
            return;
        }
        self.features
            .entry(feature.to_owned())
            .or_default()
            .entry(value.to_owned())
            .or_default()
            .merge(counts);
    }

    pub fn from_records<I: IntoIterator<Item = LabeledCountRecord>>(records: I) -> Self {
        let mut table = Self::new();
        for r in records {
            table.insert(&r.feature, &r.value, r.counts);
        }
        table
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.keys().map(String::as_str)
    }

    pub fn feature(&self, name: &str) -> Option<&BTreeMap<String, LabelCounts>> {
        self.features.get(name)
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Grand total over all features and values.
    pub fn total_count(&self) -> u64 {
        self.features
            .values()
            .flat_map(|vals| vals.values())
            .map(LabelCounts::total)
            .sum()
    }

    /// Writes the table back out in the input TSV format.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> Result<()> {
        for (feature, values) in &self.features {
            for (value, c) in values {
                writeln!(w, "{feature}\t{value}\t{}\t{}", c.c0, c.c1)?;
            }
        }
        Ok(())
    }
}

/// Parses aggregated count data from line-oriented TSV.
pub fn parse_counts<R: BufRead>(reader: R) -> Result<FeatureTable> {
    let mut table = FeatureTable::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let (feature, value, c0, c1) = match (
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
            fields.next(),
        ) {
            (Some(f), Some(v), Some(c0), Some(c1), None) => (f, v, c0, c1),
            _ => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected 4 tab-separated fields, got `{line}`"),
                })
            }
        };
        let c0 = parse_count(c0, line_no)?;
        let c1 = parse_count(c1, line_no)?;
        table.insert(feature, value, LabelCounts::new(c0, c1));
    }
    Ok(table)
}

fn parse_count(field: &str, line: usize) -> Result<u64> {
    match field.parse::<i128>() {
        Ok(v) if v < 0 => Err(Error::NegativeCount { line }),
        Ok(v) => u64::try_from(v).map_err(|_| Error::Parse {
            line,
            msg: format!("count `{field}` out of range"),
        }),
        Err(_) => Err(Error::Parse {
            line,
            msg: format!("invalid count `{field}`"),
        }),
    }
}

/// One feature's values with estimated P(X = x_i) and P(C=0 | X = x_i),
/// sorted ascending by the conditional. This index space ({0..n-1} in sorted
/// order) is the domain of every boundary set and compression map.
#[derive(Debug, Clone)]
pub struct SortedFeature<F> {
    name: String,
    /// Original value ids in sorted order; absent for synthetic features
    /// constructed directly from probabilities or bare counts.
    ids: Option<Vec<String>>,
    p_x: Vec<F>,
    cond: Vec<F>,
    counts: Option<Vec<LabelCounts>>,
    total_count: Option<u64>,
    p0: F,
}

impl<F: Real> SortedFeature<F> {
    /// Builds from (value id, counts) pairs. The sort key is the conditional
    /// P(C=0|x) compared exactly via cross-multiplication, ties broken by
    /// ascending value id.
    pub fn from_counts(name: &str, mut pairs: Vec<(String, LabelCounts)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyFeature(name.to_owned()));
        }
        if pairs.iter().any(|(_, c)| c.total() == 0) {
            return Err(Error::NonPositiveMass(0.0));
        }
        pairs.sort_by(|(id_a, a), (id_b, b)| {
            cmp_cond(a, b).then_with(|| id_a.cmp(id_b))
        });
        let total: u64 = pairs.iter().map(|(_, c)| c.total()).sum();
        let total_f = F::from_count(total);
        let mut ids = Vec::with_capacity(pairs.len());
        let mut counts = Vec::with_capacity(pairs.len());
        let mut p_x = Vec::with_capacity(pairs.len());
        let mut cond = Vec::with_capacity(pairs.len());
        let mut c0_total = 0u64;
        for (id, c) in pairs {
            c0_total += c.c0;
            p_x.push(F::from_count(c.total()) / total_f);
            cond.push(F::from_count(c.c0) / F::from_count(c.total()));
            ids.push(id);
            counts.push(c);
        }
        Ok(Self {
            name: name.to_owned(),
            ids: Some(ids),
            p_x,
            cond,
            counts: Some(counts),
            total_count: Some(total),
            p0: F::from_count(c0_total) / total_f,
        })
    }

    /// Like [`from_counts`](Self::from_counts) but without value ids; ties in
    /// the conditional keep input order. Used for synthetic instances where
    /// materializing ids would only cost memory.
    pub fn from_raw_counts(name: &str, counts: Vec<LabelCounts>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyFeature(name.to_owned()));
        }
        if counts.iter().any(|c| c.total() == 0) {
            return Err(Error::NonPositiveMass(0.0));
        }
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| cmp_cond(&counts[a], &counts[b]));
        let counts: Vec<LabelCounts> = order.into_iter().map(|i| counts[i]).collect();
        let total: u64 = counts.iter().map(LabelCounts::total).sum();
        let total_f = F::from_count(total);
        let c0_total: u64 = counts.iter().map(|c| c.c0).sum();
        let p_x = counts
            .iter()
            .map(|c| F::from_count(c.total()) / total_f)
            .collect();
        let cond = counts
            .iter()
            .map(|c| F::from_count(c.c0) / F::from_count(c.total()))
            .collect();
        Ok(Self {
            name: name.to_owned(),
            ids: None,
            p_x,
            cond,
            counts: Some(counts),
            total_count: Some(total),
            p0: F::from_count(c0_total) / total_f,
        })
    }

    /// Builds from (mass, conditional) pairs that already describe a
    /// distribution. Masses must be positive and sum to 1 within 1e-9; they
    /// are renormalized exactly. Ties in the conditional keep input order.
    pub fn from_probabilities(name: &str, pairs: Vec<(F, F)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptyFeature(name.to_owned()));
        }
        let mut sum = F::zero();
        for &(p, c) in &pairs {
            if !(p > F::zero()) || !p.is_finite() {
                return Err(Error::NonPositiveMass(p.as_f64()));
            }
            if !(F::zero()..=F::one()).contains(&c) {
                return Err(Error::InvalidProbability(c.as_f64()));
            }
            sum = sum + p;
        }
        if (sum - F::one()).abs().as_f64() > 1e-9 {
            return Err(Error::UnnormalizedMass(sum.as_f64()));
        }
        let mut pairs = pairs;
        pairs.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite conditional"));
        let mut p0 = F::zero();
        let mut p_x = Vec::with_capacity(pairs.len());
        let mut cond = Vec::with_capacity(pairs.len());
        for (p, c) in pairs {
            let p = p / sum;
            p0 = p0 + p * c;
            p_x.push(p);
            cond.push(c);
        }
        Ok(Self {
            name: name.to_owned(),
            ids: None,
            p_x,
            cond,
            counts: None,
            total_count: None,
            p0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Vocabulary size n.
    pub fn n(&self) -> usize {
        self.p_x.len()
    }

    /// P(X = x_i) in sorted order.
    pub fn p_x(&self, i: usize) -> F {
        self.p_x[i]
    }

    /// P(C=0 | X = x_i) in sorted order (non-decreasing in i).
    pub fn cond(&self, i: usize) -> F {
        self.cond[i]
    }

    /// Joint mass P(X = x_i, C = 0).
    pub fn joint0(&self, i: usize) -> F {
        match (&self.counts, self.total_count) {
            (Some(counts), Some(total)) => F::from_count(counts[i].c0) / F::from_count(total),
            _ => self.p_x[i] * self.cond[i],
        }
    }

    /// P(C=0).
    pub fn p0(&self) -> F {
        self.p0
    }

    /// Original value id at sorted position i, when known.
    pub fn id(&self, i: usize) -> Option<&str> {
        self.ids.as_ref().map(|ids| ids[i].as_str())
    }

    pub fn counts(&self) -> Option<&[LabelCounts]> {
        self.counts.as_deref()
    }

    pub fn total_count(&self) -> Option<u64> {
        self.total_count
    }

    pub fn mi_context(&self, base: crate::mi::LogBase) -> crate::mi::MiContext<F> {
        crate::mi::MiContext::new_unchecked(self.p0, base)
    }
}

/// Exact comparison of c0_a/tot_a vs c0_b/tot_b without division.
fn cmp_cond(a: &LabelCounts, b: &LabelCounts) -> std::cmp::Ordering {
    let lhs = a.c0 as u128 * b.total() as u128;
    let rhs = b.c0 as u128 * a.total() as u128;
    lhs.cmp(&rhs)
}

/// Maximum-likelihood estimates for one feature: p_x from relative frequency,
/// conditionals from label-0 fraction, sorted ascending by conditional.
/// Values appearing in fewer than `min_count` instances are dropped first;
/// the surviving total is the normalizer.
pub fn estimate_distribution<F: Real>(
    table: &FeatureTable,
    feature: &str,
    min_count: u64,
) -> Result<SortedFeature<F>> {
    let values = table
        .feature(feature)
        .ok_or_else(|| Error::UnknownFeature(feature.to_owned()))?;
    let min_count = min_count.max(1);
    let surviving: Vec<(String, LabelCounts)> = values
        .iter()
        .filter(|(_, c)| c.total() >= min_count)
        .map(|(id, c)| (id.clone(), *c))
        .collect();
    if surviving.is_empty() {
        return Err(Error::EmptyFeature(feature.to_owned()));
    }
    SortedFeature::from_counts(feature, surviving)
}

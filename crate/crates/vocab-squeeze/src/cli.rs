//! The command-line pipeline behind the `vocab-squeeze` binary: compress a
//! count table into a mapping file plus JSON report, sweep methods × budgets
//! into a comparison CSV, and generate synthetic benchmark tables.
//!
//! Everything here is deterministic given the flags: per-feature randomness is
//! derived from the seed by feature index, features are processed in name
//! order, and outputs are written in a fixed order — repeated runs produce
//! byte-identical files regardless of thread count.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::allocator::{
    self, allocate_global_submodular, allocate_mi_proportional, allocate_uniform, FeatureReport,
    RankingMode,
};
use crate::baselines::{bucketing, divisive_cluster, frequency_filter};
use crate::boundary_index::BoundaryIndex;
use crate::distributed::{plan_shards_with, run_threshold_rounds};
use crate::error::{Error, Result};
use crate::greedy::{stochastic_greedy, GreedyConfig};
use crate::ingest::{estimate_distribution, parse_counts, FeatureTable, SortedFeature};
use crate::mi::{mutual_information, partition_mi, CompressionMap, LogBase};
use crate::synth::{generate_table, SynthConfig};

/// Iteration cap for the divisive baseline; it almost always fixes within a
/// handful of passes.
const DIVISIVE_MAX_ITERS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Submodular,
    SubmodularDistributed,
    Bucketing,
    Frequency,
    Divisive,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Submodular => "submodular",
            Method::SubmodularDistributed => "submodular-distributed",
            Method::Bucketing => "bucketing",
            Method::Frequency => "frequency",
            Method::Divisive => "divisive",
        }
    }

    /// The allocation a method uses when none is requested.
    pub fn default_allocation(self) -> Allocation {
        match self {
            Method::Submodular | Method::Frequency => Allocation::Global,
            _ => Allocation::Uniform,
        }
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "submodular" => Ok(Method::Submodular),
            "submodular-distributed" => Ok(Method::SubmodularDistributed),
            "bucketing" => Ok(Method::Bucketing),
            "frequency" => Ok(Method::Frequency),
            "divisive" => Ok(Method::Divisive),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Allocation {
    Global,
    Uniform,
    Mi,
}

impl Allocation {
    pub fn as_str(self) -> &'static str {
        match self {
            Allocation::Global => "global",
            Allocation::Uniform => "uniform",
            Allocation::Mi => "mi",
        }
    }
}

impl FromStr for Allocation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(Allocation::Global),
            "uniform" => Ok(Allocation::Uniform),
            "mi" => Ok(Allocation::Mi),
            other => Err(Error::InvalidConfig(format!("unknown allocation `{other}`"))),
        }
    }
}

pub fn parse_log_base(s: &str) -> Result<LogBase> {
    match s {
        "2" => Ok(LogBase::Bits),
        "e" => Ok(LogBase::Nats),
        other => Err(Error::InvalidConfig(format!(
            "log base must be `2` or `e`, got `{other}`"
        ))),
    }
}

pub fn log_base_str(base: LogBase) -> &'static str {
    match base {
        LogBase::Bits => "2",
        LogBase::Nats => "e",
    }
}

/// `method[:allocation]`, e.g. `divisive:mi`; the allocation defaults per
/// method.
pub fn parse_method_spec(s: &str) -> Result<(Method, Allocation)> {
    match s.split_once(':') {
        Some((m, a)) => {
            let method = Method::from_str(m)?;
            let allocation = Allocation::from_str(a)?;
            Ok((method, allocation))
        }
        None => {
            let method = Method::from_str(s)?;
            Ok((method, method.default_allocation()))
        }
    }
}

/// Bucketing and divisive have no global score to merge, and the sharded
/// optimizer composes per-feature runs that need budgets up front.
fn validate_combo(method: Method, allocation: Allocation) -> Result<()> {
    let needs_budgets = matches!(
        method,
        Method::Bucketing | Method::Divisive | Method::SubmodularDistributed
    );
    if needs_budgets && allocation == Allocation::Global {
        return Err(Error::InvalidConfig(format!(
            "method `{}` requires `uniform` or `mi` allocation",
            method.as_str()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub report: Option<PathBuf>,
    pub method: Method,
    pub budget: usize,
    pub allocation: Allocation,
    pub epsilon: f64,
    pub seed: u64,
    pub log_base: LogBase,
    pub min_count: u64,
    pub shards: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct ReportParams {
    pub budget: usize,
    pub allocation: String,
    pub epsilon: f64,
    pub seed: u64,
    pub log_base: String,
    pub min_count: u64,
    pub shards: Option<usize>,
}

/// The JSON report emitted next to a mapping file.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub method: String,
    pub params: ReportParams,
    pub per_feature: Vec<FeatureReport>,
    pub avg_mi_loss: f64,
}

/// Parsed input: live features (estimable after min-count filtering) plus the
/// names of features whose every value fell below the threshold.
pub struct Pipeline {
    pub table: FeatureTable,
    pub feats: Vec<SortedFeature<f64>>,
    pub ghosts: Vec<String>,
}

pub fn build_pipeline(input: &PathBuf, min_count: u64) -> Result<Pipeline> {
    let table = parse_counts(BufReader::new(File::open(input)?))?;
    if table.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "no records in {}",
            input.display()
        )));
    }
    let names: Vec<String> = table.feature_names().map(str::to_owned).collect();
    let mut feats = Vec::new();
    let mut ghosts = Vec::new();
    for name in names {
        match estimate_distribution::<f64>(&table, &name, min_count) {
            Ok(f) => feats.push(f),
            Err(Error::EmptyFeature(_)) => {
                log::warn!("feature `{name}` lost every value to the min-count filter");
                ghosts.push(name);
            }
            Err(e) => return Err(e),
        }
    }
    if feats.is_empty() {
        return Err(Error::InvalidConfig(
            "every feature was filtered away; nothing to compress".into(),
        ));
    }
    Ok(Pipeline {
        table,
        feats,
        ghosts,
    })
}

fn per_feature_budgets(
    feats: &[SortedFeature<f64>],
    allocation: Allocation,
    budget: usize,
    base: LogBase,
) -> Result<Vec<usize>> {
    match allocation {
        Allocation::Uniform => allocate_uniform(feats, budget),
        Allocation::Mi => allocate_mi_proportional(feats, budget, base),
        Allocation::Global => unreachable!("global allocation never asks for fixed budgets"),
    }
}

/// Runs one (method, allocation, budget) cell over the live features,
/// producing one dense compression map per feature.
pub fn run_method(
    feats: &[SortedFeature<f64>],
    method: Method,
    allocation: Allocation,
    budget: usize,
    epsilon: f64,
    seed: u64,
    base: LogBase,
    shards: Option<usize>,
) -> Result<Vec<CompressionMap>> {
    validate_combo(method, allocation)?;
    match method {
        Method::Submodular => {
            if !(epsilon > 0.0 && epsilon <= 0.5) {
                return Err(Error::InvalidConfig(format!(
                    "epsilon must lie in (0, 0.5] for the submodular method, got {epsilon}"
                )));
            }
            if allocation == Allocation::Global {
                let sel = allocate_global_submodular(
                    feats,
                    budget,
                    RankingMode::Stochastic { epsilon },
                    seed,
                    base,
                )?;
                feats
                    .iter()
                    .zip(&sel.boundary_sets)
                    .map(|(f, s)| CompressionMap::from_boundaries(s, f.n()))
                    .collect()
            } else {
                let budgets = per_feature_budgets(feats, allocation, budget, base)?;
                feats
                    .par_iter()
                    .zip(budgets)
                    .enumerate()
                    .map(|(i, (feat, m))| {
                        let mut index = BoundaryIndex::build(feat, base)?;
                        let cfg =
                            GreedyConfig::stochastic(m, epsilon, allocator::derive_seed(seed, i));
                        let res = stochastic_greedy(&mut index, &cfg)?;
                        CompressionMap::from_boundaries(&res.boundaries, feat.n())
                    })
                    .collect()
            }
        }
        Method::SubmodularDistributed => {
            if !(epsilon > 0.0 && epsilon < 1.0) {
                return Err(Error::InvalidConfig(format!(
                    "epsilon must lie in (0, 1) for the distributed method, got {epsilon}"
                )));
            }
            let budgets = per_feature_budgets(feats, allocation, budget, base)?;
            feats
                .par_iter()
                .zip(budgets)
                .map(|(feat, m)| {
                    if m <= 1 || feat.n() < 2 {
                        return Ok(CompressionMap::single(feat.n()));
                    }
                    let plan = plan_shards_with(feat, m - 1, epsilon, shards)?;
                    let res = run_threshold_rounds(&plan, feat, base)?;
                    CompressionMap::from_boundaries(&res.boundaries, feat.n())
                })
                .collect()
        }
        Method::Bucketing => {
            let budgets = per_feature_budgets(feats, allocation, budget, base)?;
            feats
                .par_iter()
                .zip(budgets)
                .map(|(feat, m)| Ok(bucketing(feat, m, base)?.map.densified().0))
                .collect()
        }
        Method::Frequency => {
            if allocation == Allocation::Global {
                Ok(frequency_filter(feats, budget)?.maps)
            } else {
                let budgets = per_feature_budgets(feats, allocation, budget, base)?;
                feats
                    .par_iter()
                    .zip(budgets)
                    .map(|(feat, m)| {
                        Ok(frequency_filter(std::slice::from_ref(feat), m)?
                            .maps
                            .remove(0))
                    })
                    .collect()
            }
        }
        Method::Divisive => {
            let budgets = per_feature_budgets(feats, allocation, budget, base)?;
            feats
                .par_iter()
                .zip(budgets)
                .enumerate()
                .map(|(i, (feat, m))| {
                    let map = divisive_cluster(
                        feat,
                        m,
                        DIVISIVE_MAX_ITERS,
                        allocator::derive_seed(seed, i),
                        base,
                    )?;
                    Ok(map.densified().0)
                })
                .collect()
        }
    }
}

fn cell_report(
    feats: &[SortedFeature<f64>],
    ghosts: &[String],
    maps: &[CompressionMap],
    base: LogBase,
) -> Result<(Vec<FeatureReport>, f64)> {
    let mut per_feature = Vec::with_capacity(feats.len() + ghosts.len());
    let mut before = Vec::with_capacity(feats.len());
    let mut after = Vec::with_capacity(feats.len());
    for (feat, map) in feats.iter().zip(maps) {
        let x = mutual_information(feat, base);
        let z = partition_mi(feat, map, base)?;
        before.push(x);
        after.push(z);
        per_feature.push(FeatureReport {
            name: feat.name().to_owned(),
            n: feat.n(),
            m: map.num_clusters(),
            mi_before_bits: base.to_bits(x),
            mi_after_bits: base.to_bits(z),
        });
    }
    for name in ghosts {
        per_feature.push(FeatureReport {
            name: name.clone(),
            n: 0,
            m: 1,
            mi_before_bits: 0.0,
            mi_after_bits: 0.0,
        });
    }
    per_feature.sort_by(|a, b| a.name.cmp(&b.name));
    let loss = match allocator::average_mi_loss(&before, &after) {
        Ok(v) => v,
        Err(_) => 0.0, // nothing to lose
    };
    Ok((per_feature, loss))
}

/// Compresses a count table into a mapping TSV (`feature<TAB>value<TAB>
/// cluster_id`, covering every input value) plus an optional JSON report.
pub fn cmd_compress(cfg: &RunConfig) -> Result<()> {
    let start = Instant::now();
    validate_combo(cfg.method, cfg.allocation)?;
    let pipeline = build_pipeline(&cfg.input, cfg.min_count)?;
    let maps = run_method(
        &pipeline.feats,
        cfg.method,
        cfg.allocation,
        cfg.budget,
        cfg.epsilon,
        cfg.seed,
        cfg.log_base,
        cfg.shards,
    )?;

    write_mapping(&cfg.output, &pipeline, &maps)?;

    if let Some(report_path) = &cfg.report {
        let (per_feature, avg_mi_loss) =
            cell_report(&pipeline.feats, &pipeline.ghosts, &maps, cfg.log_base)?;
        let report = RunReport {
            method: cfg.method.as_str().to_owned(),
            params: ReportParams {
                budget: cfg.budget,
                allocation: cfg.allocation.as_str().to_owned(),
                epsilon: cfg.epsilon,
                seed: cfg.seed,
                log_base: log_base_str(cfg.log_base).to_owned(),
                min_count: cfg.min_count,
                shards: cfg.shards,
            },
            per_feature,
            avg_mi_loss,
        };
        let mut out = BufWriter::new(File::create(report_path)?);
        serde_json::to_writer_pretty(&mut out, &report)?;
        out.write_all(b"\n")?;
    }
    log::info!(
        "compressed {} in {} ms",
        cfg.input.display(),
        start.elapsed().as_millis()
    );
    Ok(())
}

/// Mapping writer: features in name order, values in id order; cluster ids
/// are per-feature dense integers from 0 with any OOV cluster as the highest
/// id. Values dropped by the min-count filter join the method's OOV cluster
/// when it has one, otherwise a fresh highest cluster id.
fn write_mapping(path: &PathBuf, pipeline: &Pipeline, maps: &[CompressionMap]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let live: BTreeMap<&str, usize> = pipeline
        .feats
        .iter()
        .enumerate()
        .map(|(i, f)| (f.name(), i))
        .collect();
    for feature in pipeline.table.feature_names() {
        let values = pipeline.table.feature(feature).expect("iterating names");
        match live.get(feature) {
            None => {
                // Entirely filtered: one OOV cluster.
                for value in values.keys() {
                    writeln!(out, "{feature}\t{value}\t0")?;
                }
            }
            Some(&fi) => {
                let feat = &pipeline.feats[fi];
                let map = &maps[fi];
                let position: BTreeMap<&str, usize> = (0..feat.n())
                    .map(|i| (feat.id(i).expect("table-backed features have ids"), i))
                    .collect();
                let filtered_cluster = map
                    .oov_cluster()
                    .unwrap_or_else(|| map.num_clusters());
                for value in values.keys() {
                    let cluster = match position.get(value.as_str()) {
                        Some(&i) => map.cluster_of(i),
                        None => filtered_cluster,
                    };
                    writeln!(out, "{feature}\t{value}\t{cluster}")?;
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct CompareConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub cells: Vec<(Method, Allocation)>,
    pub budgets: Vec<usize>,
    pub epsilon: f64,
    pub seed: u64,
    pub log_base: LogBase,
    pub min_count: u64,
    pub shards: Option<usize>,
}

/// Runs every (method, allocation) × budget cell and writes one CSV row per
/// cell. Failed cells are marked in the status column and the sweep keeps
/// going.
pub fn cmd_compare(cfg: &CompareConfig) -> Result<()> {
    if cfg.cells.is_empty() {
        return Err(Error::InvalidConfig("no methods requested".into()));
    }
    if cfg.budgets.is_empty() {
        return Err(Error::InvalidConfig("no budgets requested".into()));
    }
    let pipeline = build_pipeline(&cfg.input, cfg.min_count)?;
    let mut out = BufWriter::new(File::create(&cfg.output)?);
    writeln!(out, "method,allocation,budget,avg_mi_loss,status")?;
    for &(method, allocation) in &cfg.cells {
        for &budget in &cfg.budgets {
            let cell = run_method(
                &pipeline.feats,
                method,
                allocation,
                budget,
                cfg.epsilon,
                cfg.seed,
                cfg.log_base,
                cfg.shards,
            )
            .and_then(|maps| {
                cell_report(&pipeline.feats, &pipeline.ghosts, &maps, cfg.log_base)
            });
            match cell {
                Ok((_, loss)) => writeln!(
                    out,
                    "{},{},{budget},{loss},ok",
                    method.as_str(),
                    allocation.as_str()
                )?,
                Err(e) => {
                    log::warn!(
                        "cell {}:{} budget {budget} failed: {e}",
                        method.as_str(),
                        allocation.as_str()
                    );
                    writeln!(
                        out,
                        "{},{},{budget},,failed: {}",
                        method.as_str(),
                        allocation.as_str(),
                        csv_safe(&e.to_string())
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn csv_safe(msg: &str) -> String {
    msg.replace([',', '\n', '\r'], ";")
}

#[derive(Debug, Clone)]
pub struct GenConfig {
    pub values: usize,
    pub features: usize,
    pub zipf_exponent: f64,
    pub seed: u64,
    pub samples: Option<u64>,
    pub output: PathBuf,
}

/// Writes a synthetic count table in the input TSV format.
pub fn cmd_gen_synthetic(cfg: &GenConfig) -> Result<()> {
    let mut synth = SynthConfig::new(cfg.values, cfg.features);
    synth.zipf_exponent = cfg.zipf_exponent;
    synth.seed = cfg.seed;
    if let Some(s) = cfg.samples {
        synth.samples_per_feature = s;
    }
    let table = generate_table(&synth)?;
    let mut out = BufWriter::new(File::create(&cfg.output)?);
    table.write_tsv(&mut out)?;
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand};

use vocab_squeeze::cli::{
    cmd_compare, cmd_compress, cmd_gen_synthetic, parse_log_base, parse_method_spec, Allocation,
    CompareConfig, GenConfig, Method, RunConfig,
};

/// Vocabulary compression that preserves mutual information with a binary
/// label. Input is aggregated-count TSV: feature<TAB>value<TAB>count_c0<TAB>
/// count_c1.
#[derive(Parser)]
#[command(name = "vocab-squeeze", version)]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compress a count table into a value→cluster mapping (plus JSON report).
    Compress {
        #[arg(long)]
        input: PathBuf,
        /// Mapping TSV: feature<TAB>value<TAB>cluster_id.
        #[arg(long)]
        output: PathBuf,
        /// JSON report path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// submodular | submodular-distributed | bucketing | frequency | divisive.
        #[arg(long)]
        method: String,
        /// Total vocabulary budget across all features.
        #[arg(long)]
        budget: usize,
        /// global | uniform | mi (defaults per method).
        #[arg(long)]
        allocation: Option<String>,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// 2 (bits) or e (nats).
        #[arg(long = "log-base", default_value = "2")]
        log_base: String,
        /// Drop values appearing in fewer instances than this.
        #[arg(long = "min-count", default_value_t = 1)]
        min_count: u64,
        /// Shard-count override for submodular-distributed (default ⌈εk⌉).
        #[arg(long)]
        shards: Option<usize>,
    },
    /// Sweep methods × budgets and emit an avg-MI-loss CSV.
    Compare {
        #[arg(long)]
        input: PathBuf,
        /// CSV output path.
        #[arg(long)]
        output: PathBuf,
        /// Comma list of method[:allocation] cells, e.g.
        /// submodular,divisive:mi,divisive:uniform.
        #[arg(long)]
        methods: String,
        /// Comma list of budgets.
        #[arg(long)]
        budgets: String,
        #[arg(long, default_value_t = 0.05)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "log-base", default_value = "2")]
        log_base: String,
        #[arg(long = "min-count", default_value_t = 1)]
        min_count: u64,
        #[arg(long)]
        shards: Option<usize>,
    },
    /// Generate a synthetic Zipfian count table.
    GenSynthetic {
        /// Vocabulary size per feature.
        #[arg(long)]
        values: usize,
        #[arg(long, default_value_t = 1)]
        features: usize,
        #[arg(long = "zipf-exponent", default_value_t = 1.05)]
        zipf_exponent: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Target total count per feature (default 64 × values).
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long)]
        output: PathBuf,
    },
}

fn run(args: Args) -> vocab_squeeze::Result<()> {
    match args.cmd {
        Cmd::Compress {
            input,
            output,
            report,
            method,
            budget,
            allocation,
            epsilon,
            seed,
            log_base,
            min_count,
            shards,
        } => {
            let method = Method::from_str(&method)?;
            let allocation = match allocation {
                Some(a) => Allocation::from_str(&a)?,
                None => method.default_allocation(),
            };
            cmd_compress(&RunConfig {
                input,
                output,
                report,
                method,
                budget,
                allocation,
                epsilon,
                seed,
                log_base: parse_log_base(&log_base)?,
                min_count,
                shards,
            })
        }
        Cmd::Compare {
            input,
            output,
            methods,
            budgets,
            epsilon,
            seed,
            log_base,
            min_count,
            shards,
        } => {
            let cells = methods
                .split(',')
                .filter(|s| !s.is_empty())
                .map(parse_method_spec)
                .collect::<vocab_squeeze::Result<Vec<_>>>()?;
            let budgets = budgets
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.trim().parse::<usize>().map_err(|_| {
                        vocab_squeeze::Error::InvalidConfig(format!("invalid budget `{s}`"))
                    })
                })
                .collect::<vocab_squeeze::Result<Vec<_>>>()?;
            cmd_compare(&CompareConfig {
                input,
                output,
                cells,
                budgets,
                epsilon,
                seed,
                log_base: parse_log_base(&log_base)?,
                min_count,
                shards,
            })
        }
        Cmd::GenSynthetic {
            values,
            features,
            zipf_exponent,
            seed,
            samples,
            output,
        } => cmd_gen_synthetic(&GenConfig {
            values,
            features,
            zipf_exponent,
            seed,
            samples,
            output,
        }),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Ok(threads) = std::env::var("VOCAB_SQUEEZE_THREADS") {
        match threads.parse::<usize>() {
            Ok(t) if t >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
            }
            _ => log::warn!("ignoring invalid VOCAB_SQUEEZE_THREADS={threads}"),
        }
    }
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

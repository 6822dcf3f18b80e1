//! Compression of large categorical-feature vocabularies that approximately
//! maximizes the mutual information between the compressed feature and a
//! binary label.
//!
//! The pipeline: [`ingest`] estimates per-value probabilities from aggregated
//! counts and sorts each feature by P(C=0|X=x); in that order the optimal
//! m-cluster compression is a consecutive partition, so optimizing reduces to
//! choosing m−1 split points. The split objective is monotone submodular, the
//! gain of one split has a closed form ([`mi`]), and a prefix-table index
//! answers gain queries in logarithmic time ([`boundary_index`]). On top sit
//! a quasi-linear stochastic greedy ([`greedy`]), a sharded threshold
//! optimizer with O(n / shards) memory per shard ([`distributed`]), heuristic
//! baselines and exact small-instance oracles ([`baselines`]), and the
//! multi-feature budget allocator ([`allocator`]).
//!
//! Numeric code is generic over the scalar ([`scalar::Real`]: f32 or f64);
//! counts stay in exact integer arithmetic so results are reproducible
//! bit-for-bit. The [`cli`] module and the `vocab-squeeze` binary expose the
//! compress / compare / gen-synthetic workflow on TSV count files.

pub mod allocator;
pub mod baselines;
pub mod boundary_index;
pub mod cli;
pub mod distributed;
pub mod error;
pub mod greedy;
pub mod ingest;
pub mod mi;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

/// Concrete f64 aliases for the common case.
pub type SortedFeature64 = ingest::SortedFeature<f64>;
pub type BoundaryIndex64 = boundary_index::BoundaryIndex<f64>;
pub type MiContext64 = mi::MiContext<f64>;
pub type GreedyResult64 = greedy::GreedyResult<f64>;

//! Data construction, retrieval, and evaluation machinery for
//! desk-scale dense-retrieval experiments over heterogeneous
//! (e.g. legal Portuguese) benchmarks.
//!
//! The pipeline, end to end:
//!
//! ```text
//! corpus -> bm25 index -> first-stage run -> hard-negative mining
//!        -> recoverability filter -> training mixture -> toy trainer
//!        -> dense search -> truncated metrics -> leaderboard tables
//! ```
//!
//! Everything is deterministic: canonical tie-breaking is doc_id
//! ascending, shuffles and init draws come from pinned ChaCha8 streams,
//! and every builder records its configuration in a manifest.

pub mod bm25;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod filtering;
pub mod leaderboard;
pub mod metrics;
pub mod mining;
pub mod mixture;
pub mod trainer;

pub use corpus::{Document, FileFormat, QrelsSet, Query, RankedRun, RunEntry};
pub use error::{Error, Result};
pub use metrics::{MetricSpec, MetricTriple};
pub use mining::{MiningConfig, TrainingInstance};
pub use mixture::MixtureManifest;

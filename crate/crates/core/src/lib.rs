//! Pool-based active-learning evaluation engine.
//!
//! The crate bundles everything needed to run a realistic active-learning
//! benchmark at desk scale:
//!
//! - [`posterior`]: entropies, BALD mutual information and BatchBALD joint
//!   entropies over Monte-Carlo posterior samples.
//! - [`query`]: the Random, Entropy, BALD, BatchBALD and Core-Set query
//!   methods behind one selection interface.
//! - [`model`]: a small MC-dropout MLP trained from scratch with class-weighted
//!   cross-entropy, upsampling and best-validation checkpointing.
//! - [`data`]: synthetic mixtures, CSV ingestion, long-tail construction,
//!   stratified splits, label strategies and label regimes.
//! - [`bench`]: hyperparameter sweep on the starting budget, the acquisition
//!   loop, multi-seed aggregation, comparison against random queries and the
//!   `albench` command line.
//!
//! Runnable walkthroughs for each capability live in this crate's
//! `examples/` directory (`cargo run -p albench --example <name>`).

pub mod bench;
pub mod data;
pub mod domain;
pub mod error;
pub mod metrics;
pub mod model;
pub mod posterior;
pub mod query;
pub mod seed;

pub use error::{Error, Result};

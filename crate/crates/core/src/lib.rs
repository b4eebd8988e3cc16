//! Cost-quality frontiers for LLM threshold cascades, built from offline
//! per-query evaluation tables.
//!
//! The crate covers ingestion ([`data`]), confidence scores ([`scorers`]),
//! pool selection ([`pool`]), cascade evaluation and sweeps ([`cascade`]),
//! the pairwise envelope ([`envelope`]), structural diagnostics
//! ([`diagnostics`]), multi-stage search ([`search`]), router baselines
//! ([`router`]), synthetic instances with analytic oracles ([`synthlab`]),
//! and the split-experiment harness ([`harness`]).

pub mod cascade;
pub mod data;
pub mod diagnostics;
pub mod envelope;
pub mod error;
pub mod harness;
pub mod pool;
pub mod router;
pub mod scorers;
pub mod search;
pub mod synthlab;
pub mod stats;

#[cfg(test)]
mod testutil;

pub use cascade::{
    evaluate_policy, pareto_filter, sweep_pair, CascadePolicy, Frontier, FrontierPoint, Policy,
};
pub use data::{load_eval_table, ColumnMapping, EvalTable, ModelId, QueryRecord};
pub use error::{Error, Result};
pub use pool::{select_nondominated, valid_pairs, ModelPool};

//! Soft Horn rule mining over knowledge graphs.
//!
//! A [`KnowledgeGraph`] is loaded once from TSV triples and then shared
//! read-only. Rules are scored by [`metrics::Evaluator`], mined top-down by
//! [`amie`] or bottom-up by [`path_miner`], cross-checked by the sparse
//! matrix evaluator in [`matrix`], and executed by [`predict`].

pub mod amie;
pub mod cli;
pub mod error;
pub mod kg;
pub mod matrix;
pub mod metrics;
pub mod path_miner;
pub mod predict;
mod query;
pub mod ratio;
pub mod rule;

pub use error::{Error, Result};
pub use kg::{EntityId, Fact, KnowledgeGraph, KnowledgeGraphBuilder, RelationId, RelationStats, TripleFormat};
pub use metrics::{ConfidenceKind, Evaluator, PcaDirection, PcaMode, RuleMetrics};
pub use ratio::Rational;
pub use rule::{Atom, Rule, Substitution, Term, Var};

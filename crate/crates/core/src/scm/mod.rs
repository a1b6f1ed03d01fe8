//! Structural causal models over DAGs with hidden nodes: simulation, do
//! oracles, graph algorithms and benchmark generators.

mod bench;
mod dag;
mod mechanism;
mod model;

pub use bench::{bench_model, linear_path_sum, shift_roots, BenchModel};
pub use dag::Dag;
pub use mechanism::{BenchOutcome, Mechanism, NoiseMode, Propensity, Term};
pub use model::{InterventionQuery, NodeSpec, OracleEstimate, Scm, ScmFile, Simulation};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScmError {
    #[error("graph contains a cycle")]
    Cyclic,
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node sets overlap")]
    OverlappingSets,
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("mechanism of node {node} produced a non-finite value")]
    NonFinite { node: String },
    #[error("cannot parse model file: {0}")]
    Parse(String),
}

//! Experiment harness for the generator-based treatment effect estimators:
//! JSON experiment configs, CSV ingestion, reference baselines and the
//! replication loop behind the `acee` command-line tool.

pub mod baselines;
pub mod config;
mod error;
pub mod experiment;
pub mod ingest;

pub use baselines::{baseline_diff_means, baseline_reg_adjust, regress_outcome, RegressionFit};
pub use config::{DagQuery, ExperimentConfig, Generator, Method, ModelSpec, ProxyFeatures, SourceLaw};
pub use error::{BenchError, ErrorRecord};
pub use experiment::{run_experiment, summarize, write_outputs, ExperimentResult, MseRow, ResultRow};
pub use ingest::{ingest_csv, CsvSchema, IngestSummary, Ingested};

//! Treatment effect estimators built on a conditional generator.

mod dag;
mod dataset;
mod estimate;
mod knn;
mod sampler;

pub use dag::{dag_training_data, estimate_dag_total_effect, predecessors, DagEffect};
pub use dataset::ObservationalDataset;
pub use estimate::{
    estimate_effects, estimate_mu, treatment_condition, EffectReport, EffectSettings, MuEstimate, ReportSettings,
    UnitEffect,
};
pub use knn::{default_neighbors, knn_query, standardize_columns, NeighborIndex};
pub use sampler::{ArmShift, ConditionalSampler, ScmSampler};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EffectsError {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("treatment arm {arm} is empty")]
    EmptyArm { arm: u8 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("sampler failed: {0}")]
    Sampler(String),
    #[error("internal inconsistency: {0}")]
    Inconsistent(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

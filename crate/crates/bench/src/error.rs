use acee_core::diffusion::DiffusionError;
use acee_core::effects::EffectsError;
use acee_core::numerics::NumericsError;
use acee_core::proxy::ProxyError;
use acee_core::scm::ScmError;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("schema: {0}")]
    Schema(String),
    /// A bad cell; `row` is 1-based over data rows, excluding the header.
    #[error("row {row}, column '{column}': {message}")]
    Cell { row: usize, column: String, message: String },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Scm(#[from] ScmError),
    #[error(transparent)]
    Proxy(#[from] ProxyError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
    #[error(transparent)]
    Effects(#[from] EffectsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for BenchError {
    fn from(e: serde_json::Error) -> Self {
        BenchError::Config(e.to_string())
    }
}

/// Machine-readable error record printed by the CLI on failure.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub error: &'static str,
    pub message: String,
}

impl BenchError {
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Config(_) => "config",
            BenchError::Schema(_) | BenchError::Cell { .. } => "schema",
            BenchError::Io(_) => "io",
            BenchError::Scm(_) => "scm",
            BenchError::Proxy(_) => "proxy",
            BenchError::Diffusion(_) => "diffusion",
            BenchError::Effects(_) => "effects",
            BenchError::Numerics(_) => "numerics",
        }
    }

    pub fn record(&self) -> ErrorRecord {
        ErrorRecord {
            error: self.kind(),
            message: self.to_string(),
        }
    }
}

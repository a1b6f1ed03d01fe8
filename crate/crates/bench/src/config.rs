use std::path::{Path, PathBuf};

use acee_core::diffusion::{Architecture, Schedule, TrainConfig};
use acee_core::proxy::Include;
use acee_core::scm::BenchModel;
use serde::{Deserialize, Serialize};

use crate::ingest::CsvSchema;
use crate::BenchError;

/// Where the target data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSpec {
    /// Simulated from a named benchmark SCM.
    Bench(BenchModel),
    /// Loaded from a CSV file. The same rows are used for every seed.
    Csv {
        path: PathBuf,
        schema: CsvSchema,
        #[serde(default)]
        true_ate: Option<f64>,
    },
}

impl ModelSpec {
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Bench(m) => m.name(),
            ModelSpec::Csv { path, .. } => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "csv".into()),
        }
    }

    pub fn bench(&self) -> Option<&BenchModel> {
        match self {
            ModelSpec::Bench(m) => Some(m),
            ModelSpec::Csv { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Acee,
    AceeBc,
    DiffMeans,
    RegAdjust,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Acee, Method::AceeBc, Method::DiffMeans, Method::RegAdjust];

    pub fn name(self) -> &'static str {
        match self {
            Method::Acee => "acee",
            Method::AceeBc => "acee_bc",
            Method::DiffMeans => "diff_means",
            Method::RegAdjust => "reg_adjust",
        }
    }

    pub fn uses_generator(self) -> bool {
        matches!(self, Method::Acee | Method::AceeBc)
    }
}

/// Law of the auxiliary source sample used for pretraining.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SourceLaw {
    /// Same SCM as the target.
    #[default]
    Same,
    /// Each source row comes from M1 with probability `eta`, else from M3.
    Mixture { eta: f64 },
    /// Target SCM with root noise shifted and rescaled.
    ShiftedRoots { shift: f64, scale: f64 },
}

/// Conditional sampler behind the generated outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Generator {
    #[default]
    Diffusion,
    /// The true SCM under intervention, with `treated_shift` added to every
    /// draw in the treated arm. Bench models only.
    Oracle {
        #[serde(default)]
        treated_shift: f64,
    },
}

/// Which proxy columns enter the conditioning vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProxyFeatures {
    /// The q factor scores.
    #[default]
    Scores,
    /// Every column of the rank-q reconstruction.
    Columns,
}

/// Total effect of `do(X_k = x1)` versus `do(X_k = x0)` on `X_j` in a
/// fully observed DAG model; indices refer to observed columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagQuery {
    pub order: Vec<usize>,
    pub k: usize,
    pub j: usize,
    pub x1: f64,
    pub x0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub n: usize,
    /// Auxiliary rows for pretraining; 0 trains on the target only.
    pub n_source: usize,
    pub source: SourceLaw,
    /// Proxy rank; 0 disables the proxy.
    pub q: usize,
    pub include: Include,
    pub proxy_features: ProxyFeatures,
    /// Generated draws per unit and arm.
    pub m: usize,
    /// Neighbours per arm for bias correction; `None` is `ceil(n^0.4)`.
    pub n_neighbors: Option<usize>,
    pub include_self: bool,
    pub architecture: Architecture,
    pub schedule: Schedule,
    pub train: TrainConfig,
    /// Head-only training on the target after pretraining. `None` applies
    /// the source model to the target as is.
    pub finetune: Option<TrainConfig>,
    pub warm_start: bool,
    pub generator: Generator,
    pub dag_query: Option<DagQuery>,
    /// Oracle draws for the true effect when no closed form exists.
    pub truth_draws: usize,
    pub seeds: Vec<u64>,
    pub methods: Vec<Method>,
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::Bench(BenchModel::M1),
            n: 200,
            n_source: 0,
            source: SourceLaw::Same,
            q: 1,
            include: Include::ALL,
            proxy_features: ProxyFeatures::Scores,
            m: 100,
            n_neighbors: None,
            include_self: true,
            architecture: Architecture::default(),
            schedule: Schedule::default(),
            train: TrainConfig::default(),
            finetune: None,
            warm_start: true,
            generator: Generator::Diffusion,
            dag_query: None,
            truth_draws: 1_000_000,
            seeds: (0..10).collect(),
            methods: Method::ALL.to_vec(),
            out_dir: None,
        }
    }
}

fn is_covariate_model(m: &BenchModel) -> bool {
    matches!(m, BenchModel::M1 | BenchModel::M2 | BenchModel::M3)
}

impl ExperimentConfig {
    pub fn from_json(s: &str) -> Result<Self, BenchError> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let fail = |msg: &str| Err(BenchError::Config(msg.into()));
        if self.n < 10 {
            return fail("n must be at least 10");
        }
        if self.seeds.is_empty() {
            return fail("seeds must be non-empty");
        }
        if self.methods.is_empty() {
            return fail("methods must be non-empty");
        }
        if self.m == 0 {
            return fail("m must be positive");
        }
        let bench = self.model.bench();
        match self.source {
            SourceLaw::Mixture { eta } => {
                if !(0.0..=1.0).contains(&eta) {
                    return fail("eta must lie in [0, 1]");
                }
                if !bench.is_some_and(is_covariate_model) {
                    return fail("the M1/M3 source mixture needs an M1, M2 or M3 target");
                }
            }
            SourceLaw::ShiftedRoots { scale, .. } if scale <= 0.0 => return fail("root scale must be positive"),
            _ => {}
        }
        if self.n_source > 0 && bench.is_none() {
            return fail("source data can only be simulated for bench models");
        }
        if matches!(self.generator, Generator::Oracle { .. }) && bench.is_none() {
            return fail("the oracle generator needs a bench model");
        }
        if self.dag_query.is_some() {
            if bench.is_none() {
                return fail("dag queries need a bench model");
            }
            if self.methods.iter().any(|&m| m != Method::Acee) {
                return fail("dag queries support only the acee method");
            }
            if matches!(self.source, SourceLaw::Mixture { .. }) {
                return fail("mixture sources apply to treatment experiments only");
            }
        }
        if self.truth_draws == 0 {
            return fail("truth_draws must be positive");
        }
        self.schedule.validate()?;
        self.train.validate()?;
        if let Some(f) = &self.finetune {
            f.validate()?;
        }
        Ok(())
    }

    pub fn any_generator_method(&self) -> bool {
        self.methods.iter().any(|m| m.uses_generator())
    }
}

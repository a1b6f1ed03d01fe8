use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use acee_bench::config::{DagQuery, ExperimentConfig, ModelSpec};
use acee_bench::experiment::{ate_training_data, dag_inputs, dag_layout, proxy_features, train_generator, GeneratorTraining};
use acee_bench::ingest::{read_numeric_csv_path, write_matrix_csv};
use acee_bench::{ingest_csv, run_experiment, write_outputs, BenchError, CsvSchema, Ingested};
use acee_core::diffusion::ScoreModel;
use acee_core::effects::{estimate_dag_total_effect, estimate_effects, EffectSettings};
use acee_core::numerics::Rng;
use acee_core::proxy::{eigen_gap_report, fit_factor_proxy, proxy_sufficiency_diagnostic, ProxyOptions};
use acee_core::scm::{bench_model, BenchModel};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

/// Treatment effect estimation with latent-confounder proxies and
/// diffusion-based counterfactual generators.
#[derive(Parser)]
#[command(name = "acee", version)]
struct Cli {
    /// Experiment config (JSON). Unset fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to the config's `out_dir`, else `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "D")]
    treatment: String,
    #[arg(long, default_value = "Y")]
    outcome: String,
    /// Comma-separated covariate columns; default is every other column.
    #[arg(long, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
}

impl DataArgs {
    fn schema(&self) -> CsvSchema {
        CsvSchema {
            covariates: self.covariates.clone(),
            treatment: self.treatment.clone(),
            outcome: self.outcome.clone(),
        }
    }

    fn load(&self) -> Result<Ingested, BenchError> {
        ingest_csv(&self.data, &self.schema())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a benchmark model and write its observed columns to data.csv.
    Simulate {
        /// Benchmark id, e.g. m1, m4, nonlin_simpson.
        #[arg(long, default_value = "m1")]
        model: String,
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
    /// Validate a CSV dataset and report row and arm counts.
    Ingest(DataArgs),
    /// Fit the factor proxy; writes proxy.csv and proxy.json.
    FitProxy {
        #[command(flatten)]
        data: DataArgs,
        /// Proxy rank; defaults to the config value.
        #[arg(long)]
        q: Option<usize>,
    },
    /// Permutation test of proxy sufficiency; writes diagnostic.json.
    Diagnose {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        q: Option<usize>,
        #[arg(long, default_value_t = 199)]
        permutations: usize,
    },
    /// Train the conditional generator on a dataset; writes model.json.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        q: Option<usize>,
    },
    /// Estimate unit and average effects with a trained generator; writes
    /// effects.csv and summary.json.
    Estimate {
        #[command(flatten)]
        data: DataArgs,
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        q: Option<usize>,
    },
    /// Total effect of X_k on X_j in a DAG given a causal order; trains a
    /// generator for X_j and writes summary.json.
    DagEffect {
        /// CSV whose columns are the observed nodes.
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated column indices in causal order.
        #[arg(long, value_delimiter = ',', required = true)]
        order: Vec<usize>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        j: usize,
        #[arg(long, default_value_t = 1.0)]
        x1: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 0)]
        q: usize,
    },
    /// Run the replication loop; writes results.csv and summary.json.
    Bench {
        /// Comma-separated benchmark ids; each replaces the config model.
        #[arg(long, value_delimiter = ',')]
        models: Option<Vec<String>>,
        /// Comma-separated sample sizes; each replaces the config n.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
}

fn parse_model(id: &str) -> Result<BenchModel, BenchError> {
    serde_json::from_value(serde_json::Value::String(id.to_string()))
        .map_err(|_| BenchError::Config(format!("unknown benchmark model '{id}'")))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    std::fs::write(path, serde_json::to_string_pretty(value).expect("value serializes"))?;
    Ok(())
}

fn create(path: &Path) -> Result<File, BenchError> {
    File::create(path).map_err(|e| BenchError::Io(format!("{}: {e}", path.display())))
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, BenchError> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    Ok(cfg)
}

#[derive(Serialize)]
struct ProxySummary {
    q: usize,
    singular_values: Vec<f64>,
    suggested_q: usize,
}

#[derive(Serialize)]
struct DagSummary<'a> {
    query: &'a DagQuery,
    tau_hat: f64,
    n: usize,
    m: usize,
}

fn run(cli: &Cli) -> Result<(), BenchError> {
    let cfg = load_config(cli)?;
    let seed = cfg.seeds[0];
    let out = &cli
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(out)?;
    match &cli.command {
        Command::Simulate { model, n } => {
            let scm = bench_model(&parse_model(model)?)?;
            let sim = scm.simulate(*n, &mut Rng::keyed(seed, &[1]))?;
            let labels: Vec<String> = scm
                .dag()
                .observed_nodes()
                .iter()
                .map(|&v| scm.dag().label(v).to_string())
                .collect();
            write_matrix_csv(&labels, &sim.observed(&scm), create(&out.join("data.csv"))?)?;
        }
        Command::Ingest(data) => {
            let ing = data.load()?;
            write_json(&out.join("ingest.json"), &ing.summary)?;
            println!("{}", serde_json::to_string(&ing.summary).expect("summary serializes"));
        }
        Command::FitProxy { data, q } => {
            let ds = data.load()?.dataset;
            let q = q.unwrap_or(cfg.q);
            let proxy = fit_factor_proxy(&ds, q, cfg.include, ProxyOptions::default())?;
            let gap = eigen_gap_report(&ds, cfg.include, ProxyOptions::default())?;
            let names: Vec<String> = (1..=q).map(|l| format!("S{l}")).collect();
            write_matrix_csv(&names, &proxy.phi, create(&out.join("proxy.csv"))?)?;
            write_json(
                &out.join("proxy.json"),
                &ProxySummary {
                    q,
                    singular_values: gap.singular_values,
                    suggested_q: gap.suggested_q,
                },
            )?;
        }
        Command::Diagnose { data, q, permutations } => {
            let ds = data.load()?.dataset;
            let proxy = fit_factor_proxy(&ds, q.unwrap_or(cfg.q), cfg.include, ProxyOptions::default())?;
            let report = proxy_sufficiency_diagnostic(&ds, &proxy, *permutations, &mut Rng::keyed(seed, &[8]))?;
            write_json(&out.join("diagnostic.json"), &report)?;
            println!("{}", serde_json::to_string(&report).expect("report serializes"));
        }
        Command::Train { data, q } => {
            let ds = data.load()?.dataset;
            let (features, names) = proxy_features(&ds, q.unwrap_or(cfg.q), cfg.include, cfg.proxy_features)?;
            let (cond, layout) = ate_training_data(&ds, &features, &names);
            let model = train_generator((&cond, ds.y()), None, layout, &GeneratorTraining::from_config(&cfg), seed)?;
            model.save(&out.join("model.json"))?;
        }
        Command::Estimate { data, model, q } => {
            let ds = data.load()?.dataset;
            let model = ScoreModel::load(model)?;
            let (features, _) = proxy_features(&ds, q.unwrap_or(cfg.q), cfg.include, cfg.proxy_features)?;
            let settings = EffectSettings {
                m: cfg.m,
                n_neighbors: cfg.n_neighbors,
                include_self: cfg.include_self,
                seed,
            };
            let report = estimate_effects(&ds, &features, &model, &settings, None)?;
            report.write_csv(create(&out.join("effects.csv"))?)?;
            std::fs::write(out.join("summary.json"), report.summary_json())?;
            println!("ate {} ate_bc {}", report.ate, report.ate_bc);
        }
        Command::DagEffect { data, order, k, j, x1, x0, q } => {
            let table = read_numeric_csv_path(data)?;
            let x = table.matrix(&(0..table.header.len()).collect::<Vec<_>>());
            let query = DagQuery {
                order: order.clone(),
                k: *k,
                j: *j,
                x1: *x1,
                x0: *x0,
            };
            let (features, cond, y) = dag_inputs(&x, *q, &query)?;
            let layout = dag_layout(&table.header, features.cols(), &query)?;
            let model = train_generator((&cond, &y), None, layout, &GeneratorTraining::from_config(&cfg), seed)?;
            let est = estimate_dag_total_effect(&x, order, *k, *j, *x1, *x0, &features, &model, cfg.m, seed)?;
            let summary = DagSummary {
                query: &query,
                tau_hat: est.tau_hat,
                n: x.rows(),
                m: cfg.m,
            };
            write_json(&out.join("summary.json"), &summary)?;
            println!("tau_hat {}", est.tau_hat);
        }
        Command::Bench { models, sizes } => {
            let models: Vec<ModelSpec> = match models {
                Some(ids) => ids.iter().map(|id| parse_model(id).map(ModelSpec::Bench)).collect::<Result<_, _>>()?,
                None => vec![cfg.model.clone()],
            };
            let sizes = sizes.clone().unwrap_or_else(|| vec![cfg.n]);
            let mut configs = Vec::new();
            for model in &models {
                for &n in &sizes {
                    configs.push(ExperimentConfig {
                        model: model.clone(),
                        n,
                        ..cfg.clone()
                    });
                }
            }
            let results = configs.iter().map(run_experiment).collect::<Result<Vec<_>, _>>()?;
            write_outputs(out, &configs, &results)?;
            for row in acee_bench::summarize(&results.iter().flat_map(|r| r.rows.clone()).collect::<Vec<_>>()) {
                println!(
                    "{:<16} n={:<5} {:<11} mse={}",
                    row.model,
                    row.n,
                    row.method,
                    row.mse.map_or("-".into(), |v| format!("{v:.4}"))
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            println!("{}", serde_json::to_string(&e.record()).expect("record serializes"));
            ExitCode::FAILURE
        }
    }
}

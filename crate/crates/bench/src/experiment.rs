//! Replication loop: simulate, fit the proxy, train the generator, estimate,
//! and score every configured method against the true effect.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use acee_core::diffusion::{finetune_target, pretrain_source, FinetuneOptions, ScoreModel, TrainConfig};
use acee_core::effects::{
    dag_training_data, estimate_dag_total_effect, estimate_effects, predecessors, treatment_condition, ArmShift,
    ConditionalSampler, EffectReport, EffectSettings, ObservationalDataset, ScmSampler,
};
use acee_core::numerics::stats::median;
use acee_core::numerics::{stream_id, Matrix, Rng};
use acee_core::proxy::{fit_factor_proxy, fit_residual_proxy, Include, ProxyOptions};
use acee_core::scm::{bench_model, shift_roots, BenchModel, InterventionQuery, Scm};
use serde::{Deserialize, Serialize};

use crate::baselines::{baseline_diff_means, baseline_reg_adjust};
use crate::config::{DagQuery, ExperimentConfig, Generator, Method, ModelSpec, ProxyFeatures, SourceLaw};
use crate::ingest::ingest_csv;
use crate::BenchError;

const STREAM_TARGET: u64 = 1;
const STREAM_SOURCE: u64 = 2;
const STREAM_TRUTH: u64 = 3;
const STREAM_PRETRAIN: u64 = 4;
const STREAM_FINETUNE: u64 = 5;
const STREAM_EFFECTS: u64 = 6;

/// One (seed, method) outcome. Failed runs keep `error` and leave the
/// estimate empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub n: usize,
    pub method: String,
    pub seed: u64,
    pub ate_hat: Option<f64>,
    pub true_ate: Option<f64>,
    pub abs_err: Option<f64>,
    pub error: Option<String>,
}

/// Aggregate over seeds for one (model, n, method) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseRow {
    pub model: String,
    pub n: usize,
    pub method: String,
    pub mse: Option<f64>,
    pub rmse: Option<f64>,
    pub median_abs_err: Option<f64>,
    pub runs: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub true_ate: Option<f64>,
}

impl ExperimentResult {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(move |r| r.method == method.name())
    }

    /// Absolute errors of successful runs, in seed order.
    pub fn abs_errors(&self, method: Method) -> Vec<f64> {
        self.rows_for(method).filter_map(|r| r.abs_err).collect()
    }

    pub fn estimates(&self, method: Method) -> Vec<Option<f64>> {
        self.rows_for(method).map(|r| r.ate_hat).collect()
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Squared-error summary per (model, n, method), in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<MseRow> {
    let mut order: Vec<(String, usize, String)> = Vec::new();
    let mut groups: BTreeMap<(String, usize, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        let key = (r.model.clone(), r.n, r.method.clone());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let errs: Vec<f64> = g.iter().filter_map(|r| r.abs_err).collect();
            let mse = (!errs.is_empty()).then(|| errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64);
            MseRow {
                model: key.0,
                n: key.1,
                method: key.2,
                mse,
                rmse: mse.map(f64::sqrt),
                median_abs_err: (!errs.is_empty()).then(|| median(&errs)),
                runs: g.len(),
                failures: g.iter().filter(|r| r.error.is_some()).count(),
            }
        })
        .collect()
}

#[derive(Serialize)]
struct Summary<'a> {
    true_ate: Option<f64>,
    rows: usize,
    failures: usize,
    mse: Vec<MseRow>,
    config: &'a [ExperimentConfig],
}

/// Writes `results.csv` and `summary.json` into `dir`.
pub fn write_outputs(dir: &Path, configs: &[ExperimentConfig], results: &[ExperimentResult]) -> Result<(), BenchError> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<ResultRow> = results.iter().flat_map(|r| r.rows.iter().cloned()).collect();
    let mut wr = csv::Writer::from_path(dir.join("results.csv"))?;
    for r in &rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    let truths: Vec<Option<f64>> = results.iter().map(|r| r.true_ate).collect();
    let summary = Summary {
        true_ate: if truths.windows(2).all(|w| w[0] == w[1]) { truths.first().copied().flatten() } else { None },
        rows: rows.len(),
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
        mse: summarize(&rows),
        config: configs,
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(())
}

/// Proxy columns for the conditioning vector, with their names.
pub fn proxy_features(
    ds: &ObservationalDataset,
    q: usize,
    include: Include,
    kind: ProxyFeatures,
) -> Result<(Matrix, Vec<String>), BenchError> {
    if q == 0 {
        return Ok((Matrix::zeros(ds.n(), 0), Vec::new()));
    }
    let proxy = fit_factor_proxy(ds, q, include, ProxyOptions::default())?;
    Ok(match kind {
        ProxyFeatures::Scores => (proxy.phi, (1..=q).map(|l| format!("S{l}")).collect()),
        ProxyFeatures::Columns => {
            let names = (0..proxy.s_hat.cols()).map(|l| format!("S_{}", column_name(ds, &proxy.columns[l]))).collect();
            (proxy.s_hat, names)
        }
    })
}

fn column_name(ds: &ObservationalDataset, role: &acee_core::proxy::ColumnRole) -> String {
    use acee_core::proxy::ColumnRole;
    match *role {
        ColumnRole::X(j) => ds.names().map(|n| n[j].clone()).unwrap_or_else(|| format!("X{}", j + 1)),
        ColumnRole::D => "D".into(),
        ColumnRole::Y => "Y".into(),
    }
}

/// Conditioning rows `[x, features, d]` and their column names.
pub fn ate_training_data(ds: &ObservationalDataset, features: &Matrix, feature_names: &[String]) -> (Matrix, Vec<String>) {
    let mut cond = Matrix::zeros(0, ds.p() + features.cols() + 1);
    for i in 0..ds.n() {
        cond.push_row(&treatment_condition(ds.x().row(i), features.row(i), f64::from(ds.d()[i])))
            .expect("row width matches");
    }
    let mut layout: Vec<String> = match ds.names() {
        Some(n) => n.to_vec(),
        None => (1..=ds.p()).map(|j| format!("X{j}")).collect(),
    };
    layout.extend(feature_names.iter().cloned());
    layout.push("D".into());
    (cond, layout)
}

/// Training settings for the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorTraining<'a> {
    pub architecture: &'a acee_core::diffusion::Architecture,
    pub schedule: acee_core::diffusion::Schedule,
    pub train: &'a TrainConfig,
    pub finetune: Option<&'a TrainConfig>,
    pub warm_start: bool,
}

impl<'a> GeneratorTraining<'a> {
    pub fn from_config(cfg: &'a ExperimentConfig) -> Self {
        Self {
            architecture: &cfg.architecture,
            schedule: cfg.schedule,
            train: &cfg.train,
            finetune: cfg.finetune.as_ref(),
            warm_start: cfg.warm_start,
        }
    }
}

fn seeded(cfg: &TrainConfig, seed: u64, stream: u64) -> TrainConfig {
    TrainConfig {
        seed: stream_id(&[cfg.seed, seed, stream]),
        ..cfg.clone()
    }
}

/// Fits the generator. With source data the embedding and head are trained
/// on the source; the head is then optionally fine-tuned on the target.
/// Without source data everything is trained on the target.
pub fn train_generator(
    target: (&Matrix, &[f64]),
    source: Option<(&Matrix, &[f64])>,
    layout: Vec<String>,
    opts: &GeneratorTraining<'_>,
    seed: u64,
) -> Result<ScoreModel, BenchError> {
    let pre = seeded(opts.train, seed, STREAM_PRETRAIN);
    let Some((cs, ys)) = source else {
        let (model, rep) = pretrain_source(target.0, target.1, layout, opts.architecture.clone(), opts.schedule, &pre)?;
        log::debug!("seed {seed}: trained on target, {} steps", rep.steps);
        return Ok(model);
    };
    let (model, rep) = pretrain_source(cs, ys, layout, opts.architecture.clone(), opts.schedule, &pre)?;
    log::debug!("seed {seed}: pretrained on source, {} steps", rep.steps);
    match opts.finetune {
        None => Ok(model),
        Some(ft) => {
            let ft = seeded(ft, seed, STREAM_FINETUNE);
            let (tuned, rep) = finetune_target(&model, target.0, target.1, &ft, FinetuneOptions { warm_start: opts.warm_start })?;
            log::debug!("seed {seed}: fine-tuned on target, {} steps", rep.steps);
            Ok(tuned)
        }
    }
}

/// Rows drawn from M1 with probability `eta` and from M3 otherwise.
pub fn simulate_mixture(eta: f64, n: usize, rng: &mut Rng) -> Result<ObservationalDataset, BenchError> {
    let labels: Vec<bool> = (0..n).map(|_| rng.uniform() < eta).collect();
    let n1 = labels.iter().filter(|&&b| b).count();
    let mut parts = Vec::new();
    for (model, count) in [(BenchModel::M1, n1), (BenchModel::M3, n - n1)] {
        let scm = bench_model(&model)?;
        parts.push(if count == 0 { None } else { Some(scm.simulate(count, rng)?.dataset(&scm)?) });
    }
    let names = bench_model(&BenchModel::M1)?
        .covariate_nodes()
        .len();
    let mut x = Matrix::zeros(0, names);
    let (mut d, mut y) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut next = [0usize; 2];
    for &from_m1 in &labels {
        let k = usize::from(!from_m1);
        let part = parts[k].as_ref().expect("non-empty part");
        let i = next[k];
        next[k] += 1;
        x.push_row(part.x().row(i))?;
        d.push(part.d()[i]);
        y.push(part.y()[i]);
    }
    let names = parts.iter().flatten().next().and_then(|p| p.names().map(<[String]>::to_vec));
    let ds = ObservationalDataset::new(x, d, y)?;
    Ok(match names {
        Some(names) => ds.with_names(names)?,
        None => ds,
    })
}

fn source_scm(target: &Scm, law: SourceLaw) -> Result<Scm, BenchError> {
    match law {
        SourceLaw::Same => Ok(target.clone()),
        SourceLaw::ShiftedRoots { shift, scale } => Ok(shift_roots(target, shift, scale)?),
        SourceLaw::Mixture { .. } => Err(BenchError::Config("mixture sources are defined for ATE experiments only".into())),
    }
}

/// Resolved experiment inputs shared by all seeds.
struct Setup {
    scm: Option<Scm>,
    csv: Option<ObservationalDataset>,
    true_ate: Option<f64>,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, BenchError> {
    match &cfg.model {
        ModelSpec::Csv { path, schema, true_ate } => Ok(Setup {
            scm: None,
            csv: Some(ingest_csv(path, schema)?.dataset),
            true_ate: *true_ate,
        }),
        ModelSpec::Bench(model) => {
            let scm = bench_model(model)?;
            let mut rng = Rng::keyed(0, &[STREAM_TRUTH]);
            let true_ate = match &cfg.dag_query {
                Some(q) => {
                    let obs = scm.dag().observed_nodes();
                    let (k, j) = (node(&obs, q.k)?, node(&obs, q.j)?);
                    let est = scm.do_total_effect(&InterventionQuery::new(k, j, q.x1, q.x0, cfg.truth_draws), &mut rng)?;
                    Some(est.value)
                }
                None => match model.true_ate() {
                    Some(v) => Some(v),
                    None => {
                        let (t, o) = scm
                            .treatment()
                            .zip(scm.outcome())
                            .ok_or_else(|| BenchError::Config(format!("{} has no treatment/outcome pair", model.name())))?;
                        let est = scm.do_total_effect(&InterventionQuery::new(t, o, 1.0, 0.0, cfg.truth_draws), &mut rng)?;
                        Some(est.value)
                    }
                },
            };
            Ok(Setup {
                scm: Some(scm),
                csv: None,
                true_ate,
            })
        }
    }
}

fn node(observed: &[usize], col: usize) -> Result<usize, BenchError> {
    observed
        .get(col)
        .copied()
        .ok_or_else(|| BenchError::Config(format!("column {col} is out of range")))
}

type MethodResults = Vec<(Method, Result<f64, String>)>;

fn fail_all(methods: &[Method], msg: &str) -> MethodResults {
    methods.iter().map(|&m| (m, Err(msg.to_string()))).collect()
}

fn run_ate_seed(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> MethodResults {
    let ds = match (&setup.csv, &setup.scm) {
        (Some(ds), _) => Ok(ds.clone()),
        (None, Some(scm)) => {
            let mut rng = Rng::keyed(seed, &[STREAM_TARGET]);
            scm.simulate(cfg.n, &mut rng)
                .and_then(|s| s.dataset(scm))
                .map_err(BenchError::from)
        }
        (None, None) => unreachable!("setup provides data"),
    };
    let ds = match ds {
        Ok(ds) => ds,
        Err(e) => return fail_all(&cfg.methods, &format!("target data: {e}")),
    };
    let generated = if cfg.any_generator_method() {
        Some(generated_effects(cfg, setup, &ds, seed).map_err(|e| e.to_string()))
    } else {
        None
    };
    cfg.methods
        .iter()
        .map(|&m| {
            let r = match m {
                Method::DiffMeans => baseline_diff_means(&ds).map_err(|e| e.to_string()),
                Method::RegAdjust => baseline_reg_adjust(&ds).map_err(|e| e.to_string()),
                Method::Acee => generated.clone().expect("generator ran").map(|r| r.ate),
                Method::AceeBc => generated.clone().expect("generator ran").map(|r| r.ate_bc),
            };
            (m, r)
        })
        .collect()
}

fn effect_settings(cfg: &ExperimentConfig, seed: u64) -> EffectSettings {
    EffectSettings {
        m: cfg.m,
        n_neighbors: cfg.n_neighbors,
        include_self: cfg.include_self,
        seed: stream_id(&[seed, STREAM_EFFECTS]),
    }
}

fn generated_effects(
    cfg: &ExperimentConfig,
    setup: &Setup,
    ds: &ObservationalDataset,
    seed: u64,
) -> Result<EffectReport, BenchError> {
    let (features, names) = proxy_features(ds, cfg.q, cfg.include, cfg.proxy_features)?;
    let settings = effect_settings(cfg, seed);
    match cfg.generator {
        Generator::Oracle { treated_shift } => {
            let scm = setup.scm.clone().expect("validated: bench model");
            let mut map: Vec<Option<usize>> = scm.covariate_nodes().into_iter().map(Some).collect();
            map.extend(std::iter::repeat_n(None, features.cols()));
            map.push(scm.treatment());
            let index = map.len() - 1;
            let target = scm.outcome().ok_or_else(|| BenchError::Config("model has no outcome".into()))?;
            let sampler = ArmShift {
                inner: ScmSampler::new(scm, target, map)?,
                index,
                shift: treated_shift,
            };
            Ok(estimate_effects(ds, &features, &sampler, &settings, None)?)
        }
        Generator::Diffusion => {
            let (cond, layout) = ate_training_data(ds, &features, &names);
            let source = if cfg.n_source > 0 {
                let mut rng = Rng::keyed(seed, &[STREAM_SOURCE]);
                let src = match cfg.source {
                    SourceLaw::Mixture { eta } => simulate_mixture(eta, cfg.n_source, &mut rng)?,
                    law => {
                        let scm = source_scm(setup.scm.as_ref().expect("validated: bench model"), law)?;
                        scm.simulate(cfg.n_source, &mut rng)?.dataset(&scm)?
                    }
                };
                let (sf, snames) = proxy_features(&src, cfg.q, cfg.include, cfg.proxy_features)?;
                let (scond, _) = ate_training_data(&src, &sf, &snames);
                Some((scond, src.y().to_vec()))
            } else {
                None
            };
            let model = train_generator(
                (&cond, ds.y()),
                source.as_ref().map(|(c, y)| (c, y.as_slice())),
                layout,
                &GeneratorTraining::from_config(cfg),
                seed,
            )?;
            Ok(estimate_effects(ds, &features, &model, &settings, None)?)
        }
    }
}

/// Observed data, residual proxy and generator training rows for a DAG query.
pub fn dag_inputs(x: &Matrix, q: usize, query: &DagQuery) -> Result<(Matrix, Matrix, Vec<f64>), BenchError> {
    let features = if q == 0 {
        Matrix::zeros(x.rows(), 0)
    } else {
        fit_residual_proxy(x, q)?.s_resid
    };
    let (cond, y) = dag_training_data(x, &query.order, query.k, query.j, &features)?;
    Ok((features, cond, y))
}

/// Conditioning column names `[features, X_{k^-}, X_k]` for a DAG query.
pub fn dag_layout(labels: &[String], features: usize, query: &DagQuery) -> Result<Vec<String>, BenchError> {
    let mut layout: Vec<String> = (1..=features).map(|l| format!("S{l}")).collect();
    for c in predecessors(&query.order, query.k)? {
        layout.push(labels[c].clone());
    }
    layout.push(labels[query.k].clone());
    Ok(layout)
}

fn run_dag_seed(cfg: &ExperimentConfig, setup: &Setup, query: &DagQuery, seed: u64) -> Result<f64, BenchError> {
    let scm = setup.scm.as_ref().expect("validated: bench model");
    let observed = scm.dag().observed_nodes();
    let labels: Vec<String> = observed.iter().map(|&v| scm.dag().label(v).to_string()).collect();
    let mut rng = Rng::keyed(seed, &[STREAM_TARGET]);
    let x = scm.simulate(cfg.n, &mut rng)?.observed(scm);
    let (features, cond, y) = dag_inputs(&x, cfg.q, query)?;
    let est = match cfg.generator {
        Generator::Oracle { treated_shift } => {
            let mut map: Vec<Option<usize>> = vec![None; features.cols()];
            for c in predecessors(&query.order, query.k)? {
                map.push(Some(node(&observed, c)?));
            }
            map.push(Some(node(&observed, query.k)?));
            let sampler = ScmSampler::new(scm.clone(), node(&observed, query.j)?, map)?;
            let shifted = ArmShift {
                index: sampler.cond_dim() - 1,
                inner: sampler,
                shift: treated_shift,
            };
            dag_estimate(&x, query, &features, &shifted, cfg, seed)?
        }
        Generator::Diffusion => {
            let source = if cfg.n_source > 0 {
                let src = source_scm(scm, cfg.source)?;
                let mut rng = Rng::keyed(seed, &[STREAM_SOURCE]);
                let xs = src.simulate(cfg.n_source, &mut rng)?.observed(&src);
                let (_, sc, sy) = dag_inputs(&xs, cfg.q, query)?;
                Some((sc, sy))
            } else {
                None
            };
            let layout = dag_layout(&labels, features.cols(), query)?;
            let model = train_generator(
                (&cond, &y),
                source.as_ref().map(|(c, y)| (c, y.as_slice())),
                layout,
                &GeneratorTraining::from_config(cfg),
                seed,
            )?;
            dag_estimate(&x, query, &features, &model, cfg, seed)?
        }
    };
    Ok(est)
}

fn dag_estimate<S: ConditionalSampler>(
    x: &Matrix,
    q: &DagQuery,
    features: &Matrix,
    sampler: &S,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<f64, BenchError> {
    let est = estimate_dag_total_effect(
        x,
        &q.order,
        q.k,
        q.j,
        q.x1,
        q.x0,
        features,
        sampler,
        cfg.m,
        stream_id(&[seed, STREAM_EFFECTS]),
    )?;
    Ok(est.tau_hat)
}

fn run_seed(cfg: &ExperimentConfig, setup: &Setup, seed: u64) -> MethodResults {
    match &cfg.dag_query {
        Some(q) => vec![(Method::Acee, run_dag_seed(cfg, setup, q, seed).map_err(|e| e.to_string()))],
        None => run_ate_seed(cfg, setup, seed),
    }
}

fn worker_count(jobs: usize) -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs).max(1)
}

/// Runs every seed and records one row per (seed, method). A failing stage
/// marks the affected methods of that seed as failed; other seeds continue.
/// Seeds run on worker threads; rows come back in seed order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, BenchError> {
    cfg.validate()?;
    let setup = setup(cfg)?;
    let model = cfg.model.name();
    let n = setup.csv.as_ref().map_or(cfg.n, ObservationalDataset::n);
    let slots: Vec<Mutex<Option<MethodResults>>> = cfg.seeds.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..worker_count(cfg.seeds.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = cfg.seeds.get(i) else { break };
                let out = run_seed(cfg, &setup, seed);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });
    let mut rows = Vec::new();
    for (slot, &seed) in slots.into_iter().zip(&cfg.seeds) {
        for (method, res) in slot.into_inner().expect("slot lock").expect("every seed ran") {
            let (ate_hat, error) = match res {
                Ok(v) => (Some(v), None),
                Err(e) => {
                    log::warn!("{model} n={n} seed {seed} {}: {e}", method.name());
                    (None, Some(e))
                }
            };
            rows.push(ResultRow {
                model: model.clone(),
                n,
                method: method.name().into(),
                seed,
                ate_hat,
                true_ate: setup.true_ate,
                abs_err: ate_hat.zip(setup.true_ate).map(|(a, t)| (a - t).abs()),
                error,
            });
        }
    }
    Ok(ExperimentResult {
        rows,
        true_ate: setup.true_ate,
    })
}

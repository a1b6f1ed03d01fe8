use serde::{Deserialize, Serialize};

use super::model::TIME_FEATURES;
use super::{Architecture, DiffusionError, Schedule, ScoreModel, Standardizer};
use crate::numerics::{AdamConfig, AdamState, Matrix, Mlp, Rng};

const STREAM_INIT: u64 = 0x1d;
const STREAM_TRAIN: u64 = 0x7a;
const STREAM_EVAL: u64 = 0xe7;
const DIVERGENCE_FACTOR: f64 = 1e3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Cosine decay from `lr` to `lr / 100` over the run.
    Cosine,
}

/// Per-sample weight on the noise-prediction error.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `(eps_hat - eps)^2`, i.e. the score loss weighted by `sigma_tau^2`.
    #[default]
    Epsilon,
    /// `(eps_hat - eps)^2 / sigma_tau^2`, the unweighted score loss.
    Score,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub time_draws: usize,
    pub weighting: Weighting,
    pub seed: u64,
    /// Optional cap on the total number of gradient steps.
    pub max_steps: Option<usize>,
    pub lr_schedule: LrSchedule,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 128,
            lr: 1e-3,
            time_draws: 1,
            weighting: Weighting::Epsilon,
            seed: 0,
            max_steps: None,
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.batch_size == 0 || self.time_draws == 0 || !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DiffusionError::InvalidConfig(
                "batch size, time draws and learning rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per completed epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub initial_loss: Option<f64>,
}

/// Fixed diffusion times and noise for one minibatch, so a loss can be
/// re-evaluated at different parameters with identical randomness.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraws {
    pub rows: Vec<usize>,
    pub time_draws: usize,
    /// Indexed `example * time_draws + t`.
    pub tau: Vec<f64>,
    pub eps: Vec<f64>,
}

pub fn draw_noise(rows: &[usize], time_draws: usize, schedule: &Schedule, rng: &mut Rng) -> NoiseDraws {
    let k = rows.len() * time_draws;
    let mut tau = Vec::with_capacity(k);
    let mut eps = Vec::with_capacity(k);
    for _ in 0..k {
        tau.push(schedule.draw_tau(rng));
        eps.push(rng.normal());
    }
    NoiseDraws {
        rows: rows.to_vec(),
        time_draws,
        tau,
        eps,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossEval {
    pub loss: f64,
    pub grad_embed: Vec<f64>,
    pub grad_head: Vec<f64>,
}

/// Denoising score-matching loss on standardized data, with exact gradients
/// for both networks when `with_grad` is set.
pub fn dsm_loss(
    model: &ScoreModel,
    cond: &Matrix,
    y: &[f64],
    draws: &NoiseDraws,
    weighting: Weighting,
    with_grad: bool,
) -> Result<LossEval, DiffusionError> {
    let b = draws.rows.len();
    let r = draws.time_draws;
    let dh = model.embed_dim();
    let width = 1 + dh + TIME_FEATURES;
    let c = cond.select_rows(&draws.rows);
    let ecache = model.embed.forward_train(&c)?;
    let h = ecache.output();

    let mut input = Vec::with_capacity(b * r * width);
    let mut weight = Vec::with_capacity(b * r);
    for (e, &row) in draws.rows.iter().enumerate() {
        for t in 0..r {
            let k = e * r + t;
            let tau = draws.tau[k];
            let a = Schedule::alpha(tau);
            let s2 = Schedule::sigma2(tau);
            input.push(a * y[row] + s2.sqrt() * draws.eps[k]);
            input.extend_from_slice(h.row(e));
            input.push(tau);
            input.push(a);
            weight.push(match weighting {
                Weighting::Epsilon => 1.0,
                Weighting::Score => 1.0 / s2,
            });
        }
    }
    let input = Matrix::from_vec(b * r, width, input)?;
    let hcache = model.head.forward_train(&input)?;
    let out = hcache.output().data();
    let scale = 1.0 / (b * r) as f64;
    let mut loss = 0.0;
    let mut gout = Vec::with_capacity(b * r);
    for k in 0..b * r {
        let diff = out[k] - draws.eps[k];
        loss += weight[k] * diff * diff;
        gout.push(2.0 * weight[k] * diff * scale);
    }
    loss *= scale;
    if !with_grad {
        return Ok(LossEval {
            loss,
            grad_embed: Vec::new(),
            grad_head: Vec::new(),
        });
    }
    let mut grad_head = vec![0.0; model.head.num_params()];
    let gout = Matrix::from_vec(b * r, 1, gout)?;
    let dinput = model.head.backward_batch(&hcache, &gout, &mut grad_head)?;
    let mut dh_mat = Matrix::zeros(b, dh);
    for e in 0..b {
        let acc = dh_mat.row_mut(e);
        for t in 0..r {
            let src = &dinput.row(e * r + t)[1..1 + dh];
            for (a, s) in acc.iter_mut().zip(src) {
                *a += s;
            }
        }
    }
    let mut grad_embed = vec![0.0; model.embed.num_params()];
    model.embed.backward_batch(&ecache, &dh_mat, &mut grad_embed)?;
    Ok(LossEval {
        loss,
        grad_embed,
        grad_head,
    })
}

fn check_data(model: &ScoreModel, cond: &Matrix, y: &[f64], cfg: &TrainConfig) -> Result<(), DiffusionError> {
    cfg.validate()?;
    if cond.rows() != y.len() {
        return Err(DiffusionError::InvalidConfig(format!(
            "{} conditioning rows but {} outcomes",
            cond.rows(),
            y.len()
        )));
    }
    model.check_cond(cond.cols())?;
    if y.len() < cfg.batch_size {
        return Err(DiffusionError::InvalidConfig(format!(
            "{} training rows is fewer than the batch size {}",
            y.len(),
            cfg.batch_size
        )));
    }
    if !cond.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(DiffusionError::InvalidConfig("training data must be finite".into()));
    }
    Ok(())
}

/// Adam on the DSM loss over raw data, standardized with the model's stored
/// statistics. With `freeze_embed` only the head moves.
pub fn train_model(
    model: &mut ScoreModel,
    cond: &Matrix,
    y: &[f64],
    cfg: &TrainConfig,
    freeze_embed: bool,
) -> Result<TrainReport, DiffusionError> {
    check_data(model, cond, y, cfg)?;
    let cond_std = model.cond_scale.apply_matrix(cond);
    let y_std: Vec<f64> = y.iter().map(|v| (v - model.y_scale.mean[0]) / model.y_scale.sd[0]).collect();
    let mut adam = AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    };
    let mut head_state = AdamState::new(model.head.num_params());
    let mut embed_state = AdamState::new(model.embed.num_params());
    let mut rng = Rng::new(cfg.seed, STREAM_TRAIN);
    let mut report = TrainReport {
        epoch_losses: Vec::new(),
        steps: 0,
        initial_loss: None,
    };
    let cap = cfg.max_steps.unwrap_or(usize::MAX);
    let total = (cfg.epochs * y.len().div_ceil(cfg.batch_size)).min(cap).max(1);
    'epochs: for _ in 0..cfg.epochs {
        if report.steps >= cap {
            break;
        }
        let perm = rng.permutation(y.len());
        let (mut sum, mut count) = (0.0, 0usize);
        for chunk in perm.chunks(cfg.batch_size) {
            let draws = draw_noise(chunk, cfg.time_draws, &model.schedule, &mut rng);
            let eval = dsm_loss(model, &cond_std, &y_std, &draws, cfg.weighting, true)?;
            let batch = report.steps;
            if !eval.loss.is_finite() {
                return Err(DiffusionError::NonFiniteLoss { batch });
            }
            let initial = *report.initial_loss.get_or_insert(eval.loss);
            if eval.loss > DIVERGENCE_FACTOR * initial {
                return Err(DiffusionError::Diverged {
                    batch,
                    loss: eval.loss,
                    initial,
                });
            }
            if cfg.lr_schedule == LrSchedule::Cosine {
                let frac = report.steps as f64 / total as f64;
                let floor = 0.01;
                adam.lr = cfg.lr * (floor + (1.0 - floor) * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos()));
            }
            head_state.step(model.head.params_mut(), &eval.grad_head, &adam)?;
            if !freeze_embed {
                embed_state.step(model.embed.params_mut(), &eval.grad_embed, &adam)?;
            }
            sum += eval.loss;
            count += 1;
            report.steps += 1;
            if report.steps >= cap {
                report.epoch_losses.push(sum / count as f64);
                break 'epochs;
            }
        }
        report.epoch_losses.push(sum / count as f64);
    }
    Ok(report)
}

/// Held-out DSM loss on raw data with `time_draws` fixed draws per row from
/// the stream `seed`; comparable across models evaluated with the same seed.
pub fn evaluate_loss(
    model: &ScoreModel,
    cond: &Matrix,
    y: &[f64],
    time_draws: usize,
    weighting: Weighting,
    seed: u64,
) -> Result<f64, DiffusionError> {
    model.check_cond(cond.cols())?;
    if cond.rows() != y.len() || y.is_empty() || time_draws == 0 {
        return Err(DiffusionError::InvalidConfig("evaluation data is empty or misaligned".into()));
    }
    let cond_std = model.cond_scale.apply_matrix(cond);
    let y_std: Vec<f64> = y.iter().map(|v| (v - model.y_scale.mean[0]) / model.y_scale.sd[0]).collect();
    let rows: Vec<usize> = (0..y.len()).collect();
    let mut rng = Rng::new(seed, STREAM_EVAL);
    let draws = draw_noise(&rows, time_draws, &model.schedule, &mut rng);
    Ok(dsm_loss(model, &cond_std, &y_std, &draws, weighting, false)?.loss)
}

impl ScoreModel {
    /// Sets conditioning and outcome standardization from data.
    pub fn fit_standardization(&mut self, cond: &Matrix, y: &[f64]) {
        self.cond_scale = Standardizer::fit(cond);
        self.y_scale = Standardizer::fit_vec(y);
    }
}

/// Trains embedding and head jointly on source data.
pub fn pretrain_source(
    cond: &Matrix,
    y: &[f64],
    cond_layout: Vec<String>,
    arch: Architecture,
    schedule: Schedule,
    cfg: &TrainConfig,
) -> Result<(ScoreModel, TrainReport), DiffusionError> {
    let mut init = Rng::new(cfg.seed, STREAM_INIT);
    let mut model = ScoreModel::new(arch, cond_layout, schedule, &mut init)?;
    check_data(&model, cond, y, cfg)?;
    model.fit_standardization(cond, y);
    let report = train_model(&mut model, cond, y, cfg, false)?;
    Ok((model, report))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinetuneOptions {
    /// Start the head from the source head instead of a fresh initialization.
    pub warm_start: bool,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        Self { warm_start: true }
    }
}

/// Trains only the head on target data; the embedding and its input
/// standardization are inherited from `source` unchanged.
pub fn finetune_target(
    source: &ScoreModel,
    cond: &Matrix,
    y: &[f64],
    cfg: &TrainConfig,
    opts: FinetuneOptions,
) -> Result<(ScoreModel, TrainReport), DiffusionError> {
    let mut model = source.clone();
    check_data(&model, cond, y, cfg)?;
    if !opts.warm_start {
        let mut init = Rng::new(cfg.seed, STREAM_INIT);
        model.head = Mlp::random(&model.architecture.head_dims(), &mut init)?;
    }
    model.y_scale = Standardizer::fit_vec(y);
    let report = train_model(&mut model, cond, y, cfg, true)?;
    debug_assert_eq!(model.embed, source.embed);
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_model(rng: &mut Rng) -> ScoreModel {
        let arch = Architecture {
            embed_hidden: vec![5],
            embed_dim: 3,
            head_hidden: vec![6, 4],
        };
        let mut m = ScoreModel::new(arch, vec!["c0".into(), "c1".into()], Schedule::default(), rng).unwrap();
        // Random biases keep ReLU units away from their kinks.
        for p in m.embed.params_mut().iter_mut().chain(m.head.params_mut()) {
            *p = 0.6 * rng.normal();
        }
        m
    }

    fn data(n: usize, rng: &mut Rng) -> (Matrix, Vec<f64>) {
        let c = Matrix::from_fn(n, 2, |_, _| rng.normal());
        let y = (0..n).map(|i| c.get(i, 0) - 0.5 * c.get(i, 1) + 0.3 * rng.normal()).collect();
        (c, y)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let mut rng = Rng::new(seed, 0);
            let model = tiny_model(&mut rng);
            let (c, y) = data(6, &mut rng);
            let draws = draw_noise(&[0, 2, 3, 5], 2, &model.schedule, &mut rng);
            for weighting in [Weighting::Epsilon, Weighting::Score] {
                let eval = dsm_loss(&model, &c, &y, &draws, weighting, true).unwrap();
                let h = 1e-6;
                let check = |which: usize, idx: usize, analytic: f64| {
                    let mut plus = model.clone();
                    let mut minus = model.clone();
                    let (p, m) = if which == 0 {
                        (&mut plus.embed, &mut minus.embed)
                    } else {
                        (&mut plus.head, &mut minus.head)
                    };
                    p.params_mut()[idx] += h;
                    m.params_mut()[idx] -= h;
                    let lp = dsm_loss(&plus, &c, &y, &draws, weighting, false).unwrap().loss;
                    let lm = dsm_loss(&minus, &c, &y, &draws, weighting, false).unwrap().loss;
                    let fd = (lp - lm) / (2.0 * h);
                    let scale = analytic.abs().max(fd.abs()).max(1e-3);
                    assert!((fd - analytic).abs() / scale < 1e-4, "seed {seed} net {which} param {idx}: {fd} vs {analytic}");
                };
                for (i, &g) in eval.grad_embed.iter().enumerate() {
                    check(0, i, g);
                }
                for (i, &g) in eval.grad_head.iter().enumerate() {
                    check(1, i, g);
                }
            }
        }
    }

    #[test]
    fn zero_head_loss_is_noise_energy() {
        let mut rng = Rng::new(9, 0);
        let mut model = tiny_model(&mut rng);
        model.head.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let (c, y) = data(50, &mut rng);
        let rows: Vec<usize> = (0..50).collect();
        let draws = draw_noise(&rows, 3, &model.schedule, &mut rng);
        let eval = dsm_loss(&model, &c, &y, &draws, Weighting::Score, false).unwrap();
        let expect = draws
            .tau
            .iter()
            .zip(&draws.eps)
            .map(|(t, e)| e * e / Schedule::sigma2(*t))
            .sum::<f64>()
            / draws.eps.len() as f64;
        assert!((eval.loss - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn zero_epochs_keep_initialization() {
        let mut rng = Rng::new(1, 0);
        let (c, y) = data(40, &mut rng);
        let cfg = TrainConfig {
            epochs: 0,
            batch_size: 8,
            seed: 3,
            ..TrainConfig::default()
        };
        let layout = vec!["a".into(), "b".into()];
        let (m, rep) = pretrain_source(&c, &y, layout.clone(), Architecture::default(), Schedule::default(), &cfg).unwrap();
        let mut init = Rng::new(3, STREAM_INIT);
        let fresh = ScoreModel::new(Architecture::default(), layout, Schedule::default(), &mut init).unwrap();
        assert_eq!(m.embed, fresh.embed);
        assert_eq!(m.head, fresh.head);
        assert_eq!(rep.steps, 0);
    }

    #[test]
    fn too_few_rows_for_batch_is_rejected() {
        let mut rng = Rng::new(1, 0);
        let (c, y) = data(10, &mut rng);
        let cfg = TrainConfig {
            batch_size: 11,
            ..TrainConfig::default()
        };
        let layout = vec!["a".into(), "b".into()];
        assert!(pretrain_source(&c, &y, layout, Architecture::default(), Schedule::default(), &cfg).is_err());
    }

    #[test]
    fn divergence_aborts() {
        let mut rng = Rng::new(1, 0);
        let (c, y) = data(64, &mut rng);
        let cfg = TrainConfig {
            epochs: 50,
            batch_size: 8,
            lr: 50.0,
            weighting: Weighting::Score,
            ..TrainConfig::default()
        };
        let layout = vec!["a".into(), "b".into()];
        let r = pretrain_source(&c, &y, layout, Architecture::default(), Schedule::default(), &cfg);
        assert!(
            matches!(r, Err(DiffusionError::Diverged { .. }) | Err(DiffusionError::NonFiniteLoss { .. })),
            "{r:?}"
        );
    }
}

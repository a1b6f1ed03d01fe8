//! Conditional score-based generator for a scalar outcome.
//!
//! Forward noising is the variance-preserving Ornstein-Uhlenbeck process
//! `dY = -Y/2 dtau + dW`, so `Y_tau = alpha_tau Y_0 + sigma_tau eps` with
//! `alpha_tau = exp(-tau/2)` and `sigma_tau^2 = 1 - exp(-tau)`. A conditioning
//! embedding `h(cond)` feeds a head network that predicts `eps`; the score is
//! `-eps_hat / sigma_tau`. Samples come from Euler-Maruyama integration of
//! the reverse-time SDE.

mod model;
mod sample;
mod schedule;
mod train;

pub use model::{Architecture, ScoreModel, Standardizer, CHECKPOINT_VERSION};
pub use sample::sample_conditional;
pub use schedule::{forward_perturb, Schedule};
pub use train::{
    draw_noise, dsm_loss, evaluate_loss, finetune_target, pretrain_source, train_model, FinetuneOptions, LossEval, LrSchedule,
    NoiseDraws, TrainConfig, TrainReport, Weighting,
};

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("diffusion time {tau} outside [{min}, {max}]")]
    TauOutOfRange { tau: f64, min: f64, max: f64 },
    #[error("non-finite loss at batch {batch}")]
    NonFiniteLoss { batch: usize },
    #[error("training diverged at batch {batch}: loss {loss} vs initial {initial}")]
    Diverged { batch: usize, loss: f64, initial: f64 },
    #[error("sampler produced non-finite draws after resampling")]
    NonFiniteSample,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

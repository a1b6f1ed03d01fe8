use super::{DiffusionError, Schedule, ScoreModel};
use crate::effects::{ConditionalSampler, EffectsError};
use crate::numerics::Rng;

/// `m` independent draws of the outcome given a raw conditioning vector, by
/// Euler-Maruyama on the reverse-time SDE from `tau_max` down to `tau_min`.
/// The final step is taken without injected noise.
pub fn sample_conditional(
    model: &ScoreModel,
    cond: &[f64],
    m: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>, DiffusionError> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let h = model.embedding(cond)?;
    let mut z = integrate(model, &h, m, rng)?;
    let bad: Vec<usize> = (0..m).filter(|&i| !z[i].is_finite()).collect();
    if !bad.is_empty() {
        log::warn!("resampling {} non-finite diffusion draws", bad.len());
        let redo = integrate(model, &h, bad.len(), rng)?;
        if redo.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFiniteSample);
        }
        for (i, v) in bad.into_iter().zip(redo) {
            z[i] = v;
        }
    }
    let (mu, sd) = (model.y_scale.mean[0], model.y_scale.sd[0]);
    Ok(z.into_iter().map(|v| mu + sd * v).collect())
}

fn integrate(model: &ScoreModel, h: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, DiffusionError> {
    let grid = model.schedule.reverse_grid();
    let last = grid.len() - 2;
    let mut z: Vec<f64> = (0..m).map(|_| rng.normal()).collect();
    for s in 0..=last {
        let tau = grid[s];
        let dt = tau - grid[s + 1];
        let eps = model.head.forward_batch(&model.head_inputs(&z, h, tau))?;
        let inv_sigma = 1.0 / Schedule::sigma(tau);
        let noise = dt.sqrt();
        for (zi, e) in z.iter_mut().zip(eps.data()) {
            let drift = 0.5 * *zi - e * inv_sigma;
            *zi += dt * drift;
            if s < last {
                *zi += noise * rng.normal();
            }
        }
    }
    Ok(z)
}

impl ConditionalSampler for ScoreModel {
    fn cond_dim(&self) -> usize {
        ScoreModel::cond_dim(self)
    }

    fn sample(&self, cond: &[f64], m: usize, rng: &mut Rng) -> Result<Vec<f64>, EffectsError> {
        sample_conditional(self, cond, m, rng).map_err(|e| EffectsError::Sampler(e.to_string()))
    }
}

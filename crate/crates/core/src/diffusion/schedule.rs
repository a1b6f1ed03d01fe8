use serde::{Deserialize, Serialize};

use super::DiffusionError;
use crate::numerics::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub tau_min: f64,
    pub tau_max: f64,
    pub steps: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            tau_min: 1e-3,
            tau_max: 5.0,
            steps: 100,
        }
    }
}

impl Schedule {
    pub fn new(tau_min: f64, tau_max: f64, steps: usize) -> Result<Self, DiffusionError> {
        let s = Self {
            tau_min,
            tau_max,
            steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        if !(self.tau_min > 0.0 && self.tau_min < self.tau_max && self.tau_max.is_finite()) {
            return Err(DiffusionError::InvalidConfig(format!(
                "need 0 < tau_min < tau_max, got [{}, {}]",
                self.tau_min, self.tau_max
            )));
        }
        if self.steps < 2 {
            return Err(DiffusionError::InvalidConfig("sampler needs at least 2 steps".into()));
        }
        Ok(())
    }

    pub fn alpha(tau: f64) -> f64 {
        (-0.5 * tau).exp()
    }

    pub fn sigma2(tau: f64) -> f64 {
        -(-tau).exp_m1()
    }

    pub fn sigma(tau: f64) -> f64 {
        Self::sigma2(tau).sqrt()
    }

    pub fn contains(&self, tau: f64) -> bool {
        tau >= self.tau_min && tau <= self.tau_max
    }

    pub fn check(&self, tau: f64) -> Result<(), DiffusionError> {
        if self.contains(tau) {
            Ok(())
        } else {
            Err(DiffusionError::TauOutOfRange {
                tau,
                min: self.tau_min,
                max: self.tau_max,
            })
        }
    }

    /// Uniform draw on `[tau_min, tau_max]`.
    pub fn draw_tau(&self, rng: &mut Rng) -> f64 {
        self.tau_min + (self.tau_max - self.tau_min) * rng.uniform()
    }

    /// Uniform grid `tau_max = t_0 > t_1 > ... > t_steps = tau_min`.
    pub fn reverse_grid(&self) -> Vec<f64> {
        let h = (self.tau_max - self.tau_min) / self.steps as f64;
        (0..=self.steps)
            .map(|s| if s == self.steps { self.tau_min } else { self.tau_max - s as f64 * h })
            .collect()
    }
}

/// Noises `y0` to time `tau`; returns `(y_tau, grad log p(y_tau | y0))`.
pub fn forward_perturb(
    schedule: &Schedule,
    y0: f64,
    tau: f64,
    rng: &mut Rng,
) -> Result<(f64, f64), DiffusionError> {
    schedule.check(tau)?;
    let eps = rng.normal();
    let sigma = Schedule::sigma(tau);
    Ok((Schedule::alpha(tau) * y0 + sigma * eps, -eps / sigma))
}

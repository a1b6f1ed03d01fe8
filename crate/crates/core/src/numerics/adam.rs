use serde::{Deserialize, Serialize};

use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected adaptive-moment update. A non-finite gradient leaves
    /// both `params` and the state untouched and is reported as an error.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], cfg: &AdamConfig) -> Result<(), NumericsError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NumericsError::DimensionMismatch {
                expected: self.m.len(),
                found: params.len().min(grads.len()),
            });
        }
        if !(cfg.lr > 0.0) || !(0.0..1.0).contains(&cfg.beta1) || !(0.0..1.0).contains(&cfg.beta2) || !(cfg.eps > 0.0) {
            return Err(NumericsError::InvalidArgument(format!("invalid adam config {cfg:?}")));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NumericsError::NonFinite {
                context: format!("gradient entry {i}; adam step skipped"),
            });
        }
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for ((p, &g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
        Ok(())
    }
}

/// Free-function form of [`AdamState::step`].
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) -> Result<(), NumericsError> {
    state.step(params, grads, &AdamConfig { lr, beta1, beta2, eps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut st = AdamState::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        st.step(&mut p, &[0.0; 3], &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn constant_gradient_hand_recursion() {
        // m1 = 0.1 g, v1 = 0.001 g^2 -> m_hat = g, v_hat = g^2
        // step 1: p -= lr * g / (|g| + eps)
        let (lr, b1, b2, eps) = (0.01, 0.9, 0.999, 1e-8);
        let g = 2.0;
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        adam_step(&mut st, &mut p, &[g], lr, b1, b2, eps).unwrap();
        assert!((p[0] - (-lr * g / (g + eps))).abs() < 1e-15);
        // step 2: m = 0.19 g, v = 0.001999 g^2; bias corrections 0.19 and 0.001999
        adam_step(&mut st, &mut p, &[g], lr, b1, b2, eps).unwrap();
        let m2 = (b1 * (1.0 - b1) * g + (1.0 - b1) * g) / (1.0 - b1 * b1);
        let v2 = (b2 * (1.0 - b2) * g * g + (1.0 - b2) * g * g) / (1.0 - b2 * b2);
        let expect = -lr * g / (g + eps) - lr * m2 / (v2.sqrt() + eps);
        assert!((p[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut st = AdamState::new(2);
        let mut p = vec![1.0, 1.0];
        let err = st.step(&mut p, &[f64::NAN, 1.0], &AdamConfig::default());
        assert!(err.is_err());
        assert_eq!(p, vec![1.0, 1.0]);
        assert_eq!(st.steps(), 0);
    }

    #[test]
    fn nonpositive_lr_rejected() {
        let mut st = AdamState::new(1);
        let mut p = vec![0.0];
        assert!(adam_step(&mut st, &mut p, &[1.0], 0.0, 0.9, 0.999, 1e-8).is_err());
    }

    #[test]
    fn runs_are_bit_identical() {
        let run = || {
            let mut st = AdamState::new(4);
            let mut p = vec![0.1, 0.2, -0.3, 0.4];
            for k in 0..50 {
                let g: Vec<f64> = p.iter().map(|x| 2.0 * x + (k as f64).sin()).collect();
                st.step(&mut p, &g, &AdamConfig::default()).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
    }
}

use serde::{Deserialize, Serialize};

use super::EffectsError;
use crate::numerics::Matrix;

/// Covariates `X` (n x p), binary treatment `D` and outcome `Y` for n units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationalDataset {
    x: Matrix,
    d: Vec<u8>,
    y: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    names: Option<Vec<String>>,
}

impl ObservationalDataset {
    pub fn new(x: Matrix, d: Vec<u8>, y: Vec<f64>) -> Result<Self, EffectsError> {
        let n = x.rows();
        if d.len() != n || y.len() != n {
            return Err(EffectsError::InvalidDataset(format!(
                "X has {n} rows, D has {}, Y has {}",
                d.len(),
                y.len()
            )));
        }
        if let Some(i) = d.iter().position(|&v| v > 1) {
            return Err(EffectsError::InvalidDataset(format!("treatment of unit {i} is {} (not 0/1)", d[i])));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(EffectsError::InvalidDataset(format!("outcome of unit {i} is not finite")));
        }
        if !x.is_finite() {
            return Err(EffectsError::InvalidDataset("covariates contain non-finite values".into()));
        }
        Ok(Self { x, d, y, names: None })
    }

    /// Treatment given as reals that must be exactly 0 or 1.
    pub fn from_real_treatment(x: Matrix, d: &[f64], y: Vec<f64>) -> Result<Self, EffectsError> {
        let mut dd = Vec::with_capacity(d.len());
        for (i, &v) in d.iter().enumerate() {
            dd.push(match v {
                v if v == 0.0 => 0,
                v if v == 1.0 => 1,
                _ => {
                    return Err(EffectsError::InvalidDataset(format!(
                        "treatment of unit {i} is {v} (not 0/1)"
                    )))
                }
            });
        }
        Self::new(x, dd, y)
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self, EffectsError> {
        if names.len() != self.p() {
            return Err(EffectsError::InvalidDataset(format!(
                "{} covariate names for {} columns",
                names.len(),
                self.p()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn d(&self) -> &[u8] {
        &self.d
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn d_real(&self) -> Vec<f64> {
        self.d.iter().map(|&v| f64::from(v)).collect()
    }

    /// (control count, treated count).
    pub fn arm_sizes(&self) -> (usize, usize) {
        let t = self.d.iter().filter(|&&v| v == 1).count();
        (self.n() - t, t)
    }

    pub fn require_both_arms(&self) -> Result<(), EffectsError> {
        let (c, t) = self.arm_sizes();
        if c == 0 || t == 0 {
            return Err(EffectsError::EmptyArm { arm: if c == 0 { 0 } else { 1 } });
        }
        Ok(())
    }

    /// Rows reordered by `perm` (row i of the result is row `perm[i]`).
    pub fn permute(&self, perm: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(perm),
            d: perm.iter().map(|&i| self.d[i]).collect(),
            y: perm.iter().map(|&i| self.y[i]).collect(),
            names: self.names.clone(),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        self.permute(rows)
    }
}

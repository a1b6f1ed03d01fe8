use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiffusionError, Schedule};
use crate::numerics::{Matrix, Mlp, Rng};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Number of time features appended to the head input: `(tau, exp(-tau/2))`.
pub(crate) const TIME_FEATURES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub embed_hidden: Vec<usize>,
    pub embed_dim: usize,
    pub head_hidden: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            embed_hidden: vec![64, 64],
            embed_dim: 16,
            head_hidden: vec![128, 128, 128],
        }
    }
}

impl Architecture {
    pub fn embed_dims(&self, cond_dim: usize) -> Vec<usize> {
        let mut d = vec![cond_dim];
        d.extend(&self.embed_hidden);
        d.push(self.embed_dim);
        d
    }

    pub fn head_dims(&self) -> Vec<usize> {
        let mut d = vec![1 + self.embed_dim + TIME_FEATURES];
        d.extend(&self.head_hidden);
        d.push(1);
        d
    }
}

/// Per-column affine standardization. Constant columns get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            sd: vec![1.0; dim],
        }
    }

    pub fn fit(data: &Matrix) -> Self {
        let n = data.rows().max(1) as f64;
        let mut mean = vec![0.0; data.cols()];
        let mut sd = vec![1.0; data.cols()];
        for j in 0..data.cols() {
            let c = data.col(j);
            let m = c.iter().sum::<f64>() / n;
            let v = c.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean[j] = m;
            if v > 1e-24 {
                sd[j] = v.sqrt();
            }
        }
        Self { mean, sd }
    }

    pub fn fit_vec(y: &[f64]) -> Self {
        let m = Matrix::from_vec(y.len(), 1, y.to_vec()).expect("column vector");
        Self::fit(&m)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn apply_matrix(&self, data: &Matrix) -> Matrix {
        Matrix::from_fn(data.rows(), data.cols(), |i, j| (data.get(i, j) - self.mean[j]) / self.sd[j])
    }
}

/// Conditional noise-prediction network: `eps_hat = head(z, h(cond), tau, alpha_tau)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub version: u32,
    pub architecture: Architecture,
    pub embed: Mlp,
    pub head: Mlp,
    pub schedule: Schedule,
    pub cond_scale: Standardizer,
    pub y_scale: Standardizer,
    /// Names of the conditioning columns, in input order.
    pub cond_layout: Vec<String>,
}

impl ScoreModel {
    pub fn new(
        arch: Architecture,
        cond_layout: Vec<String>,
        schedule: Schedule,
        rng: &mut Rng,
    ) -> Result<Self, DiffusionError> {
        schedule.validate()?;
        let cond_dim = cond_layout.len();
        if cond_dim == 0 {
            return Err(DiffusionError::InvalidConfig("conditioning vector is empty".into()));
        }
        if arch.embed_dim == 0 {
            return Err(DiffusionError::InvalidConfig("embedding dimension must be positive".into()));
        }
        let embed = Mlp::random(&arch.embed_dims(cond_dim), rng)?;
        let head = Mlp::random(&arch.head_dims(), rng)?;
        Ok(Self {
            version: CHECKPOINT_VERSION,
            architecture: arch,
            embed,
            head,
            schedule,
            cond_scale: Standardizer::identity(cond_dim),
            y_scale: Standardizer::identity(1),
            cond_layout,
        })
    }

    pub fn cond_dim(&self) -> usize {
        self.cond_layout.len()
    }

    pub fn embed_dim(&self) -> usize {
        self.architecture.embed_dim
    }

    /// Embedding of a raw (unstandardized) conditioning vector.
    pub fn embedding(&self, cond: &[f64]) -> Result<Vec<f64>, DiffusionError> {
        self.check_cond(cond.len())?;
        Ok(self.embed.forward(&self.cond_scale.apply(cond))?)
    }

    pub(crate) fn check_cond(&self, len: usize) -> Result<(), DiffusionError> {
        if len != self.cond_dim() {
            return Err(DiffusionError::InvalidConfig(format!(
                "conditioning vector has {len} entries, model expects {}",
                self.cond_dim()
            )));
        }
        Ok(())
    }

    /// Head input rows `[z, h, tau, alpha_tau]` for a shared embedding.
    pub(crate) fn head_inputs(&self, z: &[f64], h: &[f64], tau: f64) -> Matrix {
        let width = 1 + h.len() + TIME_FEATURES;
        let mut data = Vec::with_capacity(z.len() * width);
        let a = Schedule::alpha(tau);
        for &zi in z {
            data.push(zi);
            data.extend_from_slice(h);
            data.push(tau);
            data.push(a);
        }
        Matrix::from_vec(z.len(), width, data).expect("head input shape")
    }

    /// Score of the noised standardized outcome at `z` and time `tau`.
    pub fn score_standardized(&self, z: &[f64], cond: &[f64], tau: f64) -> Result<Vec<f64>, DiffusionError> {
        self.schedule.check(tau)?;
        let h = self.embedding(cond)?;
        let eps = self.head.forward_batch(&self.head_inputs(z, &h, tau))?;
        let s = Schedule::sigma(tau);
        Ok(eps.data().iter().map(|e| -e / s).collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DiffusionError> {
        let m: ScoreModel = serde_json::from_str(s).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        std::fs::write(path, self.to_json()).map_err(|e| DiffusionError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let s = std::fs::read_to_string(path).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        Self::from_json(&s)
    }

    fn validate(&self) -> Result<(), DiffusionError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(DiffusionError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        self.schedule.validate()?;
        let arch = &self.architecture;
        if self.embed.dims() != arch.embed_dims(self.cond_dim()).as_slice()
            || self.head.dims() != arch.head_dims().as_slice()
            || self.cond_scale.dim() != self.cond_dim()
            || self.y_scale.dim() != 1
        {
            return Err(DiffusionError::Checkpoint("dimensions do not match the architecture".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(rng: &mut Rng) -> ScoreModel {
        let arch = Architecture {
            embed_hidden: vec![4],
            embed_dim: 2,
            head_hidden: vec![5],
        };
        ScoreModel::new(arch, vec!["a".into(), "b".into()], Schedule::default(), rng).unwrap()
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let mut rng = Rng::new(4, 0);
        let mut m = tiny(&mut rng);
        m.y_scale = Standardizer {
            mean: vec![0.1 + 0.2],
            sd: vec![1.0 / 3.0],
        };
        let back = ScoreModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        m.save(&path).unwrap();
        assert_eq!(ScoreModel::load(&path).unwrap(), m);
    }

    #[test]
    fn checkpoint_rejects_mismatched_dims() {
        let mut rng = Rng::new(4, 0);
        let mut m = tiny(&mut rng);
        m.cond_layout.push("c".into());
        assert!(ScoreModel::from_json(&m.to_json()).is_err());
    }

    #[test]
    fn embed_output_feeds_head_slot() {
        let arch = Architecture::default();
        assert_eq!(arch.head_dims()[0], 1 + arch.embed_dim + TIME_FEATURES);
        assert_eq!(*arch.embed_dims(7).last().unwrap(), arch.embed_dim);
    }

    #[test]
    fn empty_conditioning_is_rejected() {
        let mut rng = Rng::new(0, 0);
        assert!(ScoreModel::new(Architecture::default(), vec![], Schedule::default(), &mut rng).is_err());
    }
}

//! Reference estimators the generator-based estimates are compared against.

use acee_core::effects::ObservationalDataset;
use acee_core::numerics::stats::mean;
use acee_core::numerics::{pinv, svd, Matrix};

use crate::BenchError;

const RCOND: f64 = 1e-10;

/// `mean(Y | D = 1) - mean(Y | D = 0)`.
pub fn baseline_diff_means(ds: &ObservationalDataset) -> Result<f64, BenchError> {
    ds.require_both_arms()?;
    let arm = |a: u8| -> Vec<f64> {
        ds.d()
            .iter()
            .zip(ds.y())
            .filter(|(&d, _)| d == a)
            .map(|(_, &y)| y)
            .collect()
    };
    Ok(mean(&arm(1)) - mean(&arm(0)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    /// Coefficients on `[1, X, D]`.
    pub coef: Vec<f64>,
    pub rank: usize,
}

impl RegressionFit {
    pub fn effect(&self) -> f64 {
        *self.coef.last().expect("design has a treatment column")
    }

    pub fn full_rank(&self) -> bool {
        self.rank == self.coef.len()
    }
}

/// Least squares of `Y` on `[1, X, D]`. A rank-deficient design falls back to
/// the minimum-norm pseudo-inverse solution.
pub fn regress_outcome(ds: &ObservationalDataset) -> Result<RegressionFit, BenchError> {
    let (n, p) = (ds.n(), ds.p());
    if n <= p + 2 {
        return Err(BenchError::Config(format!("regression needs n > p + 2 (n = {n}, p = {p})")));
    }
    ds.require_both_arms()?;
    let design = Matrix::from_fn(n, p + 2, |i, j| match j {
        0 => 1.0,
        j if j <= p => ds.x().get(i, j - 1),
        _ => f64::from(ds.d()[i]),
    });
    let sigma = svd(&design)?.sigma;
    let cutoff = RCOND * sigma[0];
    let rank = sigma.iter().filter(|&&s| s > cutoff).count();
    if rank < p + 2 {
        log::warn!("regression design has rank {rank} < {}; using the pseudo-inverse", p + 2);
    }
    let (pi, _) = pinv(&design, RCOND)?;
    let coef = pi.mul_vec(ds.y())?;
    Ok(RegressionFit { coef, rank })
}

/// Coefficient on `D` in the least-squares fit `Y ~ [1, X, D]`.
pub fn baseline_reg_adjust(ds: &ObservationalDataset) -> Result<f64, BenchError> {
    Ok(regress_outcome(ds)?.effect())
}

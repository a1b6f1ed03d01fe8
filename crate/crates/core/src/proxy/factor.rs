use serde::{Deserialize, Serialize};

use super::ProxyError;
use crate::effects::ObservationalDataset;
use crate::numerics::{svd, svd_truncated, Matrix};

/// Which dataset blocks enter the stacked matrix `Z = [X | D | Y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Include {
    pub x: bool,
    pub d: bool,
    pub y: bool,
}

impl Default for Include {
    fn default() -> Self {
        Self::ALL
    }
}

impl Include {
    pub const ALL: Include = Include { x: true, d: true, y: true };
    pub const X_D: Include = Include { x: true, d: true, y: false };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnRole {
    X(usize),
    D,
    Y,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyOptions {
    /// Center and scale each column of `Z` to unit variance before the SVD.
    pub standardize: bool,
}

impl Default for ProxyOptions {
    fn default() -> Self {
        Self { standardize: true }
    }
}

/// Rank-q factor decomposition `S = Phi Psi^T` of the (standardized) stacked
/// data matrix with `(1/n) Phi^T Phi = I` and `Psi^T Psi` diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorProxy {
    pub q: usize,
    /// n x q
    pub phi: Matrix,
    /// d x q
    pub psi: Matrix,
    /// n x d, equal to `phi psi^T` in the working (standardized) scale.
    pub s_hat: Matrix,
    pub columns: Vec<ColumnRole>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub singular_values: Vec<f64>,
}

impl FactorProxy {
    pub fn n(&self) -> usize {
        self.phi.rows()
    }

    pub fn column_of(&self, role: ColumnRole) -> Option<usize> {
        self.columns.iter().position(|&c| c == role)
    }

    /// `S_hat` mapped back to the units of the data columns.
    pub fn s_hat_original(&self) -> Matrix {
        let mut s = self.s_hat.clone();
        for i in 0..s.rows() {
            for (j, v) in s.row_mut(i).iter_mut().enumerate() {
                *v = self.means[j] + self.sds[j] * *v;
            }
        }
        s
    }

    /// The `S_Y` column in outcome units, if Y was included.
    pub fn s_y(&self) -> Option<Vec<f64>> {
        let j = self.column_of(ColumnRole::Y)?;
        Some(
            (0..self.n())
                .map(|i| self.means[j] + self.sds[j] * self.s_hat.get(i, j))
                .collect(),
        )
    }

    /// Columns of `S_hat` other than `S_Y` (working scale).
    pub fn s_minus_y(&self) -> Matrix {
        let keep: Vec<usize> = (0..self.columns.len())
            .filter(|&j| self.columns[j] != ColumnRole::Y)
            .collect();
        self.s_hat.select_columns(&keep)
    }

    /// Rows of the proxy restricted to `rows` (for subsetting datasets).
    pub fn select_rows(&self, rows: &[usize]) -> FactorProxy {
        FactorProxy {
            phi: self.phi.select_rows(rows),
            s_hat: self.s_hat.select_rows(rows),
            ..self.clone()
        }
    }
}

pub(crate) fn stacked(ds: &ObservationalDataset, include: Include) -> Result<(Matrix, Vec<ColumnRole>), ProxyError> {
    let mut cols = Vec::new();
    let mut roles = Vec::new();
    if include.x {
        for j in 0..ds.p() {
            cols.push(ds.x().col(j));
            roles.push(ColumnRole::X(j));
        }
    }
    if include.d {
        cols.push(ds.d_real());
        roles.push(ColumnRole::D);
    }
    if include.y {
        cols.push(ds.y().to_vec());
        roles.push(ColumnRole::Y);
    }
    if cols.is_empty() {
        return Err(ProxyError::InvalidRank("no columns included".into()));
    }
    Ok((Matrix::from_columns(&cols)?, roles))
}

/// Centers and scales columns; a constant column is a rank deficiency.
pub(crate) fn standardize(z: &Matrix, roles: &[ColumnRole]) -> Result<(Matrix, Vec<f64>, Vec<f64>), ProxyError> {
    let n = z.rows() as f64;
    let mut means = Vec::with_capacity(z.cols());
    let mut sds = Vec::with_capacity(z.cols());
    for j in 0..z.cols() {
        let c = z.col(j);
        let m = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
        if !(var > 1e-24 * (1.0 + m * m)) {
            return Err(ProxyError::RankDeficient(format!("column {:?} is constant", roles[j])));
        }
        means.push(m);
        sds.push(var.sqrt());
    }
    let out = Matrix::from_fn(z.rows(), z.cols(), |i, j| (z.get(i, j) - means[j]) / sds[j]);
    Ok((out, means, sds))
}

/// Constrained least squares factor proxy from the truncated SVD of
/// `Z = [X | D | Y]`: `Phi = sqrt(n) U_q`, `Psi = V_q diag(Sigma_q) / sqrt(n)`.
pub fn fit_factor_proxy(
    ds: &ObservationalDataset,
    q: usize,
    include: Include,
    opts: ProxyOptions,
) -> Result<FactorProxy, ProxyError> {
    let (z, columns) = stacked(ds, include)?;
    fit_matrix(&z, columns, q, opts)
}

pub(crate) fn fit_matrix(
    z: &Matrix,
    columns: Vec<ColumnRole>,
    q: usize,
    opts: ProxyOptions,
) -> Result<FactorProxy, ProxyError> {
    let (n, d) = (z.rows(), z.cols());
    if q == 0 || q > d || q > n {
        return Err(ProxyError::InvalidRank(format!(
            "q = {q} must lie in 1..={} for an {n} x {d} matrix",
            d.min(n)
        )));
    }
    let (work, means, sds) = if opts.standardize {
        standardize(z, &columns)?
    } else {
        (z.clone(), vec![0.0; d], vec![1.0; d])
    };
    let s = svd_truncated(&work, q)?;
    if s.sigma[q - 1] <= 1e-12 * s.sigma[0].max(f64::MIN_POSITIVE) {
        return Err(ProxyError::RankDeficient(format!(
            "matrix has numerical rank below q = {q}"
        )));
    }
    let sqrt_n = (n as f64).sqrt();
    let phi = s.u.scale(sqrt_n);
    let psi = Matrix::from_fn(d, q, |j, k| s.v.get(j, k) * s.sigma[k] / sqrt_n);
    let s_hat = phi.matmul(&psi.transpose())?;
    Ok(FactorProxy {
        q,
        phi,
        psi,
        s_hat,
        columns,
        means,
        sds,
        singular_values: s.sigma,
    })
}

/// Singular values of the (standardized) stacked matrix together with the
/// rank that maximizes the ratio of consecutive values. Informational only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenGapReport {
    pub singular_values: Vec<f64>,
    pub suggested_q: usize,
}

pub fn eigen_gap_report(
    ds: &ObservationalDataset,
    include: Include,
    opts: ProxyOptions,
) -> Result<EigenGapReport, ProxyError> {
    let (z, columns) = stacked(ds, include)?;
    let work = if opts.standardize { standardize(&z, &columns)?.0 } else { z };
    let s = svd(&work)?;
    let sv = s.sigma;
    let mut best = (1, 0.0);
    for k in 0..sv.len().saturating_sub(1) {
        let ratio = sv[k] / sv[k + 1].max(1e-300);
        if ratio > best.1 {
            best = (k + 1, ratio);
        }
    }
    Ok(EigenGapReport {
        singular_values: sv,
        suggested_q: best.0,
    })
}

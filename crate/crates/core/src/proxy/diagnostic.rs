use serde::{Deserialize, Serialize};

use super::factor::FactorProxy;
use super::ProxyError;
use crate::effects::ObservationalDataset;
use crate::numerics::{lstsq, svd, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Permutation test of whether the outcome residual `Y - S_Y` still carries
/// signal in `S_Y` after adjusting for `[1, X, S_-Y, D]`.
///
/// The fitted `S_Y` lies in the span of the other proxy columns, so its
/// linear part is absorbed by the adjustment set. The statistic is the larger
/// absolute partial correlation of the residual with `S_Y` and with `S_Y^2`.
pub fn proxy_sufficiency_diagnostic(
    ds: &ObservationalDataset,
    proxy: &FactorProxy,
    permutations: usize,
    rng: &mut Rng,
) -> Result<DiagnosticReport, ProxyError> {
    if permutations < 99 {
        return Err(ProxyError::InvalidArgument(format!(
            "at least 99 permutations required, got {permutations}"
        )));
    }
    let n = ds.n();
    if proxy.n() != n {
        return Err(ProxyError::InvalidArgument(format!(
            "proxy has {} rows, dataset has {n}",
            proxy.n()
        )));
    }
    let s_y = match proxy.s_y() {
        Some(s) => s,
        None => project_on_scores(ds.y(), &proxy.phi)?,
    };
    let y = ds.y();
    let e: Vec<f64> = y.iter().zip(&s_y).map(|(a, b)| a - b).collect();

    let q = adjustment_basis(ds, proxy)?;
    let s_y_sq: Vec<f64> = s_y.iter().map(|v| v * v).collect();
    let targets: Vec<Vec<f64>> = [s_y, s_y_sq]
        .into_iter()
        .filter_map(|t| {
            let r = residualize(&q, &t);
            let scale = norm(&t).max(f64::MIN_POSITIVE);
            (norm(&r) > 1e-8 * scale).then(|| unit(&r))
        })
        .collect();
    if targets.is_empty() {
        return Ok(DiagnosticReport {
            statistic: 0.0,
            p_value: 1.0,
            permutations,
        });
    }

    let stat = |e: &[f64]| -> f64 {
        let r = residualize(&q, e);
        let nr = norm(&r);
        if nr <= 1e-300 {
            return 0.0;
        }
        targets
            .iter()
            .map(|t| (dot(&r, t) / nr).abs())
            .fold(0.0, f64::max)
    };
    let observed = stat(&e);
    let mut exceed = 0usize;
    let mut perm = e.clone();
    for _ in 0..permutations {
        perm.copy_from_slice(&e);
        rng.shuffle(&mut perm);
        if stat(&perm) >= observed {
            exceed += 1;
        }
    }
    Ok(DiagnosticReport {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        permutations,
    })
}

fn project_on_scores(y: &[f64], phi: &Matrix) -> Result<Vec<f64>, ProxyError> {
    let n = y.len();
    let mut cols = vec![vec![1.0; n]];
    cols.extend((0..phi.cols()).map(|k| phi.col(k)));
    let a = Matrix::from_columns(&cols)?;
    let (beta, _) = lstsq(&a, y)?;
    Ok(a.mul_vec(&beta)?)
}

/// Orthonormal basis of the column space of `[1, X, S_-Y, D]`.
fn adjustment_basis(ds: &ObservationalDataset, proxy: &FactorProxy) -> Result<Matrix, ProxyError> {
    let n = ds.n();
    let mut cols = vec![vec![1.0; n]];
    cols.extend((0..ds.p()).map(|j| ds.x().col(j)));
    let s = proxy.s_minus_y();
    cols.extend((0..s.cols()).map(|j| s.col(j)));
    cols.push(ds.d_real());
    // Scale columns so the rank tolerance is relative per column.
    for c in cols.iter_mut() {
        let nc = norm(c);
        if nc > 0.0 {
            c.iter_mut().for_each(|v| *v /= nc);
        }
    }
    let a = Matrix::from_columns(&cols)?;
    let dec = svd(&a)?;
    let tol = 1e-10 * dec.sigma.first().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..dec.sigma.len()).filter(|&k| dec.sigma[k] > tol).collect();
    if keep.len() < a.cols() {
        log::debug!(
            "diagnostic adjustment set has rank {} of {} columns",
            keep.len(),
            a.cols()
        );
    }
    Ok(dec.u.select_columns(&keep))
}

fn residualize(q: &Matrix, v: &[f64]) -> Vec<f64> {
    let mut r = v.to_vec();
    for k in 0..q.cols() {
        let c = q.col(k);
        let b = dot(&c, &r);
        for (ri, ci) in r.iter_mut().zip(&c) {
            *ri -= b * ci;
        }
    }
    r
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn unit(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|v| v / n).collect()
}

use serde::{Deserialize, Serialize};

use super::{ConditionalSampler, EffectsError};
use crate::numerics::stats::mean;
use crate::numerics::{Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DagEffect {
    pub tau_hat: f64,
    pub per_unit: Vec<f64>,
}

/// Columns preceding `k` in the order `pi`, in order.
pub fn predecessors(order: &[usize], k: usize) -> Result<Vec<usize>, EffectsError> {
    let pos = order
        .iter()
        .position(|&v| v == k)
        .ok_or_else(|| EffectsError::InvalidArgument(format!("node {k} is not in the order")))?;
    Ok(order[..pos].to_vec())
}

fn check_order(order: &[usize], p: usize, k: usize, j: usize) -> Result<(), EffectsError> {
    let mut seen = vec![false; p];
    for &v in order {
        if v >= p || std::mem::replace(&mut seen[v], true) {
            return Err(EffectsError::InvalidArgument("order must be a permutation of the columns".into()));
        }
    }
    if order.len() != p {
        return Err(EffectsError::InvalidArgument("order must list every column".into()));
    }
    let pk = order.iter().position(|&v| v == k);
    let pj = order.iter().position(|&v| v == j);
    match (pk, pj) {
        (Some(a), Some(b)) if a < b => Ok(()),
        _ => Err(EffectsError::InvalidArgument(format!("node {k} must precede node {j} in the order"))),
    }
}

/// Conditioning vector `[features, X_{k^-}, x_k]`.
fn dag_condition(features: &[f64], x_row: &[f64], pred: &[usize], xk: f64) -> Vec<f64> {
    let mut c = Vec::with_capacity(features.len() + pred.len() + 1);
    c.extend_from_slice(features);
    c.extend(pred.iter().map(|&v| x_row[v]));
    c.push(xk);
    c
}

/// Training pairs for the generator of `X_j` given `[features, X_{k^-}, X_k]`.
pub fn dag_training_data(
    x: &Matrix,
    order: &[usize],
    k: usize,
    j: usize,
    features: &Matrix,
) -> Result<(Matrix, Vec<f64>), EffectsError> {
    check_order(order, x.cols(), k, j)?;
    let pred = predecessors(order, k)?;
    let rows: Vec<Vec<f64>> = (0..x.rows())
        .map(|i| dag_condition(features.row(i), x.row(i), &pred, x.get(i, k)))
        .collect();
    Ok((Matrix::from_rows(&rows)?, x.col(j)))
}

/// Total effect of setting column `k` to `x1` versus `x0` on column `j`,
/// averaged over all units. Both levels share each unit's random stream.
#[allow(clippy::too_many_arguments)]
pub fn estimate_dag_total_effect<S: ConditionalSampler + ?Sized>(
    x: &Matrix,
    order: &[usize],
    k: usize,
    j: usize,
    x1: f64,
    x0: f64,
    features: &Matrix,
    sampler: &S,
    m: usize,
    seed: u64,
) -> Result<DagEffect, EffectsError> {
    check_order(order, x.cols(), k, j)?;
    if features.rows() != x.rows() {
        return Err(EffectsError::InvalidArgument("proxy rows do not match the data".into()));
    }
    if m == 0 {
        return Err(EffectsError::InvalidArgument("M must be at least 1".into()));
    }
    let pred = predecessors(order, k)?;
    let mut per_unit = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let base = Rng::keyed(seed, &[i as u64]);
        let c1 = dag_condition(features.row(i), x.row(i), &pred, x1);
        let c0 = dag_condition(features.row(i), x.row(i), &pred, x0);
        let a = sampler.sample(&c1, m, &mut base.clone())?;
        let b = sampler.sample(&c0, m, &mut base.clone())?;
        per_unit.push(mean(&a) - mean(&b));
    }
    Ok(DagEffect {
        tau_hat: mean(&per_unit),
        per_unit,
    })
}

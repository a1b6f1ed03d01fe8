use serde::{Deserialize, Serialize};

use super::factor::{fit_matrix, ColumnRole, ProxyOptions};
use super::ProxyError;
use crate::numerics::Matrix;

/// `X - E_hat[X | H]`, with the conditional mean estimated by a rank-q
/// factor reconstruction of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualProxy {
    pub s_resid: Matrix,
    pub reconstruction: Matrix,
}

pub fn fit_residual_proxy(x: &Matrix, q: usize) -> Result<ResidualProxy, ProxyError> {
    fit_residual_proxy_with(x, q, ProxyOptions::default())
}

pub fn fit_residual_proxy_with(x: &Matrix, q: usize, opts: ProxyOptions) -> Result<ResidualProxy, ProxyError> {
    let roles = (0..x.cols()).map(ColumnRole::X).collect();
    let f = fit_matrix(x, roles, q, opts)?;
    let reconstruction = f.s_hat_original();
    let s_resid = x.sub(&reconstruction)?;
    Ok(ResidualProxy {
        s_resid,
        reconstruction,
    })
}

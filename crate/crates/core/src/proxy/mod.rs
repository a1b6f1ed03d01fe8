//! Proxies for latent confounders.
//!
//! The factor proxy treats the stacked data `Z = [X | D | Y]` as
//! `Z = Phi Psi^T + noise` and recovers `S = Phi Psi^T` by a truncated SVD.
//! The residual proxy removes the estimated common component from `X`.

mod diagnostic;
mod factor;
mod residual;

pub use diagnostic::{proxy_sufficiency_diagnostic, DiagnosticReport};
pub use factor::{eigen_gap_report, fit_factor_proxy, ColumnRole, EigenGapReport, FactorProxy, Include, ProxyOptions};
pub use residual::{fit_residual_proxy, fit_residual_proxy_with, ResidualProxy};

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProxyError {
    #[error("invalid rank: {0}")]
    InvalidRank(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::effects::ObservationalDataset;
    use crate::numerics::Matrix;

    fn dataset(x: Vec<Vec<f64>>, d: Vec<u8>, y: Vec<f64>) -> ObservationalDataset {
        ObservationalDataset::new(Matrix::from_rows(&x).unwrap(), d, y).unwrap()
    }

    #[test]
    fn diagonal_rank_one_keeps_leading_direction() {
        // Z = [[2, 0], [0, 1]] with no standardization.
        let ds = dataset(vec![vec![2.0], vec![0.0]], vec![0, 1], vec![0.0, 0.0]);
        let inc = Include { x: true, d: true, y: false };
        let z_opts = ProxyOptions { standardize: false };
        let f = fit_factor_proxy(&ds, 1, inc, z_opts).unwrap();
        let expect = [[2.0, 0.0], [0.0, 0.0]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((f.s_hat.get(i, j) - expect[i][j]).abs() < 1e-12);
            }
        }
        assert!((f.phi.get(0, 0).abs() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_rank() {
        let ds = dataset(vec![vec![1.0], vec![2.0], vec![4.0]], vec![0, 1, 1], vec![1.0, 0.0, 3.0]);
        for q in [0, 4] {
            assert!(matches!(
                fit_factor_proxy(&ds, q, Include::ALL, ProxyOptions::default()),
                Err(ProxyError::InvalidRank(_))
            ));
        }
    }

    #[test]
    fn constant_column_is_rank_deficient() {
        let ds = dataset(vec![vec![1.0], vec![1.0], vec![1.0]], vec![0, 1, 1], vec![1.0, 0.0, 3.0]);
        assert!(matches!(
            fit_factor_proxy(&ds, 1, Include::ALL, ProxyOptions::default()),
            Err(ProxyError::RankDeficient(_))
        ));
    }

    #[test]
    fn full_rank_residual_is_zero() {
        let x = Matrix::from_rows(&[vec![1.0, 3.0], vec![2.0, -1.0], vec![0.5, 0.0], vec![4.0, 2.0]]).unwrap();
        let r = fit_residual_proxy(&x, 2).unwrap();
        assert!(r.s_resid.frobenius_norm() < 1e-10);
    }

    #[test]
    fn eigen_gap_finds_planted_rank() {
        let mut rng = crate::numerics::Rng::new(3, 0);
        let n = 300;
        let h: Vec<[f64; 2]> = (0..n).map(|_| [rng.normal(), rng.normal()]).collect();
        let x: Vec<Vec<f64>> = h
            .iter()
            .map(|h| {
                (0..6)
                    .map(|j| h[j % 2] * (1.0 + j as f64 * 0.2) + 0.05 * rng.normal())
                    .collect()
            })
            .collect();
        let d = (0..n).map(|i| (i % 2) as u8).collect();
        let y = (0..n).map(|_| rng.normal()).collect();
        let ds = dataset(x, d, y);
        let inc = Include { x: true, d: false, y: false };
        let rep = eigen_gap_report(&ds, inc, ProxyOptions::default()).unwrap();
        assert_eq!(rep.suggested_q, 2);
    }
}

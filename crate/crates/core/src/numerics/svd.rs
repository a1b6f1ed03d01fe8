//! Truncated singular value decomposition by one-sided (Hestenes) Jacobi
//! rotations.
//!
//! Columns of the working matrix are orthogonalized pairwise until every pair
//! satisfies `|a_p . a_q| <= tol * |a_p| |a_q|`. The accumulated rotations form
//! `V`; the column norms are the singular values. Results are made unique by
//! flipping each pair `(u_i, v_i)` so the largest-magnitude entry of `v_i` is
//! positive.

use super::matrix::{axpy, dot};
use super::{Matrix, NumericsError};

const JACOBI_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x q`, orthonormal columns.
    pub u: Matrix,
    /// Nonincreasing, nonnegative.
    pub sigma: Vec<f64>,
    /// `cols x q`, orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    /// `U diag(sigma) V^T`.
    pub fn reconstruct(&self) -> Matrix {
        let (r, c, q) = (self.u.rows(), self.v.rows(), self.sigma.len());
        let mut out = Matrix::zeros(r, c);
        for i in 0..r {
            let row = out.row_mut(i);
            for k in 0..q {
                let w = self.u.get(i, k) * self.sigma[k];
                if w == 0.0 {
                    continue;
                }
                for (j, o) in row.iter_mut().enumerate() {
                    *o += w * self.v.get(j, k);
                }
            }
        }
        out
    }

    pub fn rank(&self) -> usize {
        self.sigma.len()
    }
}

/// Rank-`q` SVD of `m`. See the module docs for the algorithm and sign rule.
pub fn svd_truncated(m: &Matrix, q: usize) -> Result<Svd, NumericsError> {
    if !m.is_finite() {
        return Err(NumericsError::NonFinite {
            context: "svd input".into(),
        });
    }
    let min_dim = m.rows().min(m.cols());
    if q == 0 || q > min_dim {
        return Err(NumericsError::InvalidArgument(format!(
            "svd rank q = {q} must lie in 1..={min_dim}"
        )));
    }
    let (mut u, sigma, mut v) = if m.rows() >= m.cols() {
        jacobi_tall(m, q)?
    } else {
        let (u_t, s, v_t) = jacobi_tall(&m.transpose(), q)?;
        (v_t, s, u_t)
    };
    fix_signs(&mut u, &mut v);
    Ok(Svd { u, sigma, v })
}

/// Full thin SVD, `q = min(rows, cols)`.
pub fn svd(m: &Matrix) -> Result<Svd, NumericsError> {
    svd_truncated(m, m.rows().min(m.cols()))
}

/// Jacobi on a matrix with `rows >= cols`; returns (U, sigma, V) truncated to q.
fn jacobi_tall(m: &Matrix, q: usize) -> Result<(Matrix, Vec<f64>, Matrix), NumericsError> {
    let (r, c) = (m.rows(), m.cols());
    // Column-major working copies.
    let mut a: Vec<Vec<f64>> = (0..c).map(|j| m.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..c)
        .map(|j| {
            let mut e = vec![0.0; c];
            e[j] = 1.0;
            e
        })
        .collect();

    let max_sweeps = (10 * c * c).max(10);
    let mut converged = false;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..c {
            for qq in p + 1..c {
                let alpha = dot(&a[p], &a[p]);
                let beta = dot(&a[qq], &a[qq]);
                let gamma = dot(&a[p], &a[qq]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                rotate(&mut a, p, qq, cs, sn);
                rotate(&mut v, p, qq, cs, sn);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(NumericsError::NoConvergence {
            iterations: max_sweeps,
        });
    }

    let norms: Vec<f64> = a.iter().map(|col| dot(col, col).sqrt()).collect();
    let mut order: Vec<usize> = (0..c).collect();
    // Stable sort keeps ties in column order.
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let order = &order[..q];

    let sigma_max = norms[order[0]];
    let null_tol = sigma_max * 1e-13 * (r.max(c) as f64) + f64::MIN_POSITIVE;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(q);
    let mut sigma = Vec::with_capacity(q);
    let mut pending = Vec::new();
    for (slot, &j) in order.iter().enumerate() {
        let s = norms[j];
        if s > null_tol {
            u_cols.push(a[j].iter().map(|x| x / s).collect());
            sigma.push(s);
        } else {
            u_cols.push(vec![0.0; r]);
            sigma.push(0.0);
            pending.push(slot);
        }
    }
    complete_orthonormal(&mut u_cols, &pending);

    let u = Matrix::from_columns(&u_cols)?;
    let v_sel: Vec<Vec<f64>> = order.iter().map(|&j| v[j].clone()).collect();
    let v = Matrix::from_columns(&v_sel)?;
    Ok((u, sigma, v))
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, cs: f64, sn: f64) {
    let (lo, hi) = cols.split_at_mut(q);
    let (x, y) = (&mut lo[p], &mut hi[0]);
    for (xi, yi) in x.iter_mut().zip(y.iter_mut()) {
        let (a, b) = (*xi, *yi);
        *xi = cs * a - sn * b;
        *yi = sn * a + cs * b;
    }
}

/// Fills the columns listed in `pending` with unit vectors orthogonal to all
/// other columns (Gram-Schmidt against the standard basis).
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize]) {
    if pending.is_empty() {
        return;
    }
    let r = cols[0].len();
    let mut basis = 0;
    for &slot in pending {
        while basis < r {
            let mut cand = vec![0.0; r];
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for (k, col) in cols.iter().enumerate() {
                    if k == slot || (pending.contains(&k) && col.iter().all(|&x| x == 0.0)) {
                        continue;
                    }
                    let proj = dot(&cand, col);
                    axpy(-proj, col, &mut cand);
                }
            }
            let norm = dot(&cand, &cand).sqrt();
            if norm > 1e-8 {
                cols[slot] = cand.iter().map(|x| x / norm).collect();
                break;
            }
        }
    }
}

fn fix_signs(u: &mut Matrix, v: &mut Matrix) {
    for k in 0..v.cols() {
        let mut best = 0.0f64;
        let mut best_val = 0.0;
        for j in 0..v.rows() {
            let x = v.get(j, k);
            if x.abs() > best {
                best = x.abs();
                best_val = x;
            }
        }
        if best_val < 0.0 {
            for j in 0..v.rows() {
                v.set(j, k, -v.get(j, k));
            }
            for i in 0..u.rows() {
                u.set(i, k, -u.get(i, k));
            }
        }
    }
}

/// Moore-Penrose pseudo-inverse via SVD with relative cutoff `rcond`.
/// Returns the inverse and the numerical rank.
pub fn pinv(m: &Matrix, rcond: f64) -> Result<(Matrix, usize), NumericsError> {
    let s = svd(m)?;
    let cutoff = rcond * s.sigma.first().copied().unwrap_or(0.0);
    let rank = s.sigma.iter().filter(|&&x| x > cutoff).count();
    let mut out = Matrix::zeros(m.cols(), m.rows());
    for k in 0..rank {
        let inv = 1.0 / s.sigma[k];
        for i in 0..m.cols() {
            let vik = s.v.get(i, k) * inv;
            if vik == 0.0 {
                continue;
            }
            let row = out.row_mut(i);
            for (j, o) in row.iter_mut().enumerate() {
                *o += vik * s.u.get(j, k);
            }
        }
    }
    Ok((out, rank))
}

/// Least squares `min |a x - b|` via the pseudo-inverse. Returns the
/// coefficients and the numerical rank of `a`.
pub fn lstsq(a: &Matrix, b: &[f64]) -> Result<(Vec<f64>, usize), NumericsError> {
    if a.rows() != b.len() {
        return Err(NumericsError::DimensionMismatch {
            expected: a.rows(),
            found: b.len(),
        });
    }
    let (p, rank) = pinv(a, 1e-10)?;
    Ok((p.mul_vec(b)?, rank))
}

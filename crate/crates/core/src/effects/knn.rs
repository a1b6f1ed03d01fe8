use serde::{Deserialize, Serialize};

use super::EffectsError;
use crate::numerics::Matrix;

/// Indices of the `k` points of arm `arm` closest to `query` in Euclidean
/// distance, nearest first. Ties go to the lower index. `exclude` removes
/// one index from consideration.
pub fn knn_query(
    points: &Matrix,
    arms: &[u8],
    query: &[f64],
    arm: u8,
    k: usize,
    exclude: Option<usize>,
) -> Result<Vec<usize>, EffectsError> {
    if arms.len() != points.rows() || query.len() != points.cols() {
        return Err(EffectsError::InvalidArgument("query or arm labels do not match the points".into()));
    }
    let mut cand: Vec<(f64, usize)> = (0..points.rows())
        .filter(|&i| arms[i] == arm && Some(i) != exclude)
        .map(|i| {
            let d2 = points
                .row(i)
                .iter()
                .zip(query)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            (d2, i)
        })
        .collect();
    if cand.is_empty() {
        return Err(EffectsError::EmptyArm { arm });
    }
    let k = k.min(cand.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    Ok(cand.into_iter().map(|(_, i)| i).collect())
}

/// Per-column centering and scaling; constant columns are only centered.
pub fn standardize_columns(m: &Matrix) -> Matrix {
    let n = m.rows().max(1) as f64;
    let mut out = m.clone();
    for j in 0..m.cols() {
        let c = m.col(j);
        let mean = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = if var > 1e-24 { var.sqrt() } else { 1.0 };
        for i in 0..m.rows() {
            out.set(i, j, (m.get(i, j) - mean) / sd);
        }
    }
    out
}

/// Nearest-neighbour sets of every unit within each arm, with matching counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborIndex {
    /// Requested neighbours per arm after clipping to the arm sizes.
    pub n_neighbors: [usize; 2],
    /// `sets[i][d]`: neighbours of unit i among units with `D = d`.
    pub sets: Vec<[Vec<usize>; 2]>,
    /// `K_N(i)`: how often unit i serves as a neighbour within its own arm.
    pub counts: Vec<usize>,
    /// `sum_u 1{i in J(u)} / |J(u)|`; equals `K_N(i) / N` for equal set sizes.
    pub weights: Vec<f64>,
}

impl NeighborIndex {
    /// `include_self` lets a unit count as its own neighbour in its arm.
    /// `n_neighbors` larger than an arm is clipped with a warning.
    pub fn build(points: &Matrix, arms: &[u8], n_neighbors: usize, include_self: bool) -> Result<Self, EffectsError> {
        if n_neighbors == 0 {
            return Err(EffectsError::InvalidArgument("need at least one neighbour".into()));
        }
        let n = points.rows();
        let sizes = [
            arms.iter().filter(|&&a| a == 0).count(),
            arms.iter().filter(|&&a| a == 1).count(),
        ];
        let mut clipped = [n_neighbors; 2];
        for d in 0..2 {
            if sizes[d] == 0 {
                return Err(EffectsError::EmptyArm { arm: d as u8 });
            }
            let usable = if include_self { sizes[d] } else { sizes[d] - 1 };
            if usable == 0 {
                return Err(EffectsError::InvalidArgument(format!(
                    "arm {d} has a single unit and self-matching is disabled"
                )));
            }
            if n_neighbors > usable {
                log::warn!("arm {d} has {usable} candidate neighbours; N clipped from {n_neighbors}");
                clipped[d] = usable;
            }
        }
        let mut sets = Vec::with_capacity(n);
        let mut counts = vec![0usize; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let q = points.row(i);
            let mut pair: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
            for d in 0..2u8 {
                let exclude = (!include_self && arms[i] == d).then_some(i);
                let set = knn_query(points, arms, q, d, clipped[d as usize], exclude)?;
                let w = 1.0 / set.len() as f64;
                for &j in &set {
                    counts[j] += 1;
                    weights[j] += w;
                }
                pair[d as usize] = set;
            }
            sets.push(pair);
        }
        Ok(Self {
            n_neighbors: clipped,
            sets,
            counts,
            weights,
        })
    }
}

/// `ceil(n^0.4)`.
pub fn default_neighbors(n: usize) -> usize {
    ((n as f64).powf(0.4).ceil() as usize).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_example() {
        let pts = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![3.0]]).unwrap();
        let r = knn_query(&pts, &[0, 0, 0], &[0.9], 0, 2, None).unwrap();
        assert_eq!(r, vec![1, 0]);
    }

    #[test]
    fn ties_go_to_lower_index_and_large_k_returns_arm() {
        let pts = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![5.0]]).unwrap();
        let arms = [1, 0, 1, 1];
        assert_eq!(knn_query(&pts, &arms, &[1.0], 1, 1, None).unwrap(), vec![0]);
        assert_eq!(knn_query(&pts, &arms, &[1.0], 1, 2, Some(0)).unwrap(), vec![2, 3]);
        assert_eq!(knn_query(&pts, &arms, &[0.0], 1, 10, None).unwrap(), vec![0, 2, 3]);
        assert!(matches!(
            knn_query(&pts, &[1, 1, 1, 1], &[0.0], 0, 1, None),
            Err(EffectsError::EmptyArm { arm: 0 })
        ));
    }

    #[test]
    fn counts_are_conserved() {
        let mut rng = crate::numerics::Rng::new(3, 0);
        let n = 40;
        let pts = Matrix::from_fn(n, 3, |_, _| rng.normal());
        let arms: Vec<u8> = (0..n).map(|i| (i % 3 == 0) as u8).collect();
        let idx = NeighborIndex::build(&pts, &arms, 4, true).unwrap();
        for d in 0..2u8 {
            let total: usize = (0..n).filter(|&i| arms[i] == d).map(|i| idx.counts[i]).sum();
            assert_eq!(total, n * 4);
        }
        for i in 0..n {
            assert!((idx.weights[i] - idx.counts[i] as f64 / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn neighbours_are_clipped_to_arm_size() {
        let pts = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let idx = NeighborIndex::build(&pts, &[0, 1, 1, 1], 2, true).unwrap();
        assert_eq!(idx.n_neighbors, [1, 2]);
        let idx = NeighborIndex::build(&pts, &[0, 0, 1, 1], 2, false).unwrap();
        assert_eq!(idx.n_neighbors, [1, 1]);
        assert_eq!(idx.sets[0][0], vec![1]);
    }

    #[test]
    fn default_neighbors_rate() {
        assert_eq!(default_neighbors(200), 9);
        assert_eq!(default_neighbors(100), 7);
        assert_eq!(default_neighbors(1), 1);
    }
}

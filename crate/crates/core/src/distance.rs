//! Pairwise L2 distances, threshold selection and the connectivity graph.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::PooledSample;

/// Symmetric matrix of Euclidean distances between observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    d: DMatrix<f64>,
}

impl DistanceMatrix {
    /// Wraps a dense matrix after checking it is a valid distance matrix.
    pub fn from_dense(d: DMatrix<f64>) -> Result<Self> {
        if !d.is_square() {
            return Err(Error::InvalidConfig("distance matrix must be square".into()));
        }
        let n = d.nrows();
        for i in 0..n {
            if d[(i, i)] != 0.0 {
                return Err(Error::InvalidConfig(format!("non-zero diagonal at {i}")));
            }
            for j in (i + 1)..n {
                let v = d[(i, j)];
                if !(v >= 0.0 && v.is_finite()) || v != d[(j, i)] {
                    return Err(Error::InvalidConfig(format!(
                        "entry ({i}, {j}) is negative, non-finite or asymmetric"
                    )));
                }
            }
        }
        Ok(Self { d })
    }

    pub fn n(&self) -> usize {
        self.d.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// The `n(n-1)/2` distances above the diagonal, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n();
        let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                out.push(self.d[(i, j)]);
            }
        }
        out
    }
}

/// Euclidean distances between the columns of `data`.
///
/// Rows of the upper triangle are computed independently (in parallel) and
/// mirrored, so each entry is written exactly once.
pub fn pairwise_distances_of(data: &DMatrix<f64>) -> DistanceMatrix {
    let n = data.ncols();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = data.column(i);
            ((i + 1)..n)
                .map(|j| {
                    xi.iter()
                        .zip(data.column(j).iter())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        })
        .collect();
    let mut d = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + 1 + off;
            d[(i, j)] = v;
            d[(j, i)] = v;
        }
    }
    DistanceMatrix { d }
}

pub fn pairwise_distances(sample: &PooledSample) -> DistanceMatrix {
    pairwise_distances_of(sample.data())
}

/// Index (0-based) of the lower empirical `q`-quantile among `m` sorted values:
/// the `ceil(q m)`-th smallest, clamped to `1..=m`.
pub(crate) fn lower_quantile_rank(q: f64, m: usize) -> usize {
    let r = (q * m as f64).ceil() as usize;
    r.clamp(1, m) - 1
}

/// Lower empirical `q`-quantile of the off-diagonal distances.
pub fn select_tau(dmat: &DistanceMatrix, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(format!("tau quantile must lie in (0, 1), got {q}")));
    }
    if dmat.n() < 2 {
        return Err(Error::InvalidConfig("need at least two observations".into()));
    }
    let mut values = dmat.upper_triangle();
    if values.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDistances);
    }
    let rank = lower_quantile_rank(q, values.len());
    let (_, tau, _) = values.select_nth_unstable_by(rank, f64::total_cmp);
    Ok(*tau)
}

/// Binary adjacency `a_ij = 1` iff `d_ij <= tau` for `i != j`; diagonal is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityGraph {
    n: usize,
    tau: f64,
    adj: Vec<u8>,
}

impl ConnectivityGraph {
    /// Graph on `n` vertices with the given undirected edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], tau: f64) -> Self {
        let mut adj = vec![0u8; n * n];
        for &(i, j) in edges {
            assert!(i != j && i < n && j < n, "invalid edge ({i}, {j})");
            adj[i * n + j] = 1;
            adj[j * n + i] = 1;
        }
        Self { n, tau, adj }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    #[inline]
    pub fn connected(&self, i: usize, j: usize) -> bool {
        self.adj[i * self.n + j] != 0
    }

    /// Row `i` of the adjacency matrix as 0/1 bytes.
    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        &self.adj[i * self.n..(i + 1) * self.n]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.row(i).iter().map(|&a| a as usize).sum()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|&a| a as usize).sum::<usize>() / 2
    }

    /// Graph on observations reindexed so that new vertex `v` is old vertex `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let n = self.n;
        let mut adj = vec![0u8; n * n];
        for a in 0..n {
            for b in 0..n {
                adj[a * n + b] = self.adj[perm[a] * n + perm[b]];
            }
        }
        Self { n, tau: self.tau, adj }
    }
}

pub fn connectivity(dmat: &DistanceMatrix, tau: f64) -> Result<ConnectivityGraph> {
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(format!("tau must be positive, got {tau}")));
    }
    let n = dmat.n();
    let mut adj = vec![0u8; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j && dmat.get(i, j) <= tau {
                adj[i * n + j] = 1;
            }
        }
    }
    Ok(ConnectivityGraph { n, tau, adj })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_sample;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn line(points: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, points.len(), points)
    }

    fn dist_from(values: &[f64]) -> DistanceMatrix {
        pairwise_distances_of(&line(values))
    }

    fn gaussian(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn one_dimensional_hand_values() {
        let d = dist_from(&[0.0, 3.0, 4.0]);
        let expected = DMatrix::from_row_slice(3, 3, &[0.0, 3.0, 4.0, 3.0, 0.0, 1.0, 4.0, 1.0, 0.0]);
        assert_eq!(d.as_matrix(), &expected);
    }

    #[test]
    fn three_four_five() {
        let d = pairwise_distances_of(&DMatrix::from_column_slice(2, 2, &[0.0, 0.0, 3.0, 4.0]));
        assert_eq!(d.get(0, 1), 5.0);
    }

    #[test]
    fn duplicated_columns_have_zero_distance() {
        let s = validate_sample(line(&[1.5, 1.5, 2.0, 7.0]), &[1, 1, 2, 2]).unwrap();
        let d = pairwise_distances(&s);
        assert_eq!(d.get(0, 1), 0.0);
        assert!(d.get(0, 2) > 0.0);
    }

    fn from_upper(values: &[f64]) -> DistanceMatrix {
        // three points with distances d01, d02, d12
        let m = DMatrix::from_row_slice(
            3,
            3,
            &[0.0, values[0], values[1], values[0], 0.0, values[2], values[1], values[2], 0.0],
        );
        DistanceMatrix::from_dense(m).unwrap()
    }

    #[test]
    fn tau_order_statistics() {
        let d = from_upper(&[1.0, 2.0, 3.0]);
        assert_eq!(select_tau(&d, 0.5).unwrap(), 2.0);
        assert_eq!(select_tau(&d, 0.25).unwrap(), 1.0);
        assert_eq!(select_tau(&d, 0.75).unwrap(), 3.0);
        let c = from_upper(&[2.5, 2.5, 2.5]);
        for q in [0.01, 0.3, 0.5, 0.99] {
            assert_eq!(select_tau(&c, q).unwrap(), 2.5);
        }
    }

    #[test]
    fn tau_errors() {
        let zero = from_upper(&[0.0, 0.0, 0.0]);
        assert_eq!(select_tau(&zero, 0.5), Err(Error::DegenerateDistances));
        let d = from_upper(&[1.0, 2.0, 3.0]);
        assert!(matches!(select_tau(&d, 1.0), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn connectivity_cases() {
        let d = dist_from(&[0.0, 3.0, 4.0]);
        let g = connectivity(&d, 1.0).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert!(g.connected(1, 2) && g.connected(2, 1));
        let full = connectivity(&d, 4.0).unwrap();
        assert_eq!(full.edge_count(), 3);
        let empty = connectivity(&d, 0.5).unwrap();
        assert_eq!(empty.edge_count(), 0);
        for i in 0..3 {
            assert!(!full.connected(i, i));
        }
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(DistanceMatrix::from_dense(m).is_err());
    }

    #[test]
    fn rotation_and_translation_invariance() {
        let x = gaussian(6, 25, 3);
        let base = pairwise_distances_of(&x);
        // random orthogonal matrix from the QR factor of a Gaussian matrix
        let q = gaussian(6, 6, 4).qr().q();
        let rotated = pairwise_distances_of(&(&q * &x));
        let shift = gaussian(6, 1, 5);
        let translated = pairwise_distances_of(&DMatrix::from_fn(6, 25, |r, c| x[(r, c)] + shift[r]));
        for i in 0..25 {
            for j in 0..25 {
                let b = base.get(i, j);
                assert_relative_eq!(rotated.get(i, j), b, max_relative = 1e-10, epsilon = 1e-12);
                assert_relative_eq!(translated.get(i, j), b, max_relative = 1e-10, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn squared_distance_moments_match_gaussian_theory() {
        // ||X_i - X_j||^2 for i.i.d. N(0, I_p) has mean 2p and variance 8p
        let p = 120;
        let x = gaussian(p, 200, 11);
        let d = pairwise_distances_of(&x);
        let sq: Vec<f64> = d.upper_triangle().iter().map(|v| v * v).collect();
        let m = sq.len() as f64;
        let mean = sq.iter().sum::<f64>() / m;
        let var = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        let p = p as f64;
        assert!((mean / (2.0 * p) - 1.0).abs() < 0.05, "mean {mean}");
        assert!((var / (8.0 * p) - 1.0).abs() < 0.20, "var {var}");
    }

    proptest! {
        #[test]
        fn threshold_monotone(seed in 0u64..500, t1 in 0.1f64..3.0, dt in 0.0f64..2.0) {
            let d = pairwise_distances_of(&gaussian(3, 12, seed));
            let g1 = connectivity(&d, t1).unwrap();
            let g2 = connectivity(&d, t1 + dt).unwrap();
            for i in 0..12 {
                for j in 0..12 {
                    prop_assert!(!g1.connected(i, j) || g2.connected(i, j));
                }
            }
        }

        #[test]
        fn tau_is_an_observed_distance(seed in 0u64..500, q in 0.01f64..0.99) {
            let d = pairwise_distances_of(&gaussian(2, 9, seed));
            let tau = select_tau(&d, q).unwrap();
            prop_assert!(d.upper_triangle().contains(&tau));
        }
    }
}

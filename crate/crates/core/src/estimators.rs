//! Connection-probability estimators.
//!
//! For observation `i` with group `g`, the within proportion is the fraction of
//! its `n_g - 1` group mates it is connected to, and the between proportion is
//! the fraction of the `n - n_g` other observations. The centred second-order
//! terms (`p12`) are evaluated through row sums:
//!
//! ```text
//! sum_{m != j, both != i} d_im d_ij = (sum_m d_im)^2 - sum_m d_im^2
//! ```
//!
//! which turns the naive `O(n^3)` triple loop into `O(n^2)`.

use crate::distance::ConnectivityGraph;
use crate::model::GroupLayout;

/// All connection-probability estimates for one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionProbabilities {
    pub p_bet: Vec<f64>,
    pub p_in: Vec<f64>,
    pub p0_i: Vec<f64>,
    pub p12_i: Vec<f64>,
    pub p0: f64,
    pub p12: f64,
    pub p22: f64,
}

/// Pooled connection probability and its centred second-order moment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalProbabilities {
    pub p0: f64,
    pub p12: f64,
    pub p22: f64,
}

/// Per-observation between-group and within-group connection proportions.
pub fn within_between(graph: &ConnectivityGraph, layout: &GroupLayout) -> (Vec<f64>, Vec<f64>) {
    let n = graph.n();
    assert_eq!(n, layout.n(), "graph and sample disagree on n");
    let mut p_bet = Vec::with_capacity(n);
    let mut p_in = Vec::with_capacity(n);
    for i in 0..n {
        let g = layout.group(i);
        let (mut within, mut between) = (0usize, 0usize);
        for (j, &a) in graph.row(i).iter().enumerate() {
            if a != 0 {
                if layout.group(j) == g {
                    within += 1;
                } else {
                    between += 1;
                }
            }
        }
        let ng = layout.size_of(i);
        p_bet.push(between as f64 / (n - ng) as f64);
        p_in.push(within as f64 / (ng - 1) as f64);
    }
    (p_bet, p_in)
}

/// `(sum_m d_m)^2 - sum_m d_m^2` for a row with `degree` ones among `n - 1`
/// entries, each centred at `center`.
#[inline]
fn centred_pair_sum(degree: usize, n: usize, center: f64) -> f64 {
    let ones = degree as f64;
    let zeros = (n - 1 - degree) as f64;
    let sum = ones * (1.0 - center) - zeros * center;
    let sum_sq = ones * (1.0 - center).powi(2) + zeros * center * center;
    sum * sum - sum_sq
}

/// Per-observation `p0` and `p12` estimates, each centred on the row's own `p0`.
///
/// `p12_i` is normalised by the exact number of `(m, j)` terms, `(n-1)(n-2)`.
pub fn p0_p12_per_i(graph: &ConnectivityGraph) -> (Vec<f64>, Vec<f64>) {
    let n = graph.n();
    assert!(n >= 3, "need at least three observations");
    let terms = ((n - 1) * (n - 2)) as f64;
    (0..n)
        .map(|i| {
            let degree = graph.degree(i);
            let p0 = degree as f64 / (n - 1) as f64;
            (p0, centred_pair_sum(degree, n, p0) / terms)
        })
        .unzip()
}

pub fn p0_p12_global(graph: &ConnectivityGraph) -> GlobalProbabilities {
    let n = graph.n();
    assert!(n >= 3, "need at least three observations");
    let degrees: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    let p0 = degrees.iter().sum::<usize>() as f64 / (n * (n - 1)) as f64;
    let total: f64 = degrees.iter().map(|&deg| centred_pair_sum(deg, n, p0)).sum();
    let p12 = total / (n * (n - 1) * (n - 2)) as f64;
    GlobalProbabilities { p0, p12, p22: p0 * (1.0 - p0) }
}

pub fn connection_probabilities(
    graph: &ConnectivityGraph,
    layout: &GroupLayout,
) -> ConnectionProbabilities {
    let (p_bet, p_in) = within_between(graph, layout);
    let (p0_i, p12_i) = p0_p12_per_i(graph);
    let GlobalProbabilities { p0, p12, p22 } = p0_p12_global(graph);
    ConnectionProbabilities { p_bet, p_in, p0_i, p12_i, p0, p12, p22 }
}

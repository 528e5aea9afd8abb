//! The maximum-of-differences (MOD) statistic, its Monte Carlo calibration and
//! plug-in power diagnostics.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{estimate_sigma, inv_sqrt, MaxSquareSampler};
use crate::distance::{lower_quantile_rank, ConnectivityGraph};
use crate::error::{Error, Result};
use crate::estimators::ConnectionProbabilities;
use crate::model::{GroupLayout, PooledSample, TestConfig, TestReport};
use crate::pipeline::Prepared;
use crate::rng::derive_seed;

/// Standardized within/between differences `T_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModComponents {
    pub t: Vec<f64>,
    pub variance_terms: Vec<f64>,
    /// Observations connected to none or to all others. Their variance term
    /// and their difference are both zero, and their `T_i` is set to zero.
    pub degenerate: Vec<usize>,
}

impl ModComponents {
    /// `T = max_i T_i^2`.
    pub fn statistic(&self) -> f64 {
        self.t.iter().fold(0.0, |m, v| m.max(v * v))
    }
}

/// Errors only when every observation is degenerate.
pub fn mod_components(probs: &ConnectionProbabilities, layout: &GroupLayout) -> Result<ModComponents> {
    let n = layout.n();
    let mut t = Vec::with_capacity(n);
    let mut variance_terms = Vec::with_capacity(n);
    let mut degenerate = Vec::new();
    for i in 0..n {
        let ng = layout.size_of(i) as f64;
        let weight = 1.0 / (n as f64 - ng) + 1.0 / (ng - 1.0);
        let p0 = probs.p0_i[i];
        let var = weight * (p0 * (1.0 - p0) - probs.p12_i[i]);
        if var > 0.0 {
            t.push((probs.p_bet[i] - probs.p_in[i]) / var.sqrt());
        } else {
            degenerate.push(i);
            t.push(0.0);
        }
        variance_terms.push(var);
    }
    if degenerate.len() == n {
        return Err(Error::DegenerateVariance { observation: Some(0) });
    }
    Ok(ModComponents { t, variance_terms, degenerate })
}

/// Result of the replication calibration of a max-square statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// `(1 + #{draws >= T}) / (B N + 1)` over all draws.
    pub p_pooled: f64,
    /// Fraction of replications `b` with `T > J_b`.
    pub p_mod: f64,
    /// Median of the replicate critical values `J_b`.
    pub critical: f64,
    pub replicate_critical: Vec<f64>,
}

/// Calibrates `statistic` against `outer` blocks of `inner` Gaussian max-square
/// draws; block `b` is seeded from `(seed, b)`.
pub fn calibrate_max_sq(
    statistic: f64,
    sampler: &MaxSquareSampler,
    alpha: f64,
    outer: usize,
    inner: usize,
    seed: u64,
) -> Calibration {
    let rank = lower_quantile_rank(1.0 - alpha, inner);
    let blocks: Vec<(f64, usize)> = (0..outer)
        .into_par_iter()
        .map(|b| {
            let mut draws = sampler.draw(inner, derive_seed(seed, &[b as u64]));
            let exceed = draws.iter().filter(|&&v| v >= statistic).count();
            let (_, j, _) = draws.select_nth_unstable_by(rank, f64::total_cmp);
            (*j, exceed)
        })
        .collect();
    let total = (outer * inner) as f64;
    let exceed: usize = blocks.iter().map(|b| b.1).sum();
    let replicate_critical: Vec<f64> = blocks.iter().map(|b| b.0).collect();
    let above = replicate_critical.iter().filter(|&&j| statistic > j).count();
    Calibration {
        p_pooled: (1.0 + exceed as f64) / (total + 1.0),
        p_mod: above as f64 / outer as f64,
        critical: median(&replicate_critical),
        replicate_critical,
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Runs the full MOD pipeline with Monte Carlo calibration.
pub fn mod_test(sample: &PooledSample, config: &TestConfig) -> Result<TestReport> {
    Prepared::new(sample, config)?.mod_report(config)
}

/// Group-level connection frequencies and centred second-order terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionStructure {
    /// Frequency of `a_ij = 1` over `i` in group `k`, `j` in group `l`, `i != j`.
    pub p_kl: DMatrix<f64>,
    /// `p_gkl[g][(k, l)]`: mean of `(a_ij - p_gk)(a_it - p_gl)` over `i` in
    /// group `g`, `j` in `k`, `t` in `l`, with `i, j, t` distinct.
    pub p_gkl: Vec<DMatrix<f64>>,
    /// Group proportions `n_k / n`.
    pub gamma: Vec<f64>,
}

pub fn connection_structure(graph: &ConnectivityGraph, layout: &GroupLayout) -> ConnectionStructure {
    let n = layout.n();
    let k = layout.k();
    let sizes = layout.sizes();
    let gamma: Vec<f64> = sizes.iter().map(|&s| s as f64 / n as f64).collect();

    // degree of each observation into each group
    let mut deg = vec![0usize; n * k];
    for i in 0..n {
        for (j, &a) in graph.row(i).iter().enumerate() {
            deg[i * k + layout.group(j)] += a as usize;
        }
    }

    let mut edges = DMatrix::<f64>::zeros(k, k);
    for i in 0..n {
        for l in 0..k {
            edges[(layout.group(i), l)] += deg[i * k + l] as f64;
        }
    }
    let p_kl = DMatrix::from_fn(k, k, |a, b| {
        let pairs = sizes[a] * sizes[b] - if a == b { sizes[a] } else { 0 };
        edges[(a, b)] / pairs as f64
    });

    let mut sums = vec![DMatrix::<f64>::zeros(k, k); k];
    for i in 0..n {
        let g = layout.group(i);
        let mates: Vec<f64> = (0..k).map(|c| (sizes[c] - usize::from(c == g)) as f64).collect();
        let centred: Vec<(f64, f64)> = (0..k)
            .map(|c| {
                let d = deg[i * k + c] as f64;
                let p = p_kl[(g, c)];
                let sum = d - mates[c] * p;
                let sum_sq = d * (1.0 - p) * (1.0 - p) + (mates[c] - d) * p * p;
                (sum, sum_sq)
            })
            .collect();
        for a in 0..k {
            for b in 0..k {
                let (terms, value) = if a == b {
                    (mates[a] * (mates[a] - 1.0), centred[a].0 * centred[a].0 - centred[a].1)
                } else {
                    (mates[a] * mates[b], centred[a].0 * centred[b].0)
                };
                if terms > 0.0 {
                    sums[g][(a, b)] += value / terms;
                }
            }
        }
    }
    let p_gkl = sums
        .into_iter()
        .enumerate()
        .map(|(g, s)| s / sizes[g] as f64)
        .collect();
    ConnectionStructure { p_kl, p_gkl, gamma }
}

/// Plug-in discrepancy measures for the MOD and CA-MOD power analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerDiagnostics {
    pub nu_hat: Vec<f64>,
    pub omega_hat: Vec<f64>,
    pub p_kl_hat: DMatrix<f64>,
    /// Whether the eigenvalue floor fired in the inverse square root for `omega_hat`.
    pub clipped: bool,
}

/// Plug-in `nu_i` and `omega` computed with group proportions `n_k / n`.
///
/// The second-order terms are averaged over the members of each group, so
/// `nu_hat` is constant within a group.
pub fn power_diagnostics(
    graph: &ConnectivityGraph,
    layout: &GroupLayout,
    ridge: f64,
) -> Result<PowerDiagnostics> {
    let n = layout.n();
    if n < 3 {
        return Err(Error::InvalidConfig("power diagnostics need n >= 3".into()));
    }
    let k = layout.k();
    let ConnectionStructure { p_kl, p_gkl, gamma } = connection_structure(graph, layout);

    let mut nu_group = vec![0.0; k];
    let mut delta_group = vec![0.0; k];
    for g in 0..k {
        let mean: f64 = (0..k).map(|s| gamma[s] * p_kl[(g, s)]).sum();
        let mut delta = 0.0;
        for a in 0..k {
            for b in 0..k {
                delta += gamma[a]
                    * gamma[b]
                    * (p_gkl[g][(a, b)] + (p_kl[(g, a)] - mean) * (p_kl[(g, b)] - mean));
            }
        }
        let between: f64 = (0..k)
            .filter(|&c| c != g)
            .map(|c| gamma[c] / (1.0 - gamma[g]) * p_kl[(g, c)])
            .sum();
        let denom = mean * (1.0 - mean) - delta;
        if !(denom > 0.0) {
            let first = layout.membership().iter().position(|&m| m == g);
            return Err(Error::DegenerateVariance { observation: first });
        }
        nu_group[g] = (between - p_kl[(g, g)]).powi(2) / denom;
        delta_group[g] = delta;
    }
    let nu_hat: Vec<f64> = (0..n).map(|i| nu_group[layout.group(i)]).collect();

    let mut p0_alt = 0.0;
    for a in 0..k {
        for b in 0..k {
            p0_alt += gamma[a] * gamma[b] * p_kl[(a, b)];
        }
    }
    let p12_alt: f64 = (0..k).map(|g| gamma[g] * delta_group[g]).sum();
    let sigma_alt = estimate_sigma(p0_alt, p12_alt, layout)?.materialize();
    let root = inv_sqrt(&sigma_alt, ridge)?;
    let omega = &root.matrix * DVector::from_iterator(n, nu_hat.iter().map(|v| v.sqrt()));

    Ok(PowerDiagnostics {
        nu_hat,
        omega_hat: omega.iter().copied().collect(),
        p_kl_hat: p_kl,
        clipped: root.clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::estimate_sigma;
    use crate::distance::{connectivity, pairwise_distances};
    use crate::estimators::connection_probabilities;
    use crate::estimators::tests::toy;
    use crate::model::validate_sample;
    use rand::Rng;

    #[test]
    fn toy_statistic() {
        let (g, layout) = toy();
        let probs = connection_probabilities(&g, &layout);
        let c = mod_components(&probs, &layout).unwrap();
        // variance term (1/2 + 1)(2/9 + 1/9) = 1/2, numerator -1
        for (&t, &v) in c.t.iter().zip(&c.variance_terms) {
            assert!((v - 0.5).abs() < 1e-15);
            assert!((t + 2f64.sqrt()).abs() < 1e-14);
        }
        assert!((c.statistic() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn identical_observations_are_degenerate() {
        let x = DMatrix::from_element(3, 6, 1.25);
        let s = validate_sample(x, &[1, 1, 1, 2, 2, 2]).unwrap();
        let d = pairwise_distances(&s);
        let g = connectivity(&d, 1.0).unwrap();
        let probs = connection_probabilities(&g, s.layout());
        assert_eq!(
            mod_components(&probs, s.layout()),
            Err(Error::DegenerateVariance { observation: Some(0) })
        );
    }

    #[test]
    fn isolated_observation_contributes_zero() {
        // 0.5 and 10.0 are linked across groups; 30.0 is out of reach
        let x = DMatrix::from_row_slice(1, 6, &[0.0, 0.5, 30.0, 10.0, 10.4, 0.7]);
        let s = validate_sample(x, &[1, 1, 1, 2, 2, 2]).unwrap();
        let g = connectivity(&pairwise_distances(&s), 1.0).unwrap();
        assert_eq!(g.degree(2), 0);
        let c = mod_components(&connection_probabilities(&g, s.layout()), s.layout()).unwrap();
        assert_eq!(c.degenerate, vec![2]);
        assert_eq!(c.t[2], 0.0);
        assert!(c.t.iter().all(|t| t.is_finite()));
        let report = mod_test(&s, &TestConfig { tau: crate::model::TauSpec::Threshold(1.0), ..Default::default() }).unwrap();
        assert_eq!(report.warnings.len(), 1);
    }

    #[test]
    fn equal_proportions_give_zero_statistic() {
        let probs = ConnectionProbabilities {
            p_bet: vec![0.4; 6],
            p_in: vec![0.4; 6],
            p0_i: vec![0.4; 6],
            p12_i: vec![0.01; 6],
            p0: 0.4,
            p12: 0.01,
            p22: 0.24,
        };
        let layout = GroupLayout::contiguous(&[3, 3]).unwrap();
        assert_eq!(mod_components(&probs, &layout).unwrap().statistic(), 0.0);
    }

    fn sampler() -> MaxSquareSampler {
        let layout = GroupLayout::contiguous(&[10, 20]).unwrap();
        let sigma = estimate_sigma(0.5, 0.02, &layout).unwrap().materialize();
        MaxSquareSampler::new(&sigma, 1e-10).unwrap()
    }

    #[test]
    fn calibration_extremes() {
        let s = sampler();
        let zero = calibrate_max_sq(0.0, &s, 0.05, 20, 50, 1);
        assert!((zero.p_pooled - 1.0).abs() < 1e-12);
        assert_eq!(zero.p_mod, 0.0);

        let huge = calibrate_max_sq(1e9, &s, 0.05, 20, 50, 1);
        assert_eq!(huge.p_pooled, 1.0 / 1001.0);
        assert_eq!(huge.p_mod, 1.0);
        assert_eq!(huge.critical, zero.critical);
        assert!(huge.replicate_critical.iter().all(|&j| j > 0.0));
    }

    #[test]
    fn calibration_is_thread_independent() {
        let s = sampler();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let three = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let a = one.install(|| calibrate_max_sq(9.0, &s, 0.05, 7, 300, 42));
        let b = three.install(|| calibrate_max_sq(9.0, &s, 0.05, 7, 300, 42));
        assert_eq!(a, b);
    }

    #[test]
    fn toy_power_diagnostics_positive() {
        let (g, layout) = toy();
        let diag = power_diagnostics(&g, &layout, 1e-10).unwrap();
        // p_11 = p_22 = 1, p_12 = 0, second-order terms vanish: nu = 1 / 0.25
        for &v in &diag.nu_hat {
            assert!((v - 4.0).abs() < 1e-12, "{v}");
        }
        assert_eq!(diag.p_kl_hat, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn balanced_connection_frequencies_give_zero_nu() {
        // two groups of three; one within edge per group (p_kk = 1/3) and three
        // of nine between pairs connected (p_12 = 1/3)
        let layout = GroupLayout::contiguous(&[3, 3]).unwrap();
        let g = ConnectivityGraph::from_edges(6, &[(0, 1), (3, 4), (0, 3), (1, 5), (2, 4)], 1.0);
        let diag = power_diagnostics(&g, &layout, 1e-10).unwrap();
        for a in 0..2 {
            for b in 0..2 {
                assert!((diag.p_kl_hat[(a, b)] - 1.0 / 3.0).abs() < 1e-15);
            }
        }
        assert!(diag.nu_hat.iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn second_order_terms_match_brute_force() {
        let mut rng = crate::rng::rng_from(9);
        let layout = GroupLayout::contiguous(&[4, 6, 5]).unwrap();
        let n = layout.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen::<f64>() < 0.45 {
                    edges.push((i, j));
                }
            }
        }
        let g = ConnectivityGraph::from_edges(n, &edges, 1.0);
        let s = connection_structure(&g, &layout);
        let a = |i: usize, j: usize| g.connected(i, j) as u8 as f64;
        for grp in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut acc = 0.0;
                    let members: Vec<usize> = (0..n).filter(|&i| layout.group(i) == grp).collect();
                    for &i in &members {
                        let (mut sum, mut count) = (0.0, 0.0);
                        for j in (0..n).filter(|&j| layout.group(j) == k && j != i) {
                            for t in (0..n).filter(|&t| layout.group(t) == l && t != i && t != j) {
                                sum += (a(i, j) - s.p_kl[(grp, k)]) * (a(i, t) - s.p_kl[(grp, l)]);
                                count += 1.0;
                            }
                        }
                        acc += sum / count;
                    }
                    let expected = acc / members.len() as f64;
                    assert!((s.p_gkl[grp][(k, l)] - expected).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nu_is_permutation_equivariant() {
        use rand::seq::SliceRandom;
        let mut rng = crate::rng::rng_from(4);
        let x = DMatrix::from_fn(3, 18, |r, c| (r as f64) * 0.1 + if c < 9 { 0.0 } else { 0.8 } + rng.gen::<f64>());
        let labels: Vec<usize> = (0..18).map(|c| if c < 9 { 1 } else { 2 }).collect();
        let s = validate_sample(x.clone(), &labels).unwrap();
        let d = pairwise_distances(&s);
        let g = connectivity(&d, crate::distance::select_tau(&d, 0.5).unwrap()).unwrap();
        let base = power_diagnostics(&g, s.layout(), 1e-10).unwrap();

        let mut perm: Vec<usize> = (0..18).collect();
        perm.shuffle(&mut rng);
        let xp = DMatrix::from_fn(3, 18, |r, c| x[(r, perm[c])]);
        let lp: Vec<usize> = perm.iter().map(|&o| labels[o]).collect();
        let sp = validate_sample(xp, &lp).unwrap();
        let dp = pairwise_distances(&sp);
        let gp = connectivity(&dp, crate::distance::select_tau(&dp, 0.5).unwrap()).unwrap();
        let moved = power_diagnostics(&gp, sp.layout(), 1e-10).unwrap();
        for (v, &o) in perm.iter().enumerate() {
            assert!((moved.nu_hat[v] - base.nu_hat[o]).abs() < 1e-12);
            assert!((moved.omega_hat[v] - base.omega_hat[o]).abs() < 1e-8);
        }
    }
}

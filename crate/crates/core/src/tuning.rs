//! Data-driven scan over candidate threshold quantiles.
//!
//! For each candidate quantile `xi` the threshold is the `xi`-quantile of the
//! pairwise distances, and the objective is
//!
//! ```text
//! J(xi) = f(tau^2)^2 / (xi (1 - xi) - sum_{k,l} gamma_k gamma_l p_.kl)
//! ```
//!
//! where `f` is a histogram estimate (Freedman-Diaconis bins) of the density
//! of squared pairwise distances and `p_.kl` is the centred second-order
//! connection term averaged over observations. The default pipeline does not
//! run the scan; it uses the median.

use crate::distance::{connectivity, lower_quantile_rank, pairwise_distances, select_tau};
use crate::error::{Error, Result};
use crate::model::PooledSample;
use crate::modtest::connection_structure;

#[derive(Debug, Clone, PartialEq)]
pub struct TauScan {
    pub grid: Vec<f64>,
    pub objective: Vec<f64>,
    pub taus: Vec<f64>,
    pub selected: f64,
    pub selected_tau: f64,
}

/// Histogram density of a sample, with Freedman-Diaconis bin width.
#[derive(Debug, Clone)]
pub(crate) struct Histogram {
    origin: f64,
    width: f64,
    counts: Vec<usize>,
    total: usize,
}

impl Histogram {
    pub(crate) fn freedman_diaconis(values: &[f64]) -> Option<Self> {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let m = sorted.len();
        if m < 2 {
            return None;
        }
        let q = |p: f64| sorted[lower_quantile_rank(p, m)];
        let iqr = q(0.75) - q(0.25);
        let (lo, hi) = (sorted[0], sorted[m - 1]);
        let mut width = 2.0 * iqr / (m as f64).cbrt();
        if !(width > 0.0) {
            width = (hi - lo) / (m as f64).sqrt().ceil();
        }
        if !(width > 0.0) {
            return None;
        }
        let bins = (((hi - lo) / width).floor() as usize) + 1;
        let mut counts = vec![0usize; bins];
        for &v in &sorted {
            let b = (((v - lo) / width).floor() as usize).min(bins - 1);
            counts[b] += 1;
        }
        Some(Self { origin: lo, width, counts, total: m })
    }

    pub(crate) fn density(&self, x: f64) -> f64 {
        if x < self.origin {
            return 0.0;
        }
        let b = ((x - self.origin) / self.width).floor() as usize;
        match self.counts.get(b) {
            Some(&c) => c as f64 / (self.total as f64 * self.width),
            None => 0.0,
        }
    }
}

/// Index of the largest finite value; ties go to the candidate closest to 0.5,
/// then to the smaller candidate.
pub(crate) fn select_argmax(grid: &[f64], values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() {
            continue;
        }
        best = match best {
            None => Some(i),
            Some(b) => {
                let (bv, bd, cd) = (values[b], (grid[b] - 0.5).abs(), (grid[i] - 0.5).abs());
                let same_distance = (cd - bd).abs() <= 1e-12;
                let better = v > bv
                    || (v == bv && (cd < bd && !same_distance || same_distance && grid[i] < grid[b]));
                Some(if better { i } else { b })
            }
        };
    }
    best
}

pub fn scan_tau(sample: &PooledSample, grid: &[f64]) -> Result<TauScan> {
    if sample.n() < 20 {
        return Err(Error::InvalidConfig("threshold scan needs at least 20 observations".into()));
    }
    if grid.is_empty() || grid.iter().any(|&q| !(0.05..=0.95).contains(&q)) {
        return Err(Error::InvalidConfig("candidate quantiles must lie in [0.05, 0.95]".into()));
    }
    let dist = pairwise_distances(sample);
    let squared: Vec<f64> = dist.upper_triangle().iter().map(|d| d * d).collect();
    let hist = Histogram::freedman_diaconis(&squared).ok_or(Error::DegenerateDistances)?;
    let layout = sample.layout();

    let mut objective = Vec::with_capacity(grid.len());
    let mut taus = Vec::with_capacity(grid.len());
    for &xi in grid {
        let tau = select_tau(&dist, xi)?;
        let graph = connectivity(&dist, tau)?;
        let s = connection_structure(&graph, layout);
        let k = layout.k();
        let mut second = 0.0;
        for g in 0..k {
            for a in 0..k {
                for b in 0..k {
                    second += s.gamma[g] * s.gamma[a] * s.gamma[b] * s.p_gkl[g][(a, b)];
                }
            }
        }
        let denom = xi * (1.0 - xi) - second;
        let f = hist.density(tau * tau);
        objective.push(if denom > 0.0 { f * f / denom } else { f64::NAN });
        taus.push(tau);
    }
    let best = select_argmax(grid, &objective).ok_or(Error::NonFiniteObjective)?;
    Ok(TauScan {
        grid: grid.to_vec(),
        selected: grid[best],
        selected_tau: taus[best],
        objective,
        taus,
    })
}

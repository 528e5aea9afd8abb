//! Covariance-adjusted MOD (CA-MOD).
//!
//! The standardized differences are whitened with the inverse square root of
//! the estimated null covariance before taking the maximum of squares. After
//! centering by `2 log n - log log n` the statistic is calibrated against the
//! type-I extreme value law with CDF `exp(-pi^{-1/2} exp(-x/2))`.

use std::f64::consts::PI;

use nalgebra::DVector;

use crate::covariance::InvSqrt;
use crate::error::{Error, Result};
use crate::model::{PooledSample, TestConfig, TestReport};
use crate::modtest::ModComponents;
use crate::pipeline::Prepared;

#[derive(Debug, Clone, PartialEq)]
pub struct AdjustedComponents {
    pub m: Vec<f64>,
    pub clipped: bool,
}

impl AdjustedComponents {
    pub fn statistic(&self) -> f64 {
        self.m.iter().fold(0.0, |acc, v| acc.max(v * v))
    }
}

pub fn camod_statistic(components: &ModComponents, root: &InvSqrt) -> Result<AdjustedComponents> {
    let n = components.t.len();
    if root.matrix.nrows() != n || root.matrix.ncols() != n {
        return Err(Error::InvalidConfig(format!(
            "inverse square root is {}x{}, expected {n}x{n}",
            root.matrix.nrows(),
            root.matrix.ncols()
        )));
    }
    let m = &root.matrix * DVector::from_column_slice(&components.t);
    Ok(AdjustedComponents { m: m.iter().copied().collect(), clipped: root.clipped })
}

/// `t_adj - 2 log n + log log n` (natural logarithms).
pub fn gumbel_centering(t_adj: f64, n: usize) -> f64 {
    let ln_n = (n as f64).ln();
    t_adj - 2.0 * ln_n + ln_n.ln()
}

/// Upper tail `1 - exp(-pi^{-1/2} exp(-x/2))`.
pub fn gumbel_pvalue(x: f64) -> f64 {
    let rate = (-0.5 * x).exp() / PI.sqrt();
    (-(-rate).exp_m1()).clamp(0.0, 1.0)
}

/// `(1 - alpha)`-quantile `-log(pi) - 2 log(log(1/(1 - alpha)))`.
pub fn gumbel_critical(alpha: f64) -> f64 {
    -PI.ln() - 2.0 * (-(-alpha).ln_1p()).ln()
}

/// Runs the full CA-MOD pipeline.
pub fn camod_test(sample: &PooledSample, config: &TestConfig) -> Result<TestReport> {
    Prepared::new(sample, config)?.camod_report(config)
}

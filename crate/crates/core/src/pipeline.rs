//! Shared front half of both tests: distances, threshold, graph, estimators,
//! standardized differences and the null covariance.

use nalgebra::DMatrix;

use crate::camod::{camod_statistic, gumbel_centering, gumbel_critical, gumbel_pvalue};
use crate::covariance::{estimate_sigma, GroupStructuredCovariance, MaxSquareSampler};
use crate::distance::{connectivity, pairwise_distances, select_tau, ConnectivityGraph};
use crate::error::{Error, Result};
use crate::estimators::{connection_probabilities, ConnectionProbabilities};
use crate::model::{Decision, GroupLayout, Method, PooledSample, TauSpec, TestConfig, TestReport};
use crate::modtest::{calibrate_max_sq, mod_components, power_diagnostics, ModComponents};

/// Everything both tests need, computed once per sample.
#[derive(Debug, Clone)]
pub struct Prepared {
    layout: GroupLayout,
    p: usize,
    tau: f64,
    tau_quantile: Option<f64>,
    graph: ConnectivityGraph,
    probs: ConnectionProbabilities,
    components: ModComponents,
    sigma: GroupStructuredCovariance,
    dense: DMatrix<f64>,
    regression_d: Option<usize>,
    warnings: Vec<String>,
}

impl Prepared {
    pub fn new(sample: &PooledSample, config: &TestConfig) -> Result<Self> {
        config.validate()?;
        let n = sample.n();
        if n < 4 {
            return Err(Error::InvalidConfig("need at least four observations".into()));
        }
        let dist = pairwise_distances(sample);
        let (tau, tau_quantile) = match config.tau {
            TauSpec::Quantile(q) => (select_tau(&dist, q)?, Some(q)),
            TauSpec::Threshold(t) => (t, None),
        };
        let graph = connectivity(&dist, tau)?;
        let layout = sample.layout().clone();
        let probs = connection_probabilities(&graph, &layout);
        let components = mod_components(&probs, &layout)?;
        let mut warnings = Vec::new();
        if !components.degenerate.is_empty() {
            warnings.push(format!(
                "{} observation(s) connected to none or all others; their differences are set to 0",
                components.degenerate.len()
            ));
        }
        let sigma = estimate_sigma(probs.p0, probs.p12, &layout)?;
        let dense = sigma.materialize();
        Ok(Self {
            layout,
            p: sample.p(),
            tau,
            tau_quantile,
            graph,
            probs,
            components,
            sigma,
            dense,
            regression_d: None,
            warnings,
        })
    }

    /// Marks the sample as regression residuals with `d` covariates.
    pub fn with_regression(mut self, d: usize, warnings: Vec<String>) -> Self {
        self.regression_d = Some(d);
        self.warnings.extend(warnings);
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn graph(&self) -> &ConnectivityGraph {
        &self.graph
    }

    pub fn probabilities(&self) -> &ConnectionProbabilities {
        &self.probs
    }

    pub fn components(&self) -> &ModComponents {
        &self.components
    }

    pub fn sigma(&self) -> &GroupStructuredCovariance {
        &self.sigma
    }

    pub fn sigma_dense(&self) -> &DMatrix<f64> {
        &self.dense
    }

    fn base_report(&self, method: Method, config: &TestConfig) -> TestReport {
        let mut warnings = self.warnings.clone();
        let nu_hat = if config.diagnostics {
            match power_diagnostics(&self.graph, &self.layout, config.ridge) {
                Ok(d) => Some(d.nu_hat),
                Err(e) => {
                    warnings.push(format!("power diagnostics unavailable: {e}"));
                    None
                }
            }
        } else {
            None
        };
        TestReport {
            method,
            statistic: 0.0,
            centered_statistic: None,
            p_value: 1.0,
            p_mod_replicated: None,
            critical_value: 0.0,
            decision: Decision::Retain,
            alpha: config.alpha,
            tau: self.tau,
            tau_quantile: self.tau_quantile,
            p0_hat: self.probs.p0,
            p12_hat: self.probs.p12,
            nu_hat,
            n: self.layout.n(),
            p: self.p,
            k: self.layout.k(),
            group_sizes: self.layout.sizes().to_vec(),
            regression: self.regression_d.is_some(),
            d: self.regression_d,
            pd_clipped: false,
            seed: config.seed,
            warnings,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    /// MOD report calibrated by `mc_outer` blocks of `mc_inner` Gaussian draws.
    pub fn mod_report(&self, config: &TestConfig) -> Result<TestReport> {
        config.validate()?;
        let sampler = MaxSquareSampler::structured(&self.sigma, config.ridge)?;
        let statistic = self.components.statistic();
        let cal = calibrate_max_sq(
            statistic,
            &sampler,
            config.alpha,
            config.mc_outer,
            config.mc_inner,
            config.seed,
        );
        let mut report = self.base_report(Method::Mod, config);
        report.statistic = statistic;
        report.p_value = cal.p_pooled;
        report.p_mod_replicated = Some(cal.p_mod);
        report.critical_value = cal.critical;
        report.decision = Decision::from_reject(cal.p_pooled <= config.alpha);
        if sampler.used_fallback() {
            report.pd_clipped = true;
            report.warnings.push(
                "covariance estimate is not positive definite; sampled with floored eigenvalues".into(),
            );
        }
        Ok(report)
    }

    /// CA-MOD report with the closed-form extreme-value calibration.
    pub fn camod_report(&self, config: &TestConfig) -> Result<TestReport> {
        config.validate()?;
        let root = self.sigma.inv_sqrt(config.ridge)?;
        let adjusted = camod_statistic(&self.components, &root)?;
        let statistic = adjusted.statistic();
        let n = self.layout.n();
        let centered = gumbel_centering(statistic, n);
        let critical = gumbel_critical(config.alpha);
        let mut report = self.base_report(Method::Camod, config);
        report.statistic = statistic;
        report.centered_statistic = Some(centered);
        report.p_value = gumbel_pvalue(centered);
        report.critical_value = critical;
        report.decision = Decision::from_reject(centered >= critical);
        if adjusted.clipped {
            report.pd_clipped = true;
            report.warnings.push(
                "covariance estimate is not positive definite; eigenvalues were floored".into(),
            );
        }
        Ok(report)
    }

    pub fn report(&self, method: Method, config: &TestConfig) -> Result<TestReport> {
        match method {
            Method::Mod => self.mod_report(config),
            Method::Camod => self.camod_report(config),
        }
    }
}

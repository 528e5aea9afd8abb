use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::generate::{generate, Case, GeneratedSample, ScenarioSpec, Setting};
use crate::error::Result;
use crate::model::{Method, TestConfig};
use crate::pipeline::Prepared;
use crate::regression::regression_prepare;
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub method: Method,
    pub setting: Setting,
    pub case: Case,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// `None` when a replication failed; see `error`.
    pub rejection_rate: Option<f64>,
    pub rejections: usize,
    pub replications: usize,
    pub seed: u64,
    /// Seconds for the whole experiment (all methods share the data).
    pub wall_time: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentTable {
    pub fn rate(&self, method: Method) -> Option<f64> {
        self.rows.iter().find(|r| r.method == method).and_then(|r| r.rejection_rate)
    }
}

fn replicate(spec: &ScenarioSpec, methods: &[Method], config: &TestConfig, r: u64) -> Result<Vec<bool>> {
    let data = generate(spec, derive_seed(spec.seed, &[r, 0]))?;
    let config = config.clone().with_seed(derive_seed(spec.seed, &[r, 1]));
    let prepared = match &data {
        GeneratedSample::Pooled(s) => Prepared::new(s, &config)?,
        GeneratedSample::Regression(s) => regression_prepare(s, &config)?,
    };
    methods
        .iter()
        .map(|&m| Ok(prepared.report(m, &config)?.decision.is_reject()))
        .collect()
}

/// Rejection rates of `methods` over `spec.replications` datasets.
///
/// Replication `r` draws its data from `(spec.seed, r, 0)` and its Monte Carlo
/// stream from `(spec.seed, r, 1)`, so the table does not depend on the
/// number of threads. A failing replication turns every row into a failure
/// row carrying the first error.
pub fn run_experiment(spec: &ScenarioSpec, methods: &[Method], config: &TestConfig) -> Result<ExperimentTable> {
    config.validate()?;
    spec.validate()?;
    if spec.replications == 0 {
        return Ok(ExperimentTable::default());
    }
    let start = Instant::now();
    let outcomes: Vec<Result<Vec<bool>>> = (0..spec.replications as u64)
        .into_par_iter()
        .map(|r| replicate(spec, methods, config, r))
        .collect();
    let wall_time = start.elapsed().as_secs_f64();
    let failure = outcomes.iter().find_map(|o| o.as_ref().err()).map(|e| e.to_string());

    let rows = methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let rejections = match failure {
                Some(_) => 0,
                None => outcomes.iter().filter(|o| o.as_ref().is_ok_and(|v| v[m])).count(),
            };
            ExperimentRow {
                method,
                setting: spec.setting,
                case: spec.case,
                n: spec.n,
                p: spec.p,
                k: spec.k,
                rejection_rate: failure.is_none().then(|| rejections as f64 / spec.replications as f64),
                rejections,
                replications: spec.replications,
                seed: spec.seed,
                wall_time,
                error: failure.clone(),
            }
        })
        .collect();
    Ok(ExperimentTable { rows })
}

//! Nonparametric K-sample tests for high-dimensional data based on
//! within- and between-group connectivity at a distance threshold.
//!
//! Two tests are provided: MOD, the maximum of squared standardized
//! within/between differences calibrated by Gaussian replication, and
//! CA-MOD, which decorrelates the differences first and uses a closed-form
//! extreme-value calibration. Both extend to regression residuals.
//!
//! ```
//! use maxdiff::{camod_test, PooledSample, TestConfig};
//! use nalgebra::DMatrix;
//!
//! let a = DMatrix::from_fn(3, 10, |r, c| ((r * 7 + c * 3) % 5) as f64);
//! let b = DMatrix::from_fn(3, 12, |r, c| ((r * 5 + c * 2) % 7) as f64 + 4.0);
//! let sample = PooledSample::from_groups(&[a, b]).unwrap();
//! let report = camod_test(&sample, &TestConfig::default()).unwrap();
//! assert!(report.p_value <= 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camod;
pub mod covariance;
pub mod distance;
pub mod error;
pub mod estimators;
pub mod model;
pub mod modtest;
pub mod pipeline;
pub mod regression;
pub mod rng;
pub mod simbench;
pub mod tuning;

pub use nalgebra;

pub use camod::{camod_test, gumbel_critical, gumbel_pvalue};
pub use covariance::{estimate_sigma, inv_sqrt, sample_max_sq, GroupStructuredCovariance};
pub use distance::{connectivity, pairwise_distances, select_tau, ConnectivityGraph, DistanceMatrix};
pub use error::{Error, ErrorKind, Result};
pub use estimators::{connection_probabilities, ConnectionProbabilities};
pub use model::{
    validate_sample, Decision, GroupLayout, Method, PooledSample, TauSpec, TestConfig, TestReport,
};
pub use modtest::{mod_test, power_diagnostics, PowerDiagnostics};
pub use pipeline::Prepared;
pub use regression::{regression_test, RegressionGroup, RegressionSample};
pub use simbench::{generate, ingest_csv, run_experiment, Case, ExperimentTable, ScenarioSpec, Setting};
pub use tuning::{scan_tau, TauScan};

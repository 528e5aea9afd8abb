//! K-sample comparison of regression error distributions.
//!
//! Each group is fitted separately by least squares, and the MOD / CA-MOD
//! machinery runs on the pooled residuals. No intercept is added: include a
//! constant covariate column if one is wanted.

use nalgebra::{DMatrix, SVD};

use crate::error::{Error, Result};
use crate::model::{validate_sample, Method, PooledSample, TestConfig, TestReport};
use crate::pipeline::Prepared;

/// Responses (`p x n_k`) and covariates (`n_k x d`) of one group.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionGroup {
    pub responses: DMatrix<f64>,
    pub covariates: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSample {
    groups: Vec<RegressionGroup>,
    names: Vec<String>,
}

impl RegressionSample {
    /// Groups named `1..=K` in the given order.
    pub fn new(groups: Vec<RegressionGroup>) -> Result<Self> {
        let names = (1..=groups.len()).map(|g| g.to_string()).collect();
        Self::with_names(groups, names)
    }

    pub fn with_names(groups: Vec<RegressionGroup>, names: Vec<String>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(Error::TooFewGroups(groups.len()));
        }
        if names.len() != groups.len() {
            return Err(Error::InvalidConfig("one name per group is required".into()));
        }
        let p = groups[0].responses.nrows();
        let d = groups[0].covariates.ncols();
        for (g, grp) in groups.iter().enumerate() {
            let nk = grp.responses.ncols();
            if grp.responses.nrows() != p || grp.covariates.ncols() != d {
                return Err(Error::InvalidConfig(format!(
                    "group {} has {} features and {} covariates, expected {p} and {d}",
                    names[g],
                    grp.responses.nrows(),
                    grp.covariates.ncols()
                )));
            }
            if grp.covariates.nrows() != nk {
                return Err(Error::LabelMismatch { labels: grp.covariates.nrows(), observations: nk });
            }
            if nk < 2 {
                return Err(Error::EmptyGroup { label: names[g].clone(), size: nk });
            }
            if nk <= d {
                return Err(Error::SingularDesign { group: g });
            }
            if grp.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidConfig(format!("non-finite covariate in group {}", names[g])));
            }
        }
        Ok(Self { groups, names })
    }

    pub fn groups(&self) -> &[RegressionGroup] {
        &self.groups
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn d(&self) -> usize {
        self.groups[0].covariates.ncols()
    }

    pub fn p(&self) -> usize {
        self.groups[0].responses.nrows()
    }

    pub fn n(&self) -> usize {
        self.groups.iter().map(|g| g.responses.ncols()).sum()
    }

    /// Per-group residuals stacked into one pooled sample, groups kept in order.
    pub fn residual_sample(&self) -> Result<PooledSample> {
        let mut blocks = Vec::with_capacity(self.groups.len());
        for (g, grp) in self.groups.iter().enumerate() {
            let e = ols_residuals(&grp.responses, &grp.covariates).map_err(|err| match err {
                Error::SingularDesign { .. } => Error::SingularDesign { group: g },
                other => other,
            })?;
            blocks.push(e);
        }
        let n = self.n();
        let mut data = DMatrix::zeros(self.p(), n);
        let mut labels = Vec::with_capacity(n);
        let mut col = 0;
        for (g, block) in blocks.iter().enumerate() {
            data.columns_mut(col, block.ncols()).copy_from(block);
            col += block.ncols();
            labels.extend(std::iter::repeat_n(self.names[g].as_str(), block.ncols()));
        }
        validate_sample(data, &labels)
    }
}

/// Least-squares residuals `X (I - W (W^T W)^{-1} W^T)` of the rows of `x`
/// (`p x n_k`) on the columns of `w` (`n_k x d`), via a thin QR of `w`.
pub fn ols_residuals(x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if w.nrows() != x.ncols() {
        return Err(Error::LabelMismatch { labels: w.nrows(), observations: x.ncols() });
    }
    if w.ncols() == 0 {
        return Ok(x.clone());
    }
    if w.nrows() <= w.ncols() {
        return Err(Error::SingularDesign { group: 0 });
    }
    let sv = SVD::new(w.clone(), false, false).singular_values;
    let max = sv.max();
    let min = sv.min();
    if !(max > 0.0) || min < 1e-10 * max {
        return Err(Error::SingularDesign { group: 0 });
    }
    let q = w.clone().qr().q();
    let fitted = (x * &q) * q.transpose();
    Ok(x - fitted)
}

/// Warning attached when `p log n / n` exceeds one.
fn dimension_warning(p: usize, n: usize) -> Option<String> {
    let ratio = p as f64 * (n as f64).ln() / n as f64;
    (ratio > 1.0).then(|| {
        format!("p log n / n = {ratio:.2} > 1; residual-based calibration may be unreliable")
    })
}

/// Pipeline state for the residual test, shareable between both methods.
pub fn regression_prepare(sample: &RegressionSample, config: &TestConfig) -> Result<Prepared> {
    let residuals = sample.residual_sample()?;
    let warnings = dimension_warning(sample.p(), sample.n()).into_iter().collect();
    Ok(Prepared::new(&residuals, config)?.with_regression(sample.d(), warnings))
}

pub fn regression_test(sample: &RegressionSample, config: &TestConfig, method: Method) -> Result<TestReport> {
    regression_prepare(sample, config)?.report(method, config)
}

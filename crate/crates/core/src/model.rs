//! Shared data model: the pooled sample, test configuration and report types.

use std::collections::HashMap;
use std::fmt::Display;
use std::hash::Hash;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Group membership of the `n` pooled observations.
///
/// Groups are encoded `0..k` in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupLayout {
    membership: Vec<usize>,
    sizes: Vec<usize>,
    names: Vec<String>,
}

impl GroupLayout {
    /// Encodes raw labels by first appearance and checks the size constraints.
    pub fn from_labels<L>(labels: &[L]) -> Result<Self>
    where
        L: Eq + Hash + Display,
    {
        let mut index: HashMap<&L, usize> = HashMap::new();
        let mut names = Vec::new();
        let mut sizes: Vec<usize> = Vec::new();
        let mut membership = Vec::with_capacity(labels.len());
        for label in labels {
            let code = *index.entry(label).or_insert_with(|| {
                names.push(label.to_string());
                sizes.push(0);
                names.len() - 1
            });
            sizes[code] += 1;
            membership.push(code);
        }
        if names.len() < 2 {
            return Err(Error::TooFewGroups(names.len()));
        }
        if let Some((g, &size)) = sizes.iter().enumerate().find(|(_, &s)| s < 2) {
            return Err(Error::EmptyGroup { label: names[g].clone(), size });
        }
        Ok(Self { membership, sizes, names })
    }

    /// Layout with contiguous blocks of the given sizes, named `1..=k`.
    pub fn contiguous(sizes: &[usize]) -> Result<Self> {
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g + 1, s))
            .collect();
        Self::from_labels(&labels)
    }

    pub fn n(&self) -> usize {
        self.membership.len()
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    /// Encoded group of observation `i`.
    #[inline]
    pub fn group(&self, i: usize) -> usize {
        self.membership[i]
    }

    pub fn membership(&self) -> &[usize] {
        &self.membership
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Size of the group observation `i` belongs to.
    #[inline]
    pub fn size_of(&self, i: usize) -> usize {
        self.sizes[self.membership[i]]
    }

    /// Raw label of each encoded group.
    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Raw label of every observation.
    pub fn observation_labels(&self) -> Vec<String> {
        self.membership.iter().map(|&g| self.names[g].clone()).collect()
    }
}

/// Feature matrix (`p` features by `n` observations) with its group partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSample {
    data: DMatrix<f64>,
    layout: GroupLayout,
}

impl PooledSample {
    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn layout(&self) -> &GroupLayout {
        &self.layout
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn p(&self) -> usize {
        self.data.nrows()
    }

    pub fn k(&self) -> usize {
        self.layout.k()
    }

    pub fn group_sizes(&self) -> &[usize] {
        self.layout.sizes()
    }

    /// Stacks per-group `p x n_k` blocks in order; group `g` is labelled `g + 1`.
    pub fn from_groups(groups: &[DMatrix<f64>]) -> Result<Self> {
        let p = groups.first().map_or(0, |g| g.nrows());
        if let Some(bad) = groups.iter().find(|g| g.nrows() != p) {
            return Err(Error::InvalidConfig(format!(
                "group blocks disagree on feature count ({} vs {p})",
                bad.nrows()
            )));
        }
        let sizes: Vec<usize> = groups.iter().map(|g| g.ncols()).collect();
        let n = sizes.iter().sum();
        let mut data = DMatrix::zeros(p, n);
        let mut col = 0;
        for g in groups {
            data.columns_mut(col, g.ncols()).copy_from(g);
            col += g.ncols();
        }
        let labels: Vec<usize> = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &s)| std::iter::repeat_n(g + 1, s))
            .collect();
        validate_sample(data, &labels)
    }
}

/// Validates a `p x n` feature matrix and its `n` labels.
pub fn validate_sample<L>(data: DMatrix<f64>, labels: &[L]) -> Result<PooledSample>
where
    L: Eq + Hash + Display,
{
    if labels.len() != data.ncols() {
        return Err(Error::LabelMismatch { labels: labels.len(), observations: data.ncols() });
    }
    for (observation, col) in data.column_iter().enumerate() {
        if let Some(feature) = col.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData { feature, observation });
        }
    }
    let layout = GroupLayout::from_labels(labels)?;
    Ok(PooledSample { data, layout })
}

/// How the connectivity threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TauSpec {
    /// Lower empirical quantile of the pairwise distances.
    Quantile(f64),
    /// Fixed distance threshold.
    Threshold(f64),
}

impl Default for TauSpec {
    fn default() -> Self {
        TauSpec::Quantile(0.5)
    }
}

pub const DEFAULT_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct TestConfig {
    pub tau: TauSpec,
    pub alpha: f64,
    /// Outer calibration replications (`B`).
    pub mc_outer: usize,
    /// Gaussian draws per outer replication (`N`).
    pub mc_inner: usize,
    pub seed: u64,
    /// Relative eigenvalue floor for the inverse square root.
    pub ridge: f64,
    /// Attach per-observation power diagnostics to reports.
    pub diagnostics: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            tau: TauSpec::default(),
            alpha: 0.05,
            mc_outer: 100,
            mc_inner: 200,
            seed: 0,
            ridge: DEFAULT_RIDGE,
            diagnostics: false,
        }
    }
}

impl TestConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        match self.tau {
            TauSpec::Quantile(q) if !(q > 0.0 && q < 1.0) => {
                return bad(format!("tau quantile must lie in (0, 1), got {q}"))
            }
            TauSpec::Threshold(t) if !(t > 0.0 && t.is_finite()) => {
                return bad(format!("tau must be positive, got {t}"))
            }
            _ => {}
        }
        if self.mc_outer < 1 {
            return bad("mc_outer must be at least 1".into());
        }
        if self.mc_inner < 2 {
            return bad("mc_inner must be at least 2".into());
        }
        if !(self.ridge >= 0.0 && self.ridge < 1.0) {
            return bad(format!("ridge must lie in [0, 1), got {}", self.ridge));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mod,
    Camod,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mod => "mod",
            Method::Camod => "camod",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "mod" => Ok(Method::Mod),
            "camod" => Ok(Method::Camod),
            other => Err(Error::InvalidConfig(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Retain,
}

impl Decision {
    pub fn from_reject(reject: bool) -> Self {
        if reject {
            Decision::Reject
        } else {
            Decision::Retain
        }
    }

    pub fn is_reject(self) -> bool {
        self == Decision::Reject
    }
}

/// Outcome of a single MOD or CA-MOD test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    /// `T` for MOD, `T_adj` for CA-MOD.
    pub statistic: f64,
    /// `T_adj - 2 log n + log log n` (CA-MOD only).
    pub centered_statistic: Option<f64>,
    pub p_value: f64,
    /// Fraction of outer replications whose critical value the statistic exceeds (MOD only).
    pub p_mod_replicated: Option<f64>,
    pub critical_value: f64,
    pub decision: Decision,
    pub alpha: f64,
    pub tau: f64,
    pub tau_quantile: Option<f64>,
    pub p0_hat: f64,
    pub p12_hat: f64,
    pub nu_hat: Option<Vec<f64>>,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub group_sizes: Vec<usize>,
    pub regression: bool,
    pub d: Option<usize>,
    pub pd_clipped: bool,
    pub seed: u64,
    pub warnings: Vec<String>,
    pub version: String,
}

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_sample, PooledSample};
use crate::regression::{RegressionGroup, RegressionSample};
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    /// Two groups of sizes `n/3` and `2n/3`.
    IA,
    /// Six equal groups; the last three carry the alternative.
    IB,
    /// IA or IB errors plus a linear effect of `d` Gaussian covariates.
    II,
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Setting::IA => "IA",
            Setting::IB => "IB",
            Setting::II => "II",
        })
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "IA" => Ok(Setting::IA),
            "IB" => Ok(Setting::IB),
            "II" => Ok(Setting::II),
            _ => Err(Error::InvalidSpec(format!("unknown setting '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Case {
    Null,
    MeanShift,
    CovShift,
    DistShift,
    MixtureOutlier,
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Case::Null => "null",
            Case::MeanShift => "mean_shift",
            Case::CovShift => "cov_shift",
            Case::DistShift => "dist_shift",
            Case::MixtureOutlier => "mixture_outlier",
        })
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "null" | "0" => Ok(Case::Null),
            "1" | "mean" | "mean_shift" => Ok(Case::MeanShift),
            "2" | "cov" | "cov_shift" => Ok(Case::CovShift),
            "3" | "dist" | "dist_shift" => Ok(Case::DistShift),
            "mixture" | "mixture_outlier" => Ok(Case::MixtureOutlier),
            _ => Err(Error::InvalidSpec(format!("unknown case '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub setting: Setting,
    pub case: Case,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    /// Number of covariates, used by setting II only.
    pub d: usize,
    /// Overrides the case default: `mu` for mean shift, `theta` for covariance
    /// shift, degrees of freedom for the t alternative, `eta` for the mixture.
    pub signal: Option<f64>,
    pub replications: usize,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(setting: Setting, case: Case, n: usize, p: usize) -> Self {
        let k = if setting == Setting::IB { 6 } else { 2 };
        Self { setting, case, n, p, k, d: 2, signal: None, replications: 200, seed: 0 }
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_signal(mut self, signal: f64) -> Self {
        self.signal = Some(signal);
        self
    }

    pub fn with_replications(mut self, replications: usize) -> Self {
        self.replications = replications;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Group sizes implied by the setting; validates the scenario along the way.
    pub fn group_sizes(&self) -> Result<Vec<usize>> {
        let invalid = |msg: String| Err(Error::InvalidSpec(msg));
        if self.p == 0 {
            return invalid("p must be positive".into());
        }
        match (self.setting, self.k) {
            (Setting::IA, 2) | (Setting::II, 2) => {
                let first = self.n / 3;
                if first < 2 {
                    return invalid(format!("n = {} is too small for an n/3 split", self.n));
                }
                self.check_regression(&[first, self.n - first])
            }
            (Setting::IB, 6) | (Setting::II, 6) => {
                if !self.n.is_multiple_of(6) || self.n < 12 {
                    return invalid(format!("n = {} must be a multiple of 6 and at least 12", self.n));
                }
                self.check_regression(&[self.n / 6; 6])
            }
            (s, k) => invalid(format!("setting {s} does not support k = {k}")),
        }
    }

    fn check_regression(&self, sizes: &[usize]) -> Result<Vec<usize>> {
        if self.setting == Setting::II && sizes.iter().any(|&s| s <= self.d) {
            return Err(Error::InvalidSpec(format!(
                "every group needs more than d = {} observations",
                self.d
            )));
        }
        Ok(sizes.to_vec())
    }

    /// Per-observation law for the alternative groups.
    /// Checks sizes and case parameters without generating data.
    pub fn validate(&self) -> Result<()> {
        self.group_sizes()?;
        self.alternative().map(|_| ())
    }

    fn alternative(&self) -> Result<Law> {
        let pf = self.p as f64;
        let six = self.k == 6;
        let reg = self.setting == Setting::II;
        let law = match self.case {
            Case::Null => {
                if self.signal.is_some() {
                    return Err(Error::InvalidSpec("the null case takes no signal".into()));
                }
                Law::Normal
            }
            Case::MeanShift => {
                let c = match (six, reg) {
                    (false, _) => 2.0,
                    (true, false) => 2.6,
                    (true, true) => 1.8,
                };
                Law::Shift(self.signal.unwrap_or(c / pf.sqrt()))
            }
            Case::CovShift => {
                let c = match (six, reg) {
                    (false, _) => 0.8,
                    (true, false) => 1.0,
                    (true, true) => 0.75,
                };
                let theta = self.signal.unwrap_or(c / pf.sqrt());
                if theta < 0.0 {
                    return Err(Error::InvalidSpec("theta must be non-negative".into()));
                }
                Law::RankOne(((1.0 + theta * pf).sqrt() - 1.0) / pf)
            }
            Case::DistShift => {
                let df = self.signal.unwrap_or(if six { 30.0 } else { 45.0 });
                if !(df > 2.0) {
                    return Err(Error::InvalidSpec("t degrees of freedom must exceed 2".into()));
                }
                Law::StudentT(ChiSquared::new(df).map_err(|e| Error::InvalidSpec(e.to_string()))?, df)
            }
            Case::MixtureOutlier => {
                let eta = self.signal.unwrap_or(0.05);
                if !(0.0..=1.0).contains(&eta) {
                    return Err(Error::InvalidSpec("mixture fraction must lie in [0, 1]".into()));
                }
                Law::Mixture(eta)
            }
        };
        Ok(law)
    }
}

#[derive(Debug, Clone, Copy)]
enum Law {
    Normal,
    Shift(f64),
    /// `x = z + c (1^T z) 1`, covariance `I + theta 1 1^T`.
    RankOne(f64),
    StudentT(ChiSquared<f64>, f64),
    Mixture(f64),
}

impl Law {
    fn fill(&self, col: &mut [f64], rng: &mut ChaCha8Rng) {
        for v in col.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        match *self {
            Law::Normal => {}
            Law::Shift(mu) => col.iter_mut().for_each(|v| *v += mu),
            Law::RankOne(c) => {
                let s = c * col.iter().sum::<f64>();
                col.iter_mut().for_each(|v| *v += s);
            }
            Law::StudentT(chi, df) => {
                let scale = ((df - 2.0) / chi.sample(rng)).sqrt();
                col.iter_mut().for_each(|v| *v *= scale);
            }
            Law::Mixture(eta) => {
                if rng.gen::<f64>() < eta {
                    let sd = 3f64.sqrt();
                    col.iter_mut().for_each(|v| *v = 20.0 + sd * *v);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GeneratedSample {
    Pooled(PooledSample),
    Regression(RegressionSample),
}

/// One dataset drawn from `spec`, fully determined by `seed`.
///
/// The first half of the groups (the first group when `k = 2`) is standard
/// normal; the rest follow the case's alternative.
pub fn generate(spec: &ScenarioSpec, seed: u64) -> Result<GeneratedSample> {
    let sizes = spec.group_sizes()?;
    let alt = spec.alternative()?;
    let k = sizes.len();
    let mut rng = rng_from(seed);
    let p = spec.p;

    let mut blocks = Vec::with_capacity(k);
    for (g, &nk) in sizes.iter().enumerate() {
        let law = if g < k / 2 { Law::Normal } else { alt };
        let mut x = DMatrix::zeros(p, nk);
        for mut col in x.column_iter_mut() {
            law.fill(col.as_mut_slice(), &mut rng);
        }
        blocks.push(x);
    }

    if spec.setting != Setting::II {
        let n = sizes.iter().sum();
        let mut data = DMatrix::zeros(p, n);
        let mut labels = Vec::with_capacity(n);
        let mut at = 0;
        for (g, x) in blocks.iter().enumerate() {
            data.columns_mut(at, x.ncols()).copy_from(x);
            at += x.ncols();
            labels.extend(std::iter::repeat_n(g + 1, x.ncols()));
        }
        return validate_sample(data, &labels).map(GeneratedSample::Pooled);
    }

    let groups = blocks
        .into_iter()
        .map(|eps| {
            let nk = eps.ncols();
            let w = DMatrix::from_fn(nk, spec.d, |_, _| StandardNormal.sample(&mut rng));
            // all-ones coefficients: every feature gets the row sum of W
            let mut x = eps;
            for (i, mut col) in x.column_iter_mut().enumerate() {
                col.add_scalar_mut(w.row(i).sum());
            }
            RegressionGroup { responses: x, covariates: w }
        })
        .collect();
    RegressionSample::new(groups).map(GeneratedSample::Regression)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pooled(spec: &ScenarioSpec, seed: u64) -> PooledSample {
        match generate(spec, seed).unwrap() {
            GeneratedSample::Pooled(s) => s,
            GeneratedSample::Regression(_) => panic!("expected a pooled sample"),
        }
    }

    #[test]
    fn sizes_follow_setting() {
        let s = pooled(&ScenarioSpec::new(Setting::IA, Case::Null, 151, 3), 0);
        assert_eq!(s.group_sizes(), &[50, 101]);
        let s = pooled(&ScenarioSpec::new(Setting::IB, Case::Null, 60, 3), 0);
        assert_eq!(s.group_sizes(), &[10; 6]);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            ScenarioSpec::new(Setting::IB, Case::Null, 100, 3),
            ScenarioSpec::new(Setting::IA, Case::Null, 5, 3),
            ScenarioSpec::new(Setting::IA, Case::Null, 30, 0),
            ScenarioSpec::new(Setting::IA, Case::Null, 30, 3).with_k(3),
            ScenarioSpec::new(Setting::IA, Case::Null, 30, 3).with_signal(1.0),
            ScenarioSpec::new(Setting::IA, Case::DistShift, 30, 3).with_signal(2.0),
            ScenarioSpec::new(Setting::IA, Case::MixtureOutlier, 30, 3).with_signal(1.5),
            ScenarioSpec::new(Setting::II, Case::Null, 12, 3).with_k(6),
        ];
        for spec in bad {
            assert!(matches!(generate(&spec, 0), Err(Error::InvalidSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = ScenarioSpec::new(Setting::II, Case::DistShift, 60, 4);
        assert_eq!(generate(&spec, 9).unwrap(), generate(&spec, 9).unwrap());
        assert_ne!(generate(&spec, 9).unwrap(), generate(&spec, 10).unwrap());
    }

    #[test]
    fn zero_mean_shift_is_centered() {
        let spec = ScenarioSpec::new(Setting::IA, Case::MeanShift, 300, 20).with_signal(0.0);
        let reps = 20;
        let mut total = DMatrix::zeros(20, 1);
        for r in 0..reps {
            let s = pooled(&spec, r);
            total += s.data().column_mean() / reps as f64;
        }
        let bound = 4.0 / ((300 * reps) as f64).sqrt();
        assert!(total.amax() < bound, "{} >= {bound}", total.amax());
    }

    #[test]
    fn mean_shift_moves_second_group() {
        let spec = ScenarioSpec::new(Setting::IA, Case::MeanShift, 3000, 4).with_signal(1.0);
        let s = pooled(&spec, 1);
        let second = s.data().columns(1000, 2000).mean();
        let first = s.data().columns(0, 1000).mean();
        assert!((second - 1.0).abs() < 0.05 && first.abs() < 0.05);
    }

    #[test]
    fn covariance_shift_scales_mean_coordinate() {
        let (n, p) = (2000, 50);
        let theta = 0.8 / (p as f64).sqrt();
        let spec = ScenarioSpec::new(Setting::IA, Case::CovShift, 3 * n, p);
        let s = pooled(&spec, 3);
        let alt = s.data().columns(n, 2 * n);
        let means: Vec<f64> = alt.column_iter().map(|c| c.mean()).collect();
        let m = means.len() as f64;
        let mu = means.iter().sum::<f64>() / m;
        let var = means.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (m - 1.0);
        let target = 1.0 + theta * p as f64;
        assert!((var * p as f64 / target - 1.0).abs() < 0.1, "{} vs {target}", var * p as f64);
    }

    #[test]
    fn t_alternative_has_unit_variance() {
        let spec = ScenarioSpec::new(Setting::IA, Case::DistShift, 6000, 10).with_signal(5.0);
        let s = pooled(&spec, 4);
        let alt = s.data().columns(2000, 4000);
        let var = alt.iter().map(|v| v * v).sum::<f64>() / alt.len() as f64;
        assert!((var - 1.0).abs() < 0.08, "{var}");
        let kurt = alt.iter().map(|v| v.powi(4)).sum::<f64>() / alt.len() as f64;
        // t_5 rescaled to unit variance has fourth moment 3 (df - 2) / (df - 4) = 9
        assert!(kurt > 5.0, "{kurt}");
    }

    #[test]
    fn mixture_fraction() {
        let spec = ScenarioSpec::new(Setting::IA, Case::MixtureOutlier, 6000, 3).with_signal(0.2);
        let s = pooled(&spec, 5);
        let far = s.data().columns(2000, 4000).column_iter().filter(|c| c.mean() > 10.0).count();
        assert!((far as f64 / 4000.0 - 0.2).abs() < 0.03);
    }

    #[test]
    fn regression_structure() {
        let spec = ScenarioSpec::new(Setting::II, Case::Null, 600, 5).with_k(6);
        let GeneratedSample::Regression(r) = generate(&spec, 2).unwrap() else {
            panic!("expected regression sample");
        };
        assert_eq!((r.d(), r.p(), r.n(), r.groups().len()), (2, 5, 600, 6));
        let g = &r.groups()[0];
        let diff = g.responses.row(0) - g.responses.row(1);
        // both features share the covariate effect, so only noise differs
        let var = diff.iter().map(|v| v * v).sum::<f64>() / diff.len() as f64;
        assert!((var - 2.0).abs() < 0.7);
    }

    #[test]
    fn parses_names() {
        assert_eq!("ia".parse::<Setting>().unwrap(), Setting::IA);
        assert_eq!("3".parse::<Case>().unwrap(), Case::DistShift);
        assert_eq!("mixture".parse::<Case>().unwrap(), Case::MixtureOutlier);
        assert!("4".parse::<Case>().is_err());
    }
}

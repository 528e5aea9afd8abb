use thiserror::Error;

/// Errors raised anywhere in the test pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group `{label}` has {size} observation(s); at least 2 are required")]
    EmptyGroup { label: String, size: usize },

    #[error("non-finite value at feature {feature}, observation {observation}")]
    NonFiniteData { feature: usize, observation: usize },

    #[error("{labels} labels supplied for {observations} observations")]
    LabelMismatch { labels: usize, observations: usize },

    #[error("found {0} group(s); at least 2 are required")]
    TooFewGroups(usize),

    #[error("all pairwise distances are zero; no usable connectivity threshold")]
    DegenerateDistances,

    /// The variance of a within/between difference is not positive. `observation`
    /// names the first offending observation (0-based) when the failure is per-observation.
    #[error("degenerate variance{}; the threshold is too extreme for this sample", observation.map(|i| format!(" at observation {i}")).unwrap_or_default())]
    DegenerateVariance { observation: Option<usize> },

    #[error("symmetric eigendecomposition failed: {0}")]
    EigenFailure(String),

    #[error("design matrix of group {group} is rank deficient (condition number exceeds 1e10)")]
    SingularDesign { group: usize },

    #[error("non-finite objective at every candidate quantile")]
    NonFiniteObjective,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scenario: {0}")]
    InvalidSpec(String),

    #[error("parse error at row {row}, column `{column}`: {message}")]
    Parse { row: usize, column: String, message: String },

    #[error("column `{column}` mixes numeric and non-numeric values (first non-numeric at row {row})")]
    MixedType { column: String, row: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Coarse classification used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DegenerateDistances | Error::DegenerateVariance { .. } => ErrorKind::Degenerate,
            Error::EigenFailure(_) | Error::SingularDesign { .. } | Error::NonFiniteObjective => {
                ErrorKind::Numerical
            }
            _ => ErrorKind::Input,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Degenerate,
    Numerical,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;

use super::generate::GeneratedSample;
use crate::error::{Error, Result};
use crate::model::validate_sample;
use crate::regression::{RegressionGroup, RegressionSample};

/// A sample read from CSV; same shape as a generated one.
pub type IngestedSample = GeneratedSample;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestOptions {
    pub group_column: String,
    pub covariate_prefix: String,
    /// Route prefixed columns to covariates and build a regression sample.
    pub regression: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self { group_column: "group".into(), covariate_prefix: "w_".into(), regression: false }
    }
}

pub fn ingest_csv(path: impl AsRef<Path>, options: &IngestOptions) -> Result<IngestedSample> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    ingest_reader(file, options)
}

/// Parses comma-separated data with a header row; one observation per row.
///
/// Columns starting with the covariate prefix are covariates in regression
/// mode and ignored otherwise. Row numbers in errors are file lines, the
/// header being line 1.
pub fn ingest_reader<R: Read>(reader: R, options: &IngestOptions) -> Result<IngestedSample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let csv_err = |e: csv::Error| {
        let row = e.position().map_or(0, |p| p.line() as usize);
        match e.kind() {
            csv::ErrorKind::Io(_) => Error::Io(e.to_string()),
            _ => Error::Parse { row, column: String::new(), message: e.to_string() },
        }
    };
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(|h| h.trim().to_string()).collect();
    let group_col = header.iter().position(|h| *h == options.group_column).ok_or_else(|| Error::Parse {
        row: 1,
        column: options.group_column.clone(),
        message: "group column not found in header".into(),
    })?;
    let is_cov = |h: &str| h.starts_with(options.covariate_prefix.as_str());
    let features: Vec<usize> = (0..header.len()).filter(|&c| c != group_col && !is_cov(&header[c])).collect();
    let covariates: Vec<usize> = (0..header.len()).filter(|&c| c != group_col && is_cov(&header[c])).collect();
    if features.is_empty() {
        return Err(Error::InvalidConfig("no feature columns".into()));
    }
    if options.regression && covariates.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "regression mode needs covariate columns prefixed `{}`",
            options.covariate_prefix
        )));
    }
    let numeric: Vec<usize> = if options.regression {
        features.iter().chain(&covariates).copied().collect()
    } else {
        features.clone()
    };

    let mut labels = Vec::new();
    let mut lines = Vec::new();
    // cells[c] holds column `numeric[c]`; None marks a non-numeric cell
    let mut cells: Vec<Vec<Option<f64>>> = vec![Vec::new(); numeric.len()];
    let mut raw: Vec<Vec<String>> = vec![Vec::new(); numeric.len()];
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        labels.push(record[group_col].trim().to_string());
        lines.push(line);
        for (c, &col) in numeric.iter().enumerate() {
            let text = record[col].trim();
            cells[c].push(text.parse::<f64>().ok());
            raw[c].push(text.to_string());
        }
    }
    if labels.is_empty() {
        return Err(Error::InvalidConfig("no data rows".into()));
    }

    let mut columns = Vec::with_capacity(numeric.len());
    for (c, &col) in numeric.iter().enumerate() {
        let name = &header[col];
        if let Some(bad) = cells[c].iter().position(Option::is_none) {
            let any_numeric = cells[c].iter().any(Option::is_some);
            return Err(if bad == 0 && any_numeric {
                Error::MixedType { column: name.clone(), row: lines[0] }
            } else {
                Error::Parse {
                    row: lines[bad],
                    column: name.clone(),
                    message: format!("`{}` is not a number", raw[c][bad]),
                }
            });
        }
        columns.push(cells[c].iter().map(|v| v.unwrap_or_default()).collect::<Vec<f64>>());
    }

    let n = labels.len();
    let p = features.len();
    let data = DMatrix::from_fn(p, n, |r, i| columns[r][i]);
    if !options.regression {
        return validate_sample(data, &labels).map(GeneratedSample::Pooled);
    }

    let d = covariates.len();
    let w = DMatrix::from_fn(n, d, |i, c| columns[p + c][i]);
    if let Some((f, i)) = (0..p).flat_map(|f| (0..n).map(move |i| (f, i))).find(|&(f, i)| !data[(f, i)].is_finite()) {
        return Err(Error::NonFiniteData { feature: f, observation: i });
    }
    let mut names: Vec<String> = Vec::new();
    let mut members: Vec<Vec<usize>> = Vec::new();
    for (i, label) in labels.iter().enumerate() {
        match names.iter().position(|n| n == label) {
            Some(g) => members[g].push(i),
            None => {
                names.push(label.clone());
                members.push(vec![i]);
            }
        }
    }
    let groups = members
        .iter()
        .map(|idx| RegressionGroup {
            responses: data.select_columns(idx.iter()),
            covariates: w.select_rows(idx.iter()),
        })
        .collect();
    RegressionSample::with_names(groups, names).map(GeneratedSample::Regression)
}

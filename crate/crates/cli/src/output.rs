//! JSON and CSV rendering of reports and experiment tables.

use maxdiff::{Error, ExperimentTable, Result, TauScan, TestReport};
use serde_json::Value;

use crate::Format;

fn json(value: &impl serde::Serialize) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Io(e.to_string()))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

fn csv_text(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// One report as an object, or several as an array when `array` is set.
pub fn reports(reports: &[TestReport], format: Format, array: bool) -> Result<String> {
    match format {
        Format::Json if array => json(&reports),
        Format::Json => json(&reports[0]),
        Format::Csv => {
            let header = [
                "method", "statistic", "centered_statistic", "p_value", "p_mod_replicated",
                "critical_value", "decision", "alpha", "tau", "tau_quantile", "p0_hat", "p12_hat",
                "n", "p", "k", "group_sizes", "regression", "d", "pd_clipped", "seed", "version",
                "nu_hat", "warnings",
            ];
            let rows = reports
                .iter()
                .map(|r| {
                    vec![
                        r.method.as_str().to_string(),
                        r.statistic.to_string(),
                        opt(r.centered_statistic),
                        r.p_value.to_string(),
                        opt(r.p_mod_replicated),
                        r.critical_value.to_string(),
                        if r.decision.is_reject() { "reject" } else { "retain" }.to_string(),
                        r.alpha.to_string(),
                        r.tau.to_string(),
                        opt(r.tau_quantile),
                        r.p0_hat.to_string(),
                        r.p12_hat.to_string(),
                        r.n.to_string(),
                        r.p.to_string(),
                        r.k.to_string(),
                        join(&r.group_sizes, ";"),
                        r.regression.to_string(),
                        opt(r.d),
                        r.pd_clipped.to_string(),
                        r.seed.to_string(),
                        r.version.clone(),
                        r.nu_hat.as_deref().map(|v| join(v, ";")).unwrap_or_default(),
                        r.warnings.join(" | "),
                    ]
                })
                .collect();
            csv_text(&header, rows)
        }
    }
}

pub fn table(table: &ExperimentTable, format: Format, timing: bool) -> Result<String> {
    match format {
        Format::Json => {
            let mut value = serde_json::to_value(table).map_err(|e| Error::Io(e.to_string()))?;
            if !timing {
                if let Some(Value::Array(rows)) = value.get_mut("rows") {
                    for row in rows {
                        if let Value::Object(map) = row {
                            map.remove("wall_time");
                        }
                    }
                }
            }
            json(&value)
        }
        Format::Csv => {
            let mut header = vec![
                "method", "setting", "case", "n", "p", "k", "rejection_rate", "rejections",
                "replications", "seed",
            ];
            if timing {
                header.push("wall_time");
            }
            header.push("error");
            let rows = table
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.method.as_str().to_string(),
                        r.setting.to_string(),
                        r.case.to_string(),
                        r.n.to_string(),
                        r.p.to_string(),
                        r.k.to_string(),
                        opt(r.rejection_rate),
                        r.rejections.to_string(),
                        r.replications.to_string(),
                        r.seed.to_string(),
                    ];
                    if timing {
                        row.push(format!("{:.3}", r.wall_time));
                    }
                    row.push(r.error.clone().unwrap_or_default());
                    row
                })
                .collect();
            csv_text(&header, rows)
        }
    }
}

pub fn scan(scan: &TauScan) -> Result<String> {
    let candidates: Vec<Value> = scan
        .grid
        .iter()
        .zip(&scan.taus)
        .zip(&scan.objective)
        .map(|((q, tau), obj)| {
            serde_json::json!({
                "quantile": q,
                "tau": tau,
                "objective": if obj.is_finite() { Value::from(*obj) } else { Value::Null },
            })
        })
        .collect();
    json(&serde_json::json!({
        "candidates": candidates,
        "selected_quantile": scan.selected,
        "selected_tau": scan.selected_tau,
    }))
}

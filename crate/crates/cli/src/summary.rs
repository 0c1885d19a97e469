//! Final-round accuracy summary of a metrics CSV.

use std::collections::BTreeMap;
use std::path::Path;

use deahes::Method;

use crate::error::{CliError, Result};
use crate::output::{format_float, MetricsRow, HEADER};

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub k: usize,
    pub tau: usize,
    pub r: f64,
    pub seeds: usize,
    /// Largest final round among the seeds.
    pub final_round: usize,
    pub mean_accuracy: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd_accuracy: f64,
}

pub const SUMMARY_HEADER: [&str; 8] = [
    "method",
    "k",
    "tau",
    "r",
    "seeds",
    "final_round",
    "mean_accuracy",
    "sd_accuracy",
];

/// Mean and sample standard deviation.
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn method_rank(m: Method) -> usize {
    Method::ALL.iter().position(|&x| x == m).expect("known method")
}

/// Groups rows by `(method, k, tau, r)` and reduces each seed to its last
/// round. Groups are ordered by method (in the fixed method order), then
/// `k`, `tau` and `r`.
pub fn summarize_rows(rows: &[MetricsRow]) -> Vec<SummaryRow> {
    type Key = (usize, usize, usize, u64);
    let mut groups: BTreeMap<Key, BTreeMap<u64, (usize, f64)>> = BTreeMap::new();
    for row in rows {
        let key = (method_rank(row.method), row.k, row.tau, row.r.to_bits());
        let last = groups.entry(key).or_default().entry(row.seed).or_insert((0, 0.0));
        if row.round >= last.0 {
            *last = (row.round, row.test_accuracy);
        }
    }
    let mut out: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((m, k, tau, r), seeds)| {
            let acc: Vec<f64> = seeds.values().map(|&(_, a)| a).collect();
            let (mean_accuracy, sd_accuracy) = mean_sd(&acc);
            SummaryRow {
                method: Method::ALL[m],
                k,
                tau,
                r: f64::from_bits(r),
                seeds: acc.len(),
                final_round: seeds.values().map(|&(round, _)| round).max().unwrap_or(0),
                mean_accuracy,
                sd_accuracy,
            }
        })
        .collect();
    // Bit patterns of non-negative floats sort like the floats, but keep
    // the order explicit.
    out.sort_by(|a, b| {
        (method_rank(a.method), a.k, a.tau)
            .cmp(&(method_rank(b.method), b.k, b.tau))
            .then(a.r.total_cmp(&b.r))
    });
    out
}

/// Reads a metrics CSV, checking the header and every field.
pub fn read_rows(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => CliError::io(path, io),
            other => CliError::Format {
                path: path.to_path_buf(),
                line: 1,
                message: format!("{other:?}"),
            },
        })?;
    let format = |line: u64, message: String| CliError::Format {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(i as u64 + 1, |p| p.line());
            match e.into_kind() {
                csv::ErrorKind::Io(io) => CliError::io(path, io),
                other => format(line, format!("{other:?}")),
            }
        })?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        if i == 0 {
            if record.iter().ne(HEADER) {
                return Err(format(line, format!("expected header {:?}", HEADER.join(","))));
            }
            continue;
        }
        rows.push(MetricsRow::from_fields(&record).map_err(|m| format(line, m))?);
    }
    if rows.is_empty() {
        return Err(CliError::NoData {
            path: path.to_path_buf(),
        });
    }
    Ok(rows)
}

pub fn summarize(path: &Path) -> Result<Vec<SummaryRow>> {
    Ok(summarize_rows(&read_rows(path)?))
}

/// Tab-separated table with a header line.
pub fn render_tsv(rows: &[SummaryRow]) -> String {
    let mut out = SUMMARY_HEADER.join("\t");
    out.push('\n');
    for r in rows {
        let fields = [
            r.method.name().to_string(),
            r.k.to_string(),
            r.tau.to_string(),
            format_float(r.r),
            r.seeds.to_string(),
            r.final_round.to_string(),
            format_float(r.mean_accuracy),
            format_float(r.sd_accuracy),
        ];
        out.push_str(&fields.join("\t"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_sample_sd() {
        let (m, s) = mean_sd(&[0.90, 0.92, 0.94]);
        assert!((m - 0.92).abs() < 1e-12);
        assert!((s - 0.02).abs() < 1e-12);
        assert_eq!(mean_sd(&[0.5]), (0.5, 0.0));
    }
}

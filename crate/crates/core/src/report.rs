//! Experiment records, aggregation and CSV output.
//!
//! Raw records go to `<name>.csv` with header `method,factor,level,rep,value`;
//! the per-(method, level) aggregate goes to `<name>_summary.csv` with header
//! `method,factor,level,mean,stderr,n_reps`. Numbers carry six significant
//! digits and rows are sorted, so identical results give identical bytes.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const RECORD_HEADER: &str = "method,factor,level,rep,value";
pub const SUMMARY_HEADER: &str = "method,factor,level,mean,stderr,n_reps";

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub method: String,
    pub factor: String,
    pub level: f64,
    pub rep: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub method: String,
    pub factor: String,
    pub level: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_reps: usize,
}

/// A repetition that failed and was left out of the aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct FailedRep {
    pub level: f64,
    pub rep: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<Record>,
    /// Derived rows that are not plain means of records, such as risk ratios.
    pub derived: Vec<SummaryRow>,
    pub failures: Vec<FailedRep>,
}

impl ExperimentResult {
    pub fn push(&mut self, method: &str, factor: &str, level: f64, rep: usize, value: f64) {
        self.records.push(Record {
            method: method.to_string(),
            factor: factor.to_string(),
            level,
            rep,
            value,
        });
    }

    /// Sorts records by (method, factor, level, rep).
    pub fn sort(&mut self) {
        self.records.sort_by(record_order);
        self.derived.sort_by(summary_order);
    }

    /// Mean and standard error per (method, factor, level), followed by the
    /// derived rows, in sorted order.
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut sorted = self.records.clone();
        sorted.sort_by(record_order);
        let mut rows = Vec::new();
        let mut start = 0;
        while start < sorted.len() {
            let head = &sorted[start];
            let mut end = start + 1;
            while end < sorted.len()
                && sorted[end].method == head.method
                && sorted[end].factor == head.factor
                && sorted[end].level == head.level
            {
                end += 1;
            }
            let values: Vec<f64> = sorted[start..end].iter().map(|r| r.value).collect();
            let (mean, stderr) = mean_and_stderr(&values);
            rows.push(SummaryRow {
                method: head.method.clone(),
                factor: head.factor.clone(),
                level: head.level,
                mean,
                stderr,
                n_reps: values.len(),
            });
            start = end;
        }
        rows.extend(self.derived.iter().cloned());
        rows.sort_by(summary_order);
        rows
    }

    /// The summary row for `(method, level)`, if any.
    pub fn summary_for(&self, method: &str, level: f64) -> Option<SummaryRow> {
        self.summary()
            .into_iter()
            .find(|r| r.method == method && r.level == level)
    }
}

fn cmp_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

fn record_order(a: &Record, b: &Record) -> Ordering {
    a.method
        .cmp(&b.method)
        .then_with(|| a.factor.cmp(&b.factor))
        .then_with(|| cmp_f64(a.level, b.level))
        .then_with(|| a.rep.cmp(&b.rep))
}

fn summary_order(a: &SummaryRow, b: &SummaryRow) -> Ordering {
    a.method
        .cmp(&b.method)
        .then_with(|| a.factor.cmp(&b.factor))
        .then_with(|| cmp_f64(a.level, b.level))
}

/// Sample mean and `sd / sqrt(n)` with the `n - 1` variance; the standard
/// error is NaN for fewer than two values.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Renders `v` with six significant digits, fixed notation for decimal
/// exponents in `[-5, 6)` and scientific notation otherwise.
pub fn format_sig6(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

pub fn records_csv(result: &ExperimentResult) -> String {
    let mut sorted = result.clone();
    sorted.sort();
    let mut out = String::from(RECORD_HEADER);
    out.push('\n');
    for r in &sorted.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.method,
            r.factor,
            format_sig6(r.level),
            r.rep,
            format_sig6(r.value)
        );
    }
    out
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            r.factor,
            format_sig6(r.level),
            format_sig6(r.mean),
            format_sig6(r.stderr),
            r.n_reps
        );
    }
    out
}

/// `dir/name.csv` becomes `dir/name_<suffix>.csv`.
pub fn companion_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| format!(".{}", e.to_string_lossy()))
        .unwrap_or_default();
    path.with_file_name(format!("{stem}_{suffix}{ext}"))
}

/// Writes `contents` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Io(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::from(e)
    })
}

/// Writes the record file at `path` and the summary next to it.
pub fn write_results(result: &ExperimentResult, path: &Path) -> Result<()> {
    if result.records.is_empty() && result.derived.is_empty() {
        return Err(Error::InvalidConfig("no results to write".into()));
    }
    write_atomic(path, &records_csv(result))?;
    write_atomic(&companion_path(path, "summary"), &summary_csv(&result.summary()))
}

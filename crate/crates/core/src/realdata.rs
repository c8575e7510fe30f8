//! Loading and cleaning a comma-separated table described by a schema file,
//! and the repeated train/test prediction study on it.
//!
//! Schema files are flat `key = value` text with `#` comments. A line that
//! starts with whitespace continues the value of the previous key, which keeps
//! long column lists readable:
//!
//! ```text
//! columns = state, county, community,
//!     population, ViolentCrimesPerPop
//! identifiers = state, county, community
//! target = ViolentCrimesPerPop
//! missing = ?
//! header = false
//! ```

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{fit_all, Method, PipelineOptions};
use crate::linmodel::{mspe, Dataset};
use crate::report::{ExperimentResult, FailedRep};
use crate::rng::{permutation, rep_rng};

pub const CRIME_FACTOR: &str = "tr";

/// Layout of a data file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    pub columns: Vec<String>,
    /// Non-predictive columns; names absent from `columns` are ignored.
    pub identifiers: Vec<String>,
    pub target: String,
    pub missing: String,
    /// Whether the first line is a header to skip.
    pub header: bool,
}

impl Schema {
    pub fn parse(text: &str) -> Result<Schema> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("");
            if line.trim().is_empty() {
                continue;
            }
            if line.starts_with(char::is_whitespace) {
                let last = entries.last_mut().ok_or_else(|| Error::ParseError {
                    line: line_no,
                    msg: "continuation line without a key".into(),
                })?;
                last.1.push(' ');
                last.1.push_str(line.trim());
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ParseError {
                line: line_no,
                msg: format!("expected `key = value`, got `{}`", line.trim()),
            })?;
            let key = key.trim().to_string();
            if entries.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::ParseError {
                    line: line_no,
                    msg: format!("duplicate key `{key}`"),
                });
            }
            entries.push((key, value.trim().to_string(), line_no));
        }
        let mut columns = None;
        let mut identifiers = Vec::new();
        let mut target = None;
        let mut missing = "?".to_string();
        let mut header = false;
        for (key, value, line) in entries {
            match key.as_str() {
                "columns" => columns = Some(name_list(&value)),
                "identifiers" => identifiers = name_list(&value),
                "target" => target = Some(value),
                "missing" => missing = value,
                "header" => {
                    header = value.parse().map_err(|_| Error::ParseError {
                        line,
                        msg: format!("header must be true or false, got `{value}`"),
                    })?
                }
                other => {
                    return Err(Error::ParseError {
                        line,
                        msg: format!("unknown schema key `{other}`"),
                    })
                }
            }
        }
        let columns = columns.ok_or_else(|| Error::InvalidConfig("schema lists no columns".into()))?;
        let target = target.ok_or_else(|| Error::MissingTarget("<unset>".into()))?;
        if !columns.contains(&target) {
            return Err(Error::MissingTarget(target));
        }
        if identifiers.contains(&target) {
            return Err(Error::InvalidConfig(format!("target `{target}` is also an identifier")));
        }
        Ok(Schema {
            columns,
            identifiers,
            target,
            missing,
            header,
        })
    }

    pub fn from_file(path: &Path) -> Result<Schema> {
        Schema::parse(&fs::read_to_string(path)?)
    }
}

fn name_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    Identifier,
    /// Number of cells holding the missing marker.
    Missing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanedTable {
    pub feature_names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub dropped_columns: Vec<(String, DropReason)>,
}

impl CleanedTable {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.x.clone(), self.y.clone())
    }

    pub fn with_target_scaled(&self, factor: f64) -> CleanedTable {
        CleanedTable {
            y: &self.y * factor,
            ..self.clone()
        }
    }
}

enum Cell {
    Value(f64),
    Missing,
}

/// Reads `path` under `schema`: identifier columns are dropped, and so is
/// every covariate with at least one missing marker. The target may not have
/// missing values.
pub fn load_crime_csv(path: &Path, schema: &Schema) -> Result<CleanedTable> {
    parse_table(&fs::read_to_string(path)?, schema)
}

pub fn parse_table(text: &str, schema: &Schema) -> Result<CleanedTable> {
    let n_cols = schema.columns.len();
    let target_col = schema
        .columns
        .iter()
        .position(|c| *c == schema.target)
        .ok_or_else(|| Error::MissingTarget(schema.target.clone()))?;
    let is_identifier: Vec<bool> = schema
        .columns
        .iter()
        .map(|c| schema.identifiers.contains(c))
        .collect();
    // Cells of the non-identifier columns, column-major.
    let mut cells: Vec<Vec<Cell>> = (0..n_cols).map(|_| Vec::new()).collect();
    let skip = usize::from(schema.header);
    for (idx, raw) in text.lines().enumerate().skip(skip) {
        let line = idx + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != n_cols {
            return Err(Error::UnexpectedColumnCount {
                line,
                expected: n_cols,
                found: fields.len(),
            });
        }
        for (j, field) in fields.iter().enumerate() {
            if is_identifier[j] {
                continue;
            }
            let field = field.trim();
            let cell = if field == schema.missing {
                if j == target_col {
                    return Err(Error::ParseError {
                        line,
                        msg: format!("target `{}` is missing", schema.target),
                    });
                }
                Cell::Missing
            } else {
                Cell::Value(field.parse::<f64>().map_err(|_| Error::ParseError {
                    line,
                    msg: format!("column `{}`: cannot parse `{field}`", schema.columns[j]),
                })?)
            };
            cells[j].push(cell);
        }
    }
    let n = cells[target_col].len();
    if n == 0 {
        return Err(Error::ParseError {
            line: 0,
            msg: "no data rows".into(),
        });
    }
    let mut feature_names = Vec::new();
    let mut kept = Vec::new();
    let mut dropped_columns = Vec::new();
    for (j, name) in schema.columns.iter().enumerate() {
        if is_identifier[j] {
            dropped_columns.push((name.clone(), DropReason::Identifier));
        } else if j != target_col {
            let missing = cells[j].iter().filter(|c| matches!(c, Cell::Missing)).count();
            if missing > 0 {
                dropped_columns.push((name.clone(), DropReason::Missing(missing)));
            } else {
                feature_names.push(name.clone());
                kept.push(j);
            }
        }
    }
    let value = |c: &Cell| match c {
        Cell::Value(v) => *v,
        Cell::Missing => unreachable!("columns with missing cells are dropped"),
    };
    let x = DMatrix::from_fn(n, kept.len(), |i, k| value(&cells[kept[k]][i]));
    let y = DVector::from_iterator(n, cells[target_col].iter().map(value));
    Ok(CleanedTable {
        feature_names,
        x,
        y,
        dropped_columns,
    })
}

/// `ceil(n * fraction)`, where products within rounding error of an integer
/// count as that integer.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let raw = n as f64 * fraction;
    let near = raw.round();
    if (raw - near).abs() <= 1e-9 * (n.max(1) as f64) {
        near as usize
    } else {
        raw.ceil() as usize
    }
}

/// Uniform random split of `0..n`: the first `train_size(n, fraction)` entries
/// of a permutation train, the rest test. Both lists come back sorted.
pub fn split_rows<R: Rng + ?Sized>(
    n: usize,
    fraction: f64,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!("train fraction {fraction}")));
    }
    let n_train = train_size(n, fraction);
    if n_train == 0 || n_train >= n {
        return Err(Error::DegenerateSplit {
            n_train,
            n_test: n.saturating_sub(n_train),
        });
    }
    let order = permutation(n, rng);
    let mut train = order[..n_train].to_vec();
    let mut test = order[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(table: &CleanedTable, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let data = table.to_dataset()?;
    let (train, test) = split_rows(data.n(), fraction, &mut rep_rng(seed, 0))?;
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

/// Test-set MSPE of every prediction method, per fraction and repetition.
///
/// Repetition `r` draws its split and then its cross-validation folds from
/// stream `r` of `base_seed`; since the split takes a prefix of one
/// permutation, training sets are nested across fractions. Failed
/// repetitions are recorded and left out.
pub fn crime_experiment(
    table: &CleanedTable,
    fractions: &[f64],
    n_reps: usize,
    base_seed: u64,
    options: &PipelineOptions,
) -> Result<ExperimentResult> {
    if let Some(&bad) = fractions.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
        return Err(Error::InvalidConfig(format!("train fraction {bad}")));
    }
    let data = table.to_dataset()?;
    let mut result = ExperimentResult::default();
    for &fraction in fractions {
        let per_rep: Vec<Result<Vec<f64>>> = (0..n_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(base_seed, rep as u64);
                let (train_rows, test_rows) = split_rows(data.n(), fraction, &mut rng)?;
                let train = data.select_rows(&train_rows);
                let test = data.select_rows(&test_rows);
                let fits = fit_all(&train, options, &mut rng)?;
                Method::PREDICTION
                    .iter()
                    .map(|&m| {
                        let est = fits.estimate(m).expect("prediction methods need no truth");
                        mspe(&est.coefficients, est.intercept, &test)
                    })
                    .collect()
            })
            .collect();
        for (rep, outcome) in per_rep.into_iter().enumerate() {
            match outcome {
                Ok(errors) => {
                    for (m, e) in Method::PREDICTION.iter().zip(errors) {
                        result.push(m.label(), CRIME_FACTOR, fraction, rep, e);
                    }
                }
                Err(e) => {
                    log::warn!("tr = {fraction}, rep {rep} failed: {e}");
                    result.failures.push(FailedRep {
                        level: fraction,
                        rep,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    result.sort();
    Ok(result)
}

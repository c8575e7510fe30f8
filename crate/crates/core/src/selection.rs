//! Tuning-parameter selection along a path: K-fold cross-validation,
//! post-selection least squares and the oracle path point.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gram::{CrossProducts, GramSystem};
use crate::lasso::{lasso_path, LambdaGrid};
use crate::linmodel::{in_sample_loss, ols_fit, Dataset, FitResult};
use crate::rng::permutation;
use crate::slope::slope_path;

/// A procedure producing a fixed-length path of standardized solutions from
/// a standardized Gram system.
pub trait PathFitter: Sync {
    fn path_len(&self) -> usize;
    fn fit_path(&self, system: &GramSystem) -> Result<Vec<DVector<f64>>>;
}

/// Lasso path on the full-data grid, rescaled by `n_fold / n_full` so that a
/// grid index means the same per-observation penalty on every fold.
#[derive(Debug, Clone)]
pub struct LassoPathFitter {
    pub grid: LambdaGrid,
    pub n_full: usize,
}

impl PathFitter for LassoPathFitter {
    fn path_len(&self) -> usize {
        self.grid.values.len()
    }

    fn fit_path(&self, system: &GramSystem) -> Result<Vec<DVector<f64>>> {
        let grid = if system.n == self.n_full {
            self.grid.clone()
        } else {
            self.grid.scaled(system.n as f64 / self.n_full as f64)
        };
        Ok(lasso_path(system, &grid)?.coefficients)
    }
}

/// How the SLOPE penalty level follows the training-set size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldRule {
    /// Proportional to `n`, like the lasso grid.
    Proportional,
    /// Proportional to `sqrt(n - 1)`, the norm of a standardized column.
    SquareRoot,
    Constant,
}

/// SLOPE path with penalty `sigma_scale(n) * tau`, where the full-data scale
/// `base` is carried to other sample sizes by `rule`.
#[derive(Debug, Clone, Copy)]
pub struct SlopePathFitter {
    pub base: f64,
    pub n_full: usize,
    pub rule: FoldRule,
}

impl SlopePathFitter {
    pub fn sigma_scale(&self, n: usize) -> f64 {
        if n == self.n_full {
            return self.base;
        }
        match self.rule {
            FoldRule::Proportional => self.base * n as f64 / self.n_full as f64,
            FoldRule::SquareRoot => {
                self.base * ((n.max(2) - 1) as f64 / (self.n_full.max(2) - 1) as f64).sqrt()
            }
            FoldRule::Constant => self.base,
        }
    }
}

impl PathFitter for SlopePathFitter {
    fn path_len(&self) -> usize {
        crate::slope::PATH_LENGTH
    }

    fn fit_path(&self, system: &GramSystem) -> Result<Vec<DVector<f64>>> {
        Ok(slope_path(system, self.sigma_scale(system.n))?.coefficients)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Zero-based path index with the smallest error (first on ties).
    pub index_chosen: usize,
    pub cv_errors: Vec<f64>,
    /// Zero-based fold of every observation.
    pub fold_assignment: Vec<usize>,
}

/// Seeded random partition of `0..n` into `n_folds` folds whose sizes differ
/// by at most one.
pub fn fold_assignment<R: Rng + ?Sized>(n: usize, n_folds: usize, rng: &mut R) -> Vec<usize> {
    let order = permutation(n, rng);
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % n_folds;
    }
    folds
}

pub fn kfold_cv<R: Rng + ?Sized>(
    data: &Dataset,
    fitter: &dyn PathFitter,
    n_folds: usize,
    rng: &mut R,
) -> Result<CvResult> {
    check_folds(data.n(), n_folds)?;
    let folds = fold_assignment(data.n(), n_folds, rng);
    kfold_cv_with_folds(data, fitter, &folds)
}

fn check_folds(n: usize, n_folds: usize) -> Result<()> {
    if n_folds < 2 || n < n_folds {
        return Err(Error::TooFewObservations { n, folds: n_folds });
    }
    Ok(())
}

/// Cross-validation on a given fold assignment (zero-based fold ids).
///
/// Each training fold is restandardized from its own rows; its Gram system is
/// obtained by subtracting the held-out products from the full products. The
/// error at a path index is the mean over folds of the held-out mean squared
/// prediction error.
pub fn kfold_cv_with_folds(
    data: &Dataset,
    fitter: &dyn PathFitter,
    folds: &[usize],
) -> Result<CvResult> {
    let n = data.n();
    if folds.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} fold labels for {n} rows",
            folds.len()
        )));
    }
    let n_folds = folds.iter().max().map_or(0, |m| m + 1);
    check_folds(n, n_folds)?;
    let members: Vec<Vec<usize>> = (0..n_folds)
        .map(|f| (0..n).filter(|&i| folds[i] == f).collect())
        .collect();
    if let Some(f) = members.iter().position(|m| m.is_empty()) {
        return Err(Error::InvalidConfig(format!("fold {f} is empty")));
    }
    let full = CrossProducts::from_dataset(data);
    let k = fitter.path_len();
    let fold_errors: Vec<Vec<f64>> = members
        .par_iter()
        .map(|held_out| -> Result<Vec<f64>> {
            let held = CrossProducts::from_rows(data, held_out, &full);
            let system = full.minus(&held).standardize()?;
            let path = fitter.fit_path(&system)?;
            let test = data.select_rows(held_out);
            Ok(path
                .iter()
                .map(|b| {
                    let (beta, intercept) = system.info.to_original(b);
                    let pred = (&test.x * beta).add_scalar(intercept);
                    (&test.y - pred).norm_squared() / held_out.len() as f64
                })
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut cv_errors = vec![0.0; k];
    for errs in &fold_errors {
        for (total, e) in cv_errors.iter_mut().zip(errs) {
            *total += e;
        }
    }
    for e in &mut cv_errors {
        *e /= n_folds as f64;
    }
    Ok(CvResult {
        index_chosen: argmin_first(&cv_errors),
        cv_errors,
        fold_assignment: folds.to_vec(),
    })
}

/// Index of the smallest value; the first one on ties.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

/// Least squares on the selected columns, intercept-only when empty.
pub fn ols_refit(data: &Dataset, support: &[usize]) -> Result<FitResult> {
    ols_fit(data, support)
}

/// Path point with the smallest in-sample loss against the stored truth;
/// coefficients must be in the coordinates of `data`.
pub fn oracle_select(
    path_coefficients: &[DVector<f64>],
    data: &Dataset,
) -> Result<(usize, DVector<f64>)> {
    if data.beta_true.is_none() {
        return Err(Error::MissingTruth);
    }
    if path_coefficients.is_empty() {
        return Err(Error::EmptyPath);
    }
    let losses = path_coefficients
        .iter()
        .map(|b| in_sample_loss(b, data))
        .collect::<Result<Vec<f64>>>()?;
    let k = argmin_first(&losses);
    Ok((k, path_coefficients[k].clone()))
}

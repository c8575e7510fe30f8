//! Shared data types, column standardization, least squares and the loss
//! functions every estimator is scored with.

use nalgebra::{ColPivQR, DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Relative singular-value cutoff for the minimum-norm least-squares fallback.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// A regression sample: `n` rows of `p` predictors with a response.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// True coefficients, known only for simulated data.
    pub beta_true: Option<DVector<f64>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        Self::validate(&x, &y, None)?;
        Ok(Dataset {
            x,
            y,
            beta_true: None,
        })
    }

    pub fn with_truth(x: DMatrix<f64>, y: DVector<f64>, beta: DVector<f64>) -> Result<Self> {
        Self::validate(&x, &y, Some(&beta))?;
        Ok(Dataset {
            x,
            y,
            beta_true: Some(beta),
        })
    }

    fn validate(x: &DMatrix<f64>, y: &DVector<f64>, beta: Option<&DVector<f64>>) -> Result<()> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "design must be nonempty, got {}x{}",
                x.nrows(),
                x.ncols()
            )));
        }
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries for {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if let Some(b) = beta {
            if b.len() != x.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "true coefficients have {} entries for {} columns",
                    b.len(),
                    x.ncols()
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Copies the given rows (in order) into a new dataset.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let x = self.x.select_rows(rows);
        let y = DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i]));
        Dataset {
            x,
            y,
            beta_true: self.beta_true.clone(),
        }
    }
}

/// Per-column location and scale used to move between original and
/// standardized coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizationInfo {
    pub column_means: DVector<f64>,
    pub column_scales: DVector<f64>,
    pub y_mean: f64,
}

impl StandardizationInfo {
    pub fn identity(p: usize) -> Self {
        StandardizationInfo {
            column_means: DVector::zeros(p),
            column_scales: DVector::from_element(p, 1.0),
            y_mean: 0.0,
        }
    }

    /// Maps standardized-scale coefficients to original-scale coefficients
    /// and the matching intercept.
    pub fn to_original(&self, beta_std: &DVector<f64>) -> (DVector<f64>, f64) {
        let beta = beta_std.component_div(&self.column_scales);
        let intercept = self.y_mean - self.column_means.dot(&beta);
        (beta, intercept)
    }

    pub fn to_standardized(&self, beta: &DVector<f64>) -> DVector<f64> {
        beta.component_mul(&self.column_scales)
    }

    /// Inverts [`standardize`] on a dataset.
    pub fn destandardize(&self, data: &Dataset) -> Dataset {
        let mut x = data.x.clone();
        for (j, mut col) in x.column_iter_mut().enumerate() {
            let (m, s) = (self.column_means[j], self.column_scales[j]);
            col.apply(|v| *v = *v * s + m);
        }
        let y = data.y.add_scalar(self.y_mean);
        Dataset {
            x,
            y,
            beta_true: data.beta_true.clone(),
        }
    }
}

/// Result of a least-squares fit, reported on the original scale.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
    pub fitted_values: DVector<f64>,
    pub residual_ss: f64,
    /// Set when the selected columns were rank deficient or `|S| >= n` and the
    /// minimum-norm solution was returned.
    pub degenerate: bool,
}

fn mean(v: impl Iterator<Item = f64>, n: usize) -> f64 {
    v.sum::<f64>() / n as f64
}

/// Centers every column (and `y`) and scales columns to unit sample standard
/// deviation (the `1/(n-1)` convention).
///
/// Requires `n >= 2`; a column whose entries are all equal is rejected.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationInfo)> {
    let n = data.n();
    let p = data.p();
    if n < 2 {
        return Err(Error::DimensionMismatch(
            "standardization needs at least two rows".into(),
        ));
    }
    let mut x = data.x.clone();
    let mut means = DVector::zeros(p);
    let mut scales = DVector::zeros(p);
    for (j, mut col) in x.column_iter_mut().enumerate() {
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            return Err(Error::ConstantColumn(j));
        }
        let m = mean(col.iter().copied(), n);
        let ss: f64 = col.iter().map(|v| (v - m) * (v - m)).sum();
        let sd = (ss / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::ConstantColumn(j));
        }
        col.apply(|v| *v = (*v - m) / sd);
        means[j] = m;
        scales[j] = sd;
    }
    let y_mean = mean(data.y.iter().copied(), n);
    let y = data.y.add_scalar(-y_mean);
    let info = StandardizationInfo {
        column_means: means,
        column_scales: scales,
        y_mean,
    };
    Ok((
        Dataset {
            x,
            y,
            beta_true: data.beta_true.as_ref().map(|b| info.to_standardized(b)),
        },
        info,
    ))
}

fn finish_fit(data: &Dataset, coefficients: DVector<f64>, intercept: f64, degenerate: bool) -> FitResult {
    let fitted_values = (&data.x * &coefficients).add_scalar(intercept);
    let residual_ss = (&data.y - &fitted_values).norm_squared();
    FitResult {
        coefficients,
        intercept,
        fitted_values,
        residual_ss,
        degenerate,
    }
}

/// Least squares with an intercept on the columns in `support`; all other
/// coefficients are zero.
///
/// Full-rank problems are solved through a column-pivoted QR. When the
/// centered columns are (numerically) rank deficient or `|S| >= n` the
/// minimum-norm solution from an SVD is returned with `degenerate` set.
pub fn ols_fit(data: &Dataset, support: &[usize]) -> Result<FitResult> {
    let n = data.n();
    let p = data.p();
    if let Some(&j) = support.iter().find(|&&j| j >= p) {
        return Err(Error::DimensionMismatch(format!(
            "support index {j} out of range for {p} columns"
        )));
    }
    let y_mean = mean(data.y.iter().copied(), n);
    if support.is_empty() {
        return Ok(finish_fit(data, DVector::zeros(p), y_mean, false));
    }
    let k = support.len();
    let mut xs = data.x.select_columns(support);
    let mut col_means = DVector::zeros(k);
    for (j, mut col) in xs.column_iter_mut().enumerate() {
        let m = mean(col.iter().copied(), n);
        col.add_scalar_mut(-m);
        col_means[j] = m;
    }
    let yc = data.y.add_scalar(-y_mean);

    let (sol, degenerate) = if k < n {
        match qr_solve(&xs, &yc) {
            Some(sol) => (sol, false),
            None => svd_solve(xs, &yc),
        }
    } else {
        let (sol, _) = svd_solve(xs, &yc);
        (sol, true)
    };

    let mut coefficients = DVector::zeros(p);
    for (i, &j) in support.iter().enumerate() {
        coefficients[j] += sol[i];
    }
    let intercept = y_mean - col_means.dot(&sol);
    Ok(finish_fit(data, coefficients, intercept, degenerate))
}

/// Returns `None` when the pivoted R factor looks rank deficient.
fn qr_solve(xs: &DMatrix<f64>, yc: &DVector<f64>) -> Option<DVector<f64>> {
    let k = xs.ncols();
    let qr = ColPivQR::new(xs.clone());
    let r = qr.r();
    let r0 = r[(0, 0)].abs();
    if r0 == 0.0 {
        return None;
    }
    // Column pivoting orders |R_ii| nonincreasingly, so the last entry is the
    // smallest; a conservative 1e-8 ratio hands borderline cases to the SVD.
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-8 * r0) {
        return None;
    }
    let mut rhs = yc.clone();
    qr.q_tr_mul(&mut rhs);
    let rk = r.view((0, 0), (k, k));
    let mut sol = rk.solve_upper_triangular(&rhs.rows(0, k).into_owned())?;
    qr.p().inv_permute_rows(&mut sol);
    Some(sol)
}

fn svd_solve(xs: DMatrix<f64>, yc: &DVector<f64>) -> (DVector<f64>, bool) {
    let k = xs.ncols();
    let svd = SVD::new(xs, true, true);
    let smax = svd.singular_values.max();
    let eps = RANK_TOLERANCE * smax;
    let rank = svd.rank(eps);
    let sol = if smax > 0.0 {
        svd.solve(yc, eps).unwrap_or_else(|_| DVector::zeros(k))
    } else {
        DVector::zeros(k)
    };
    (sol, rank < k)
}

/// In-sample loss `||X (beta_hat - beta)||^2` against the stored truth.
pub fn in_sample_loss(beta_hat: &DVector<f64>, data: &Dataset) -> Result<f64> {
    let beta = data.beta_true.as_ref().ok_or(Error::MissingTruth)?;
    if beta_hat.len() != beta.len() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} entries, truth has {}",
            beta_hat.len(),
            beta.len()
        )));
    }
    Ok((&data.x * (beta_hat - beta)).norm_squared())
}

/// Mean squared prediction error of `intercept + x' beta_hat` on `test`.
pub fn mspe(beta_hat: &DVector<f64>, intercept: f64, test: &Dataset) -> Result<f64> {
    let n = test.n();
    if n == 0 {
        return Err(Error::EmptyTestSet);
    }
    if beta_hat.len() != test.p() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} entries for {} columns",
            beta_hat.len(),
            test.p()
        )));
    }
    let pred = (&test.x * beta_hat).add_scalar(intercept);
    Ok((&test.y - pred).norm_squared() / n as f64)
}

/// Residual mean square `RSS / (n - df_used)`.
pub fn sigma2_from_residuals(fit: &FitResult, df_used: usize) -> Result<f64> {
    let n = fit.fitted_values.len();
    if n <= df_used {
        return Err(Error::DegreesExhausted { n, df: df_used });
    }
    Ok(fit.residual_ss / (n - df_used) as f64)
}

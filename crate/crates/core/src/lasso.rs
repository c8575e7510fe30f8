//! Lasso solution paths by cyclic coordinate descent with warm starts.
//!
//! The solver minimizes `(1/2)||y - X b||^2 + lambda ||b||_1` on a
//! standardized [`GramSystem`], using covariance updates: the residual
//! correlations `X'(y - X b)` are kept current and a coordinate move only
//! costs one Gram column.

use nalgebra::{Cholesky, DVector};

use crate::error::{Error, Result};
use crate::gram::GramSystem;

pub const DEFAULT_PATH_LENGTH: usize = 100;
pub const DEFAULT_MAX_SWEEPS: usize = 10_000;
/// Sweeps over the active set between exact active-set solves.
const ACTIVE_SWEEPS: usize = 20;
const MAX_POLISH_STEPS: usize = 50;
/// Stopping threshold on the largest KKT residual, relative to `max(1, lambda)`.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

/// Geometric grid `lambda_max * eta^((i-1)/(K-1))`, decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    pub values: Vec<f64>,
    pub eta: f64,
    pub k: usize,
}

impl LambdaGrid {
    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }

    /// The same grid with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> LambdaGrid {
        LambdaGrid {
            values: self.values.iter().map(|v| v * factor).collect(),
            eta: self.eta,
            k: self.k,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LassoPath {
    pub grid: LambdaGrid,
    /// Standardized-scale solutions, one per grid value.
    pub coefficients: Vec<DVector<f64>>,
    pub support_sizes: Vec<usize>,
    pub converged: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coefficients: DVector<f64>,
    pub converged: bool,
    pub sweeps: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    pub tolerance: f64,
    pub max_sweeps: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_sweeps: DEFAULT_MAX_SWEEPS,
        }
    }
}

/// Smallest penalty with an all-zero solution: `max_j |x_j'y|`.
pub fn lambda_max(system: &GramSystem) -> f64 {
    system.xty.amax()
}

pub fn lambda_grid(lam_max: f64, eta: f64, k: usize) -> Result<LambdaGrid> {
    if !(lam_max > 0.0) || !lam_max.is_finite() {
        return Err(Error::InvalidGridParams(format!("lambda_max = {lam_max}")));
    }
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::InvalidGridParams(format!("eta = {eta}")));
    }
    if k < 2 {
        return Err(Error::InvalidGridParams(format!("k = {k}")));
    }
    let log_ratio = eta.ln() / (k - 1) as f64;
    let values = (0..k)
        .map(|i| match i {
            0 => lam_max,
            i if i == k - 1 => lam_max * eta,
            i => lam_max * (log_ratio * i as f64).exp(),
        })
        .collect();
    Ok(LambdaGrid { values, eta, k })
}

/// Grid with `K = 100` and `eta = 0.01` when `p > n`, `eta = 1e-4` otherwise.
pub fn default_grid(system: &GramSystem) -> Result<LambdaGrid> {
    let eta = if system.p() > system.n { 0.01 } else { 1e-4 };
    lambda_grid(lambda_max(system), eta, DEFAULT_PATH_LENGTH)
}

pub fn objective(system: &GramSystem, beta: &DVector<f64>, lambda: f64) -> f64 {
    0.5 * system.rss(beta) + lambda * beta.lp_norm(1)
}

fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

struct CoordinateDescent<'a> {
    system: &'a GramSystem,
    lambda: f64,
    beta: DVector<f64>,
    corr: DVector<f64>,
}

impl CoordinateDescent<'_> {
    /// Updates coordinate `j` and returns the change in gradient units.
    fn update(&mut self, j: usize) -> f64 {
        let g = self.system.gram[(j, j)];
        if g <= 0.0 {
            return 0.0;
        }
        let old = self.beta[j];
        let new = soft_threshold(self.corr[j] + g * old, self.lambda) / g;
        let delta = new - old;
        if delta != 0.0 {
            self.corr.axpy(-delta, &self.system.gram.column(j), 1.0);
            self.beta[j] = new;
        }
        g * delta.abs()
    }

    /// Largest violation of the optimality conditions, from the maintained
    /// residual correlations.
    fn kkt_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (b, c) in self.beta.iter().zip(self.corr.iter()) {
            let v = if *b == 0.0 {
                c.abs() - self.lambda
            } else {
                (c - self.lambda * b.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Solves the optimality equations on the current active set with the
    /// current signs, `G_AA b_A = X_A'y - lambda s_A`. If the solution flips a
    /// sign, moves toward it until the first coordinate reaches zero, drops
    /// that coordinate and retries. Every step stays on the current orthant
    /// face, where the objective is a convex quadratic, so it never increases.
    /// Returns true when a sign-consistent solution was reached.
    fn polish(&mut self) -> bool {
        let n = self.system.n;
        for _ in 0..MAX_POLISH_STEPS {
            let active: Vec<usize> = (0..self.beta.len()).filter(|&j| self.beta[j] != 0.0).collect();
            if active.is_empty() {
                return true;
            }
            if active.len() >= n {
                return false;
            }
            let gram = &self.system.gram;
            let sub = gram.select_rows(&active).select_columns(&active);
            let Some(chol) = Cholesky::new(sub) else {
                return false;
            };
            let rhs = DVector::from_iterator(
                active.len(),
                active
                    .iter()
                    .map(|&j| self.system.xty[j] - self.lambda * self.beta[j].signum()),
            );
            let target = chol.solve(&rhs);
            if !target.iter().all(|v| v.is_finite()) {
                return false;
            }
            let mut step = 1.0;
            let mut blocking = None;
            for (i, &j) in active.iter().enumerate() {
                let (b, x) = (self.beta[j], target[i]);
                if x * b.signum() <= 0.0 {
                    let t = b / (b - x);
                    if t < step {
                        step = t;
                        blocking = Some(j);
                    }
                }
            }
            for (i, &j) in active.iter().enumerate() {
                let b = self.beta[j];
                self.beta[j] = b + step * (target[i] - b);
            }
            if let Some(j) = blocking {
                self.beta[j] = 0.0;
            }
            self.corr = self.system.correlations(&self.beta);
            if blocking.is_none() {
                return true;
            }
        }
        false
    }

    fn sweep(&mut self, coords: impl Iterator<Item = usize>) -> f64 {
        let mut worst: f64 = 0.0;
        for j in coords {
            worst = worst.max(self.update(j));
        }
        worst
    }
}

/// Solves one lasso problem, optionally warm-started, recording the objective
/// after every sweep when `trace` is given.
pub fn lasso_fit_with(
    system: &GramSystem,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
    options: LassoOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<LassoFit> {
    let p = system.p();
    if !(lambda >= 0.0) {
        return Err(Error::InvalidGridParams(format!("lambda = {lambda}")));
    }
    let beta = match warm_start {
        Some(b) if b.len() != p => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries for {p} columns",
                b.len()
            )))
        }
        Some(b) => b.clone(),
        None => DVector::zeros(p),
    };
    let corr = system.correlations(&beta);
    let mut cd = CoordinateDescent {
        system,
        lambda,
        beta,
        corr,
    };
    let tol = options.tolerance * lambda.max(1.0);
    let mut sweeps = 0;
    let mut converged = false;
    let record = |cd: &CoordinateDescent, trace: &mut Option<&mut Vec<f64>>| {
        if let Some(t) = trace.as_deref_mut() {
            t.push(objective(system, &cd.beta, lambda));
        }
    };
    while sweeps < options.max_sweeps {
        cd.sweep(0..p);
        sweeps += 1;
        record(&cd, &mut trace);
        if cd.kkt_violation() < tol {
            converged = true;
            break;
        }
        let active: Vec<usize> = (0..p).filter(|&j| cd.beta[j] != 0.0).collect();
        let mut settled = false;
        for _ in 0..ACTIVE_SWEEPS {
            if sweeps >= options.max_sweeps {
                break;
            }
            let change = cd.sweep(active.iter().copied());
            sweeps += 1;
            record(&cd, &mut trace);
            if change < tol {
                settled = true;
                break;
            }
        }
        // Slow progress on the active set: finish it with a direct solve.
        if !settled && cd.polish() && cd.kkt_violation() < tol {
            converged = true;
            record(&cd, &mut trace);
            break;
        }
    }
    if !converged {
        log::warn!("lasso coordinate descent hit {sweeps} sweeps at lambda = {lambda}");
    }
    Ok(LassoFit {
        coefficients: cd.beta,
        converged,
        sweeps,
    })
}

pub fn lasso_fit(
    system: &GramSystem,
    lambda: f64,
    warm_start: Option<&DVector<f64>>,
) -> Result<LassoFit> {
    lasso_fit_with(system, lambda, warm_start, LassoOptions::default(), None)
}

pub fn lasso_path(system: &GramSystem, grid: &LambdaGrid) -> Result<LassoPath> {
    lasso_path_with(system, grid, LassoOptions::default())
}

pub fn lasso_path_with(
    system: &GramSystem,
    grid: &LambdaGrid,
    options: LassoOptions,
) -> Result<LassoPath> {
    let mut coefficients = Vec::with_capacity(grid.values.len());
    let mut converged = Vec::with_capacity(grid.values.len());
    let mut warm: Option<DVector<f64>> = None;
    for &lambda in &grid.values {
        let fit = lasso_fit_with(system, lambda, warm.as_ref(), options, None)?;
        converged.push(fit.converged);
        warm = Some(fit.coefficients.clone());
        coefficients.push(fit.coefficients);
    }
    let support_sizes = coefficients.iter().map(support_size).collect();
    Ok(LassoPath {
        grid: grid.clone(),
        coefficients,
        support_sizes,
        converged,
    })
}

pub fn support_size(beta: &DVector<f64>) -> usize {
    beta.iter().filter(|&&b| b != 0.0).count()
}

pub fn support(beta: &DVector<f64>) -> Vec<usize> {
    beta.iter()
        .enumerate()
        .filter_map(|(j, &b)| (b != 0.0).then_some(j))
        .collect()
}

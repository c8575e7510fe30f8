//! The path-based estimators compared in the experiments.
//!
//! For each path family (lasso over a lambda grid, SLOPE over the q grid) the
//! path is fitted once on the full training data and cross-validated on a
//! shared fold assignment. From there:
//! - `*-cv` is the path point at the cross-validated index;
//! - `*-ols` refits least squares on its support;
//! - `*-ma` averages all path points with Mallows weights, using the residual
//!   mean square of the `*-cv` fit as the noise estimate;
//! - `*-optimal` is the path point with the smallest in-sample loss, which
//!   needs the true coefficients.
//!
//! The SLOPE weights are multiplied by a scale chosen by [`SlopeScale`]; by
//! default the middle of the q grid gets the same mean penalty per coefficient
//! as the cross-validated lasso.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::averaging::{combine, SimplexQuadratic, WeightVector};
use crate::error::{Error, Result};
use crate::gram::GramSystem;
use crate::lasso::{default_grid, support, support_size};
use crate::linmodel::{in_sample_loss, Dataset};
use crate::selection::{
    argmin_first, fold_assignment, kfold_cv_with_folds, ols_refit, CvResult, FoldRule,
    LassoPathFitter, PathFitter, SlopePathFitter,
};
use crate::slope::bh_weights;

pub const DEFAULT_FOLDS: usize = 10;
/// Grid level whose mean weight is matched to the lasso penalty.
pub const ANCHOR_Q: f64 = 1e-6;

/// Multiplier applied to the SLOPE weights on the standardized problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlopeScale {
    /// `lambda_cv / mean(tau(ANCHOR_Q))`, so the q grid brackets the
    /// cross-validated lasso penalty.
    LassoAnchored,
    /// The lasso noise estimate `sigma_hat`.
    Noise,
    /// `sigma_hat * sqrt(n - 1)`: weights calibrated for unit-norm columns.
    UnitNormNoise,
    /// A constant; `Fixed(1.0)` applies the weights as they are.
    Fixed(f64),
}

impl SlopeScale {
    pub fn label(self) -> String {
        match self {
            SlopeScale::LassoAnchored => "anchored".into(),
            SlopeScale::Noise => "noise".into(),
            SlopeScale::UnitNormNoise => "unit-noise".into(),
            SlopeScale::Fixed(v) => format!("{v}"),
        }
    }

    /// Parses a label of [`SlopeScale::label`] or a positive number.
    pub fn parse(text: &str) -> Result<SlopeScale> {
        match text {
            "anchored" => Ok(SlopeScale::LassoAnchored),
            "noise" => Ok(SlopeScale::Noise),
            "unit-noise" => Ok(SlopeScale::UnitNormNoise),
            other => match other.parse::<f64>() {
                Ok(v) if v > 0.0 && v.is_finite() => Ok(SlopeScale::Fixed(v)),
                _ => Err(Error::InvalidConfig(format!("slope scale '{text}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineOptions {
    pub n_folds: usize,
    pub slope_scale: SlopeScale,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            n_folds: DEFAULT_FOLDS,
            slope_scale: SlopeScale::LassoAnchored,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    LassoCv,
    LassoOls,
    LassoMa,
    LassoOptimal,
    SlopeCv,
    SlopeOls,
    SlopeMa,
    SlopeOptimal,
}

impl Method {
    /// Methods scored by in-sample loss in the simulations.
    pub const SIMULATION: [Method; 6] = [
        Method::LassoMa,
        Method::SlopeMa,
        Method::LassoOls,
        Method::SlopeOls,
        Method::LassoOptimal,
        Method::SlopeOptimal,
    ];

    /// Methods scored by test error on real data.
    pub const PREDICTION: [Method; 6] = [
        Method::LassoCv,
        Method::LassoOls,
        Method::LassoMa,
        Method::SlopeCv,
        Method::SlopeOls,
        Method::SlopeMa,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::LassoCv => "lasso-cv",
            Method::LassoOls => "lasso-ols",
            Method::LassoMa => "lasso-ma",
            Method::LassoOptimal => "lasso-optimal",
            Method::SlopeCv => "SLOPE-cv",
            Method::SlopeOls => "SLOPE-ols",
            Method::SlopeMa => "SLOPE-ma",
            Method::SlopeOptimal => "SLOPE-optimal",
        }
    }

    pub fn from_label(label: &str) -> Option<Method> {
        [
            Method::LassoCv,
            Method::LassoOls,
            Method::LassoMa,
            Method::LassoOptimal,
            Method::SlopeCv,
            Method::SlopeOls,
            Method::SlopeMa,
            Method::SlopeOptimal,
        ]
        .into_iter()
        .find(|m| m.label() == label)
    }
}

/// Original-scale linear predictor `intercept + x' coefficients`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub coefficients: DVector<f64>,
    pub intercept: f64,
}

impl Estimate {
    fn from_standardized(system: &GramSystem, beta_std: &DVector<f64>) -> Self {
        let (coefficients, intercept) = system.info.to_original(beta_std);
        Estimate {
            coefficients,
            intercept,
        }
    }
}

/// Everything derived from one path family on one training set.
#[derive(Debug, Clone)]
pub struct FamilyFit {
    /// Standardized-scale path.
    pub path: Vec<DVector<f64>>,
    pub cv: CvResult,
    /// Residual mean square of the cross-validated fit.
    pub sigma2_hat: f64,
    pub weights: WeightVector,
    pub cv_fit: Estimate,
    pub ols: Estimate,
    pub ma: Estimate,
    /// Present when the data carry the true coefficients.
    pub oracle: Option<OracleFit>,
}

#[derive(Debug, Clone)]
pub struct OracleFit {
    pub index: usize,
    pub estimate: Estimate,
    /// In-sample loss of every path point.
    pub path_losses: Vec<f64>,
    pub ma_loss: f64,
    /// `L(sum_k w_k b_k) - sum_k w_k L(b_k)`, nonpositive up to rounding.
    pub convexity_gap: f64,
}

/// `RSS / (n - s)`, or `RSS / n` when the fit uses `n` or more columns.
pub fn residual_variance(system: &GramSystem, beta_std: &DVector<f64>) -> f64 {
    let s = support_size(beta_std);
    let df = if system.n > s { system.n - s } else { system.n };
    system.rss(beta_std) / df as f64
}

/// In-sample losses of several original-scale coefficient vectors at once.
pub fn in_sample_losses(data: &Dataset, coefficients: &[DVector<f64>]) -> Result<Vec<f64>> {
    let truth = data.beta_true.as_ref().ok_or(Error::MissingTruth)?;
    let diffs = DMatrix::from_columns(
        &coefficients
            .iter()
            .map(|b| b - truth)
            .collect::<Vec<DVector<f64>>>(),
    );
    let fitted = &data.x * diffs;
    Ok(fitted.column_iter().map(|c| c.norm_squared()).collect())
}

/// Fits one family given its full-data path and the shared folds.
pub fn fit_family(
    data: &Dataset,
    system: &GramSystem,
    fitter: &dyn PathFitter,
    folds: &[usize],
) -> Result<FamilyFit> {
    let path = fitter.fit_path(system)?;
    if path.is_empty() {
        return Err(Error::EmptyPath);
    }
    let cv = kfold_cv_with_folds(data, fitter, folds)?;
    let chosen = &path[cv.index_chosen];
    let sigma2_hat = residual_variance(system, chosen);
    if !(sigma2_hat > 0.0) {
        return Err(Error::DegreesExhausted {
            n: system.n,
            df: support_size(chosen),
        });
    }
    let ols_fit = ols_refit(data, &support(chosen))?;
    let quad = SimplexQuadratic::from_gram(system, &path, sigma2_hat)?;
    let w = quad.minimize();
    let weights = WeightVector {
        criterion: quad.value(&w),
        w,
    };
    let ma = Estimate::from_standardized(system, &combine(&path, &weights.w));
    let oracle = if data.beta_true.is_some() {
        let original: Vec<DVector<f64>> = path
            .iter()
            .map(|b| system.info.to_original(b).0)
            .collect();
        let path_losses = in_sample_losses(data, &original)?;
        let index = argmin_first(&path_losses);
        let ma_loss = in_sample_losses(data, std::slice::from_ref(&ma.coefficients))?[0];
        let averaged: f64 = weights
            .w
            .iter()
            .zip(&path_losses)
            .map(|(w, l)| w * l)
            .sum();
        Some(OracleFit {
            index,
            estimate: Estimate::from_standardized(system, &path[index]),
            path_losses,
            ma_loss,
            convexity_gap: ma_loss - averaged,
        })
    } else {
        None
    };
    Ok(FamilyFit {
        cv_fit: Estimate::from_standardized(system, chosen),
        ols: Estimate {
            coefficients: ols_fit.coefficients,
            intercept: ols_fit.intercept,
        },
        ma,
        path,
        cv,
        sigma2_hat,
        weights,
        oracle,
    })
}

#[derive(Debug, Clone)]
pub struct AllFits {
    pub lasso: FamilyFit,
    pub slope: FamilyFit,
}

impl AllFits {
    pub fn estimate(&self, method: Method) -> Option<&Estimate> {
        match method {
            Method::LassoCv => Some(&self.lasso.cv_fit),
            Method::LassoOls => Some(&self.lasso.ols),
            Method::LassoMa => Some(&self.lasso.ma),
            Method::LassoOptimal => self.lasso.oracle.as_ref().map(|o| &o.estimate),
            Method::SlopeCv => Some(&self.slope.cv_fit),
            Method::SlopeOls => Some(&self.slope.ols),
            Method::SlopeMa => Some(&self.slope.ma),
            Method::SlopeOptimal => self.slope.oracle.as_ref().map(|o| &o.estimate),
        }
    }

    /// In-sample loss of `method` against the truth stored in `data`.
    pub fn loss(&self, method: Method, data: &Dataset) -> Result<f64> {
        let est = self.estimate(method).ok_or(Error::MissingTruth)?;
        in_sample_loss(&est.coefficients, data)
    }
}

/// Lasso and SLOPE estimators on `data`; the fold assignment is drawn from
/// `rng`.
pub fn fit_all<R: Rng + ?Sized>(
    data: &Dataset,
    options: &PipelineOptions,
    rng: &mut R,
) -> Result<AllFits> {
    let n_folds = options.n_folds;
    if n_folds < 2 || data.n() < n_folds {
        return Err(Error::TooFewObservations {
            n: data.n(),
            folds: n_folds,
        });
    }
    let folds = fold_assignment(data.n(), n_folds, rng);
    let system = GramSystem::from_dataset(data)?;
    let lasso_fitter = LassoPathFitter {
        grid: default_grid(&system)?,
        n_full: system.n,
    };
    let lasso = fit_family(data, &system, &lasso_fitter, &folds)?;
    let lambda_cv = lasso_fitter.grid.values[lasso.cv.index_chosen];
    let slope_fitter = slope_fitter(options.slope_scale, &system, lambda_cv, lasso.sigma2_hat)?;
    let slope = fit_family(data, &system, &slope_fitter, &folds)?;
    Ok(AllFits { lasso, slope })
}

/// The SLOPE path fitter for `scale` on the full-data `system`.
pub fn slope_fitter(
    scale: SlopeScale,
    system: &GramSystem,
    lambda_cv: f64,
    sigma2_hat: f64,
) -> Result<SlopePathFitter> {
    let n = system.n;
    let (base, rule) = match scale {
        SlopeScale::LassoAnchored => {
            let mean_tau = bh_weights(ANCHOR_Q, system.p())?.tau.mean();
            (lambda_cv / mean_tau, FoldRule::Proportional)
        }
        SlopeScale::Noise => (sigma2_hat.sqrt(), FoldRule::Constant),
        SlopeScale::UnitNormNoise => (
            sigma2_hat.sqrt() * ((n.max(2) - 1) as f64).sqrt(),
            FoldRule::SquareRoot,
        ),
        SlopeScale::Fixed(v) => (v, FoldRule::Constant),
    };
    if !(base > 0.0) || !base.is_finite() {
        return Err(Error::InvalidConfig(format!("SLOPE scale {base}")));
    }
    Ok(SlopePathFitter {
        base,
        n_full: n,
        rule,
    })
}

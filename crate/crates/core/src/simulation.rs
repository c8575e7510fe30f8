//! Gaussian designs with decaying signals and the two simulation studies:
//! the effect of predictor ordering on nested model averaging, and the
//! one-factor-at-a-time comparison of the path estimators.
//!
//! The noise variance is fixed at one; the signal strength `c` is set so that
//! the population R-squared hits its target. Repetition `r` draws everything,
//! including its cross-validation folds, from stream `r` of the base seed, so
//! every level of a sweep sees the same underlying Gaussian draws.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use crate::averaging::SimplexQuadratic;
use crate::error::{Error, Result};
use crate::estimators::{fit_all, Method, PipelineOptions, SlopeScale, DEFAULT_FOLDS};
use crate::linmodel::{in_sample_loss, Dataset};
use crate::report::{mean_and_stderr, ExperimentResult, FailedRep, SummaryRow};
use crate::rng::{rep_rng, standard_normal};

/// Noise variance of every simulated response.
pub const NOISE_VARIANCE: f64 = 1.0;
pub const ORDERING_METHOD: &str = "mma";
pub const ORDERING_RELATIVE: &str = "mma-relative";
pub const ORDERING_FACTOR: &str = "l";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    /// `rho` off the diagonal, one on it.
    CompoundSymmetry,
    /// `rho^|i - j|`.
    AutoRegressive,
    /// Compound symmetry among the first `s` columns, independent unit
    /// variance noise columns.
    BlockCsIdentity,
}

impl CovKind {
    pub fn label(self) -> &'static str {
        match self {
            CovKind::CompoundSymmetry => "cs",
            CovKind::AutoRegressive => "ar",
            CovKind::BlockCsIdentity => "block",
        }
    }

    pub fn from_label(label: &str) -> Option<CovKind> {
        match label {
            "cs" => Some(CovKind::CompoundSymmetry),
            "ar" => Some(CovKind::AutoRegressive),
            "block" => Some(CovKind::BlockCsIdentity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovSpec {
    pub kind: CovKind,
    pub rho: f64,
    pub p: usize,
    pub s: usize,
}

impl CovSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            CovKind::CompoundSymmetry | CovKind::BlockCsIdentity => (0.0..1.0).contains(&self.rho),
            CovKind::AutoRegressive => self.rho.abs() < 1.0,
        };
        if !ok {
            return Err(Error::InvalidCovariance(format!(
                "rho = {} for {} covariance",
                self.rho,
                self.kind.label()
            )));
        }
        if self.p == 0 {
            return Err(Error::InvalidCovariance("p = 0".into()));
        }
        if self.kind == CovKind::BlockCsIdentity && self.s > self.p {
            return Err(Error::InvalidCovariance(format!("block of {} in {} columns", self.s, self.p)));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let (rho, s) = (self.rho, self.s);
        Ok(DMatrix::from_fn(self.p, self.p, |i, j| {
            if i == j {
                return 1.0;
            }
            match self.kind {
                CovKind::CompoundSymmetry => rho,
                CovKind::AutoRegressive => rho.powi(i.abs_diff(j) as i32),
                CovKind::BlockCsIdentity if i < s && j < s => rho,
                CovKind::BlockCsIdentity => 0.0,
            }
        }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub rho: f64,
    pub r2_target: f64,
    pub delta: f64,
    pub cov_kind: CovKind,
    pub n_reps: usize,
    pub base_seed: u64,
    pub n_folds: usize,
    pub slope_scale: SlopeScale,
}

impl SimConfig {
    /// Baseline of the ordering study.
    pub fn ordering_defaults() -> Self {
        SimConfig {
            n: 500,
            p: 150,
            s: 20,
            rho: 0.1,
            r2_target: 0.5,
            delta: 0.5,
            cov_kind: CovKind::BlockCsIdentity,
            n_reps: 200,
            base_seed: 7,
            n_folds: DEFAULT_FOLDS,
            slope_scale: SlopeScale::LassoAnchored,
        }
    }

    /// Fixed factors of the method comparison.
    pub fn comparison_defaults(cov_kind: CovKind) -> Self {
        SimConfig {
            n: 500,
            p: 600,
            s: 100,
            rho: 0.1,
            r2_target: 0.5,
            delta: 0.5,
            cov_kind,
            n_reps: 200,
            base_seed: 7,
            n_folds: DEFAULT_FOLDS,
            slope_scale: SlopeScale::LassoAnchored,
        }
    }

    pub fn cov(&self) -> CovSpec {
        CovSpec {
            kind: self.cov_kind,
            rho: self.rho,
            p: self.p,
            s: self.s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!("n = {}", self.n)));
        }
        if self.s == 0 || self.s > self.p {
            return Err(Error::InvalidConfig(format!("s = {} with p = {}", self.s, self.p)));
        }
        if !(self.r2_target > 0.0 && self.r2_target < 1.0) {
            return Err(Error::InvalidConfig(format!("r2 = {}", self.r2_target)));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::InvalidConfig(format!("delta = {}", self.delta)));
        }
        self.cov().validate()
    }
}

/// `c * j^(-delta)` for `j = 1..=s`, zero for the remaining `p - s` entries.
pub fn decay_coefficients(p: usize, s: usize, delta: f64, c: f64) -> DVector<f64> {
    DVector::from_fn(p, |j, _| {
        if j < s {
            c * ((j + 1) as f64).powf(-delta)
        } else {
            0.0
        }
    })
}

/// Scale `c` with `c^2 b'Sigma b = sigma2 r2 / (1 - r2)`.
pub fn calibrate_c(cov: &DMatrix<f64>, unit_beta: &DVector<f64>, r2_target: f64, sigma2: f64) -> Result<f64> {
    if !(r2_target > 0.0 && r2_target < 1.0) {
        return Err(Error::InvalidConfig(format!("r2 = {r2_target}")));
    }
    let signal = unit_beta.dot(&(cov * unit_beta));
    if !(signal > 0.0) {
        return Err(Error::DegenerateSignal);
    }
    Ok((sigma2 * r2_target / (1.0 - r2_target) / signal).sqrt())
}

/// Cholesky factor and coefficients of one configuration, reused across reps.
#[derive(Debug, Clone)]
pub struct DesignSampler {
    n: usize,
    lower: DMatrix<f64>,
    beta: DVector<f64>,
}

impl DesignSampler {
    pub fn new(config: &SimConfig) -> Result<Self> {
        config.validate()?;
        let sigma = config.cov().matrix()?;
        let unit = decay_coefficients(config.p, config.s, config.delta, 1.0);
        let c = calibrate_c(&sigma, &unit, config.r2_target, NOISE_VARIANCE)?;
        let lower = Cholesky::new(sigma).ok_or(Error::CholeskyFailure)?.unpack();
        Ok(DesignSampler {
            n: config.n,
            lower,
            beta: unit * c,
        })
    }

    pub fn beta(&self) -> &DVector<f64> {
        &self.beta
    }

    /// Rows `L z` with `z` standard normal (drawn row by row), then the noise.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Dataset {
        let p = self.beta.len();
        let z = DMatrix::from_row_iterator(self.n, p, (0..self.n * p).map(|_| standard_normal(rng)));
        let x = z * self.lower.transpose();
        let noise_sd = NOISE_VARIANCE.sqrt();
        let y = &x * &self.beta + DVector::from_fn(self.n, |_, _| noise_sd * standard_normal(rng));
        Dataset::with_truth(x, y, self.beta.clone()).expect("shapes agree by construction")
    }
}

/// Dataset of repetition `rep_seed` under `config.base_seed`.
pub fn generate_dataset(config: &SimConfig, rep_seed: u64) -> Result<Dataset> {
    let sampler = DesignSampler::new(config)?;
    Ok(sampler.sample(&mut rep_rng(config.base_seed, rep_seed)))
}

/// Column order placing noise columns `s..s+l` ahead of the signals.
pub fn ordering_permutation(p: usize, s: usize, l: usize) -> Vec<usize> {
    (s..s + l).chain(0..s).chain(s + l..p).collect()
}

/// Nested least squares fits without intercept on the prefixes of `order`,
/// averaged with Mallows weights. Returns original-order coefficients.
///
/// With `X_order = Q R` and `z = Q'y`, prefix `k` fits `Q_k z_k`, so the
/// candidate Gram matrix is `A_kl = sum_{j <= min(k, l)} z_j^2` and the
/// average is `R^{-1} (t * z)` with `t_j` the total weight on prefixes that
/// contain column `j`.
pub fn nested_mma(data: &Dataset, order: &[usize], sigma2_hat: f64) -> Result<DVector<f64>> {
    let (n, p) = (data.n(), data.p());
    if order.len() != p {
        return Err(Error::DimensionMismatch(format!("ordering of {} for {p} columns", order.len())));
    }
    if n < p + 2 {
        return Err(Error::ConfigExceedsDimensions(format!("{p} nested columns with n = {n}")));
    }
    let x = data.x.select_columns(order);
    let qr = x.qr();
    let mut qty = data.y.clone();
    qr.q_tr_mul(&mut qty);
    let z = qty.rows(0, p).into_owned();
    let mut cumulative = DVector::zeros(p + 1);
    for j in 0..p {
        cumulative[j + 1] = cumulative[j] + z[j] * z[j];
    }
    let a = DMatrix::from_fn(p + 1, p + 1, |k, l| cumulative[k.min(l)]);
    let b = DVector::from_fn(p + 1, |k, _| cumulative[k] - sigma2_hat * k as f64);
    let quad = SimplexQuadratic {
        a,
        b,
        c: data.y.norm_squared(),
    };
    let w = quad.minimize();
    let mut tail = 0.0;
    let mut scaled = DVector::zeros(p);
    for j in (0..p).rev() {
        tail += w[j + 1];
        scaled[j] = tail * z[j];
    }
    let r = qr.r();
    let coef = r
        .solve_upper_triangular(&scaled)
        .ok_or_else(|| Error::ConfigExceedsDimensions("singular design in nested fits".into()))?;
    let mut out = DVector::zeros(p);
    for (pos, &col) in order.iter().enumerate() {
        out[col] = coef[pos];
    }
    Ok(out)
}

/// Full-model residual mean square `RSS / (n - p)` without intercept.
pub fn full_model_variance(data: &Dataset) -> Result<f64> {
    let (n, p) = (data.n(), data.p());
    if n <= p {
        return Err(Error::DegreesExhausted { n, df: p });
    }
    let qr = data.x.clone().qr();
    let mut qty = data.y.clone();
    qr.q_tr_mul(&mut qty);
    let rss: f64 = qty.rows(p, n - p).norm_squared();
    Ok(rss / (n - p) as f64)
}

/// Loss of nested averaging for every `l`, on one shared dataset per rep.
/// Adds the ratio of mean losses to `l = 0` as derived rows.
pub fn ordering_experiment(config: &SimConfig, l_values: &[usize]) -> Result<ExperimentResult> {
    let max_l = l_values.iter().copied().max().unwrap_or(0);
    if max_l + config.s > config.p {
        return Err(Error::ConfigExceedsDimensions(format!(
            "l = {max_l} with s = {} exceeds p = {}",
            config.s, config.p
        )));
    }
    if config.n < config.p + 2 {
        return Err(Error::ConfigExceedsDimensions(format!(
            "p = {} needs n >= p + 2, got n = {}",
            config.p, config.n
        )));
    }
    let sampler = DesignSampler::new(config)?;
    let per_rep: Vec<Result<Vec<f64>>> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| {
            let data = sampler.sample(&mut rep_rng(config.base_seed, rep as u64));
            let sigma2 = full_model_variance(&data)?;
            l_values
                .iter()
                .map(|&l| {
                    let order = ordering_permutation(config.p, config.s, l);
                    in_sample_loss(&nested_mma(&data, &order, sigma2)?, &data)
                })
                .collect()
        })
        .collect();
    let mut result = ExperimentResult::default();
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for (rep, outcome) in per_rep.into_iter().enumerate() {
        match outcome {
            Ok(losses) => {
                for (&l, &loss) in l_values.iter().zip(&losses) {
                    result.push(ORDERING_METHOD, ORDERING_FACTOR, l as f64, rep, loss);
                }
                kept.push(losses);
            }
            Err(e) => {
                log::warn!("ordering rep {rep} failed: {e}");
                result.failures.push(FailedRep {
                    level: f64::NAN,
                    rep,
                    reason: e.to_string(),
                });
            }
        }
    }
    if let Some(base) = l_values.iter().position(|&l| l == 0) {
        let baseline: Vec<f64> = kept.iter().map(|r| r[base]).collect();
        for (i, &l) in l_values.iter().enumerate() {
            let losses: Vec<f64> = kept.iter().map(|r| r[i]).collect();
            let (ratio, stderr) = if i == base {
                (1.0, 0.0)
            } else {
                ratio_of_means(&losses, &baseline)
            };
            result.derived.push(SummaryRow {
                method: ORDERING_RELATIVE.into(),
                factor: ORDERING_FACTOR.into(),
                level: l as f64,
                mean: ratio,
                stderr,
                n_reps: kept.len(),
            });
        }
    }
    result.sort();
    Ok(result)
}

/// `mean(a) / mean(b)` for paired samples with a delta-method standard error.
pub fn ratio_of_means(a: &[f64], b: &[f64]) -> (f64, f64) {
    let n = a.len().min(b.len());
    let (ma, _) = mean_and_stderr(&a[..n]);
    let (mb, _) = mean_and_stderr(&b[..n]);
    let ratio = ma / mb;
    if n < 2 {
        return (ratio, f64::NAN);
    }
    let resid: Vec<f64> = (0..n).map(|i| a[i] - ratio * b[i]).collect();
    let (_, se) = mean_and_stderr(&resid);
    (ratio, se / mb.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factor {
    N,
    R2,
    P,
    Rho,
    S,
    Delta,
}

impl Factor {
    pub const ALL: [Factor; 6] = [Factor::N, Factor::R2, Factor::P, Factor::Rho, Factor::S, Factor::Delta];

    pub fn label(self) -> &'static str {
        match self {
            Factor::N => "n",
            Factor::R2 => "r2",
            Factor::P => "p",
            Factor::Rho => "rho",
            Factor::S => "s",
            Factor::Delta => "delta",
        }
    }

    pub fn from_label(label: &str) -> Result<Factor> {
        Factor::ALL
            .into_iter()
            .find(|f| f.label() == label)
            .ok_or_else(|| Error::UnknownFactor(label.to_string()))
    }

    /// The grid swept for this factor.
    pub fn default_levels(self) -> Vec<f64> {
        let tenths = |range: std::ops::RangeInclusive<u32>| range.map(|i| i as f64 / 10.0).collect();
        match self {
            Factor::N | Factor::P => (2..=10).map(|i| (i * 100) as f64).collect(),
            Factor::R2 => tenths(1..=9),
            Factor::Rho => tenths(0..=9),
            Factor::S => (1..=10).map(|i| (i * 50) as f64).collect(),
            Factor::Delta => tenths(0..=10),
        }
    }

    /// `config` with this factor set to `level`.
    pub fn apply(self, config: &SimConfig, level: f64) -> Result<SimConfig> {
        let count = || {
            if level >= 0.0 && level.fract() == 0.0 {
                Ok(level as usize)
            } else {
                Err(Error::InvalidConfig(format!("{} = {level}", self.label())))
            }
        };
        let mut out = *config;
        match self {
            Factor::N => out.n = count()?,
            Factor::P => out.p = count()?,
            Factor::S => out.s = count()?,
            Factor::R2 => out.r2_target = level,
            Factor::Rho => out.rho = level,
            Factor::Delta => out.delta = level,
        }
        out.validate()?;
        Ok(out)
    }
}

/// Per-rep output of the comparison beyond the recorded losses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonDiagnostics {
    /// `L(averaged) - sum_k w_k L(path point k)` for every averaged fit.
    pub convexity_gaps: Vec<f64>,
    /// Oracle loss minus the smallest path loss, for every oracle fit.
    pub oracle_excess: Vec<f64>,
}

pub fn method_comparison_experiment(
    config: &SimConfig,
    factor: Factor,
    levels: &[f64],
) -> Result<ExperimentResult> {
    Ok(method_comparison_detailed(config, factor, levels)?.0)
}

/// Runs every level and rep; failed reps are logged and left out.
pub fn method_comparison_detailed(
    config: &SimConfig,
    factor: Factor,
    levels: &[f64],
) -> Result<(ExperimentResult, ComparisonDiagnostics)> {
    let mut result = ExperimentResult::default();
    let mut diagnostics = ComparisonDiagnostics::default();
    for &level in levels {
        let cfg = factor.apply(config, level)?;
        let sampler = DesignSampler::new(&cfg)?;
        let per_rep: Vec<Result<(Vec<f64>, Vec<f64>, Vec<f64>)>> = (0..cfg.n_reps)
            .into_par_iter()
            .map(|rep| {
                let mut rng = rep_rng(cfg.base_seed, rep as u64);
                let data = sampler.sample(&mut rng);
                let options = PipelineOptions {
                    n_folds: cfg.n_folds,
                    slope_scale: cfg.slope_scale,
                };
                let fits = fit_all(&data, &options, &mut rng)?;
                let losses = Method::SIMULATION
                    .iter()
                    .map(|&m| fits.loss(m, &data))
                    .collect::<Result<Vec<f64>>>()?;
                let mut gaps = Vec::new();
                let mut excess = Vec::new();
                for family in [&fits.lasso, &fits.slope] {
                    if let Some(o) = &family.oracle {
                        gaps.push(o.convexity_gap);
                        let min = o.path_losses.iter().copied().fold(f64::INFINITY, f64::min);
                        excess.push(o.path_losses[o.index] - min);
                    }
                }
                Ok((losses, gaps, excess))
            })
            .collect();
        for (rep, outcome) in per_rep.into_iter().enumerate() {
            match outcome {
                Ok((losses, gaps, excess)) => {
                    for (m, loss) in Method::SIMULATION.iter().zip(losses) {
                        result.push(m.label(), factor.label(), level, rep, loss);
                    }
                    diagnostics.convexity_gaps.extend(gaps);
                    diagnostics.oracle_excess.extend(excess);
                }
                Err(e) => {
                    log::warn!("{} = {level}, rep {rep} failed: {e}", factor.label());
                    result.failures.push(FailedRep {
                        level,
                        rep,
                        reason: e.to_string(),
                    });
                }
            }
        }
    }
    result.sort();
    Ok((result, diagnostics))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_values() {
        let flat = decay_coefficients(6, 4, 0.0, 2.5);
        assert_eq!(flat.as_slice(), &[2.5, 2.5, 2.5, 2.5, 0.0, 0.0]);
        let harmonic = decay_coefficients(5, 3, 1.0, 1.0);
        assert_eq!(harmonic[0], 1.0);
        assert_eq!(harmonic[1], 0.5);
        assert!((harmonic[2] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!((harmonic[3], harmonic[4]), (0.0, 0.0));
        let sqrt_decay = decay_coefficients(150, 20, 0.5, 1.7);
        for j in 0..20 {
            assert!((sqrt_decay[j] - 1.7 / ((j + 1) as f64).sqrt()).abs() < 1e-15);
        }
        assert!(sqrt_decay.rows(20, 130).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn calibration_examples() {
        let id = DMatrix::identity(3, 3);
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!((calibrate_c(&id, &e1, 0.8, 1.0).unwrap() - 2.0).abs() < 1e-12);
        let cov = CovSpec {
            kind: CovKind::CompoundSymmetry,
            rho: 0.3,
            p: 5,
            s: 5,
        }
        .matrix()
        .unwrap();
        let b = decay_coefficients(5, 3, 0.5, 1.0);
        let c = calibrate_c(&cov, &b, 0.5, 1.0).unwrap();
        assert!((c * c * b.dot(&(&cov * &b)) - 1.0).abs() < 1e-12);
        assert_eq!(
            calibrate_c(&id, &DVector::zeros(3), 0.5, 1.0).unwrap_err(),
            Error::DegenerateSignal
        );
    }

    #[test]
    fn covariance_shapes_and_validation() {
        let ar = CovSpec {
            kind: CovKind::AutoRegressive,
            rho: 0.5,
            p: 4,
            s: 2,
        }
        .matrix()
        .unwrap();
        assert_eq!(ar[(0, 3)], 0.125);
        assert_eq!(ar[(2, 1)], 0.5);
        let block = CovSpec {
            kind: CovKind::BlockCsIdentity,
            rho: 0.4,
            p: 5,
            s: 2,
        }
        .matrix()
        .unwrap();
        assert_eq!(block[(0, 1)], 0.4);
        assert_eq!(block[(0, 2)], 0.0);
        assert_eq!(block[(3, 4)], 0.0);
        for kind in [CovKind::CompoundSymmetry, CovKind::AutoRegressive, CovKind::BlockCsIdentity] {
            for i in 0..10 {
                let spec = CovSpec {
                    kind,
                    rho: i as f64 / 10.0,
                    p: 30,
                    s: 10,
                };
                assert!(Cholesky::new(spec.matrix().unwrap()).is_some());
            }
        }
        let bad = CovSpec {
            kind: CovKind::CompoundSymmetry,
            rho: 1.0,
            p: 3,
            s: 1,
        };
        assert!(bad.matrix().is_err());
    }

    #[test]
    fn identity_design_is_uncorrelated_and_reproducible() {
        let config = SimConfig {
            n: 1000,
            p: 4,
            s: 2,
            rho: 0.0,
            cov_kind: CovKind::CompoundSymmetry,
            ..SimConfig::ordering_defaults()
        };
        let a = generate_dataset(&config, 3).unwrap();
        let b = generate_dataset(&config, 3).unwrap();
        assert_eq!(a, b);
        let corr = sample_correlation(&a.x);
        for i in 0..4 {
            for j in 0..i {
                assert!(corr[(i, j)].abs() < 0.1);
            }
        }
    }

    fn sample_correlation(x: &DMatrix<f64>) -> DMatrix<f64> {
        let n = x.nrows() as f64;
        let mut c = x.clone();
        for mut col in c.column_iter_mut() {
            let m = col.sum() / n;
            col.add_scalar_mut(-m);
            let norm = col.norm();
            col /= norm;
        }
        c.transpose() * c
    }

    #[test]
    fn block_design_separates_signals_from_noise() {
        let config = SimConfig {
            n: 4000,
            p: 8,
            s: 3,
            rho: 0.6,
            ..SimConfig::ordering_defaults()
        };
        let corr = sample_correlation(&generate_dataset(&config, 0).unwrap().x);
        assert!((corr[(0, 1)] - 0.6).abs() < 0.05);
        assert!((corr[(1, 2)] - 0.6).abs() < 0.05);
        assert!(corr[(0, 5)].abs() < 0.05);
        assert!(corr[(4, 6)].abs() < 0.05);
    }

    #[test]
    fn ordering_permutation_example() {
        let order = ordering_permutation(8, 3, 2);
        assert_eq!(order, vec![3, 4, 0, 1, 2, 5, 6, 7]);
        assert_eq!(ordering_permutation(5, 2, 0), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn nested_average_matches_explicit_candidates() {
        use crate::averaging::{fit_path_ma, CandidateSet, optimize_weights};
        let config = SimConfig {
            n: 40,
            p: 6,
            s: 3,
            ..SimConfig::ordering_defaults()
        };
        let data = generate_dataset(&config, 1).unwrap();
        let order = ordering_permutation(6, 3, 2);
        let sigma2 = full_model_variance(&data).unwrap();
        let fast = nested_mma(&data, &order, sigma2).unwrap();
        // Explicit prefix fits in original coordinates.
        let mut coefs = vec![DVector::zeros(6)];
        for k in 1..=6 {
            let cols = &order[..k];
            let xs = data.x.select_columns(cols);
            let sol = (xs.transpose() * &xs)
                .cholesky()
                .unwrap()
                .solve(&(xs.transpose() * &data.y));
            let mut b = DVector::zeros(6);
            for (i, &c) in cols.iter().enumerate() {
                b[c] = sol[i];
            }
            coefs.push(b);
        }
        let (slow, _) = fit_path_ma(&coefs, &data, sigma2).unwrap();
        let cand = CandidateSet::from_coefficients(&coefs, &data, sigma2).unwrap();
        let w = optimize_weights(&cand, &data.y).unwrap();
        assert!((&fast - &slow).amax() < 1e-6, "{fast} vs {slow}, w = {}", w.w);
        let rss = (&data.y - &data.x * &coefs[6]).norm_squared();
        assert!((sigma2 - rss / 34.0).abs() < 1e-10);
    }

    #[test]
    fn ordering_relative_risk_is_one_at_zero() {
        let config = SimConfig {
            n: 80,
            p: 30,
            s: 5,
            n_reps: 6,
            ..SimConfig::ordering_defaults()
        };
        let res = ordering_experiment(&config, &[0, 5, 10]).unwrap();
        let rel = res.summary_for(ORDERING_RELATIVE, 0.0).unwrap();
        assert_eq!(rel.mean, 1.0);
        assert_eq!(res.records.len(), 18);
        assert!(ordering_experiment(&config, &[26]).is_err());
        // Rerun is identical.
        assert_eq!(ordering_experiment(&config, &[0, 5, 10]).unwrap(), res);
    }

    #[test]
    fn permutation_equivariance_of_nested_fits() {
        let config = SimConfig {
            n: 60,
            p: 12,
            s: 4,
            ..SimConfig::ordering_defaults()
        };
        let data = generate_dataset(&config, 2).unwrap();
        let sigma2 = full_model_variance(&data).unwrap();
        let order = ordering_permutation(12, 4, 3);
        let via_order = nested_mma(&data, &order, sigma2).unwrap();
        let permuted = Dataset::with_truth(
            data.x.select_columns(&order),
            data.y.clone(),
            DVector::from_fn(12, |j, _| data.beta_true.as_ref().unwrap()[order[j]]),
        )
        .unwrap();
        let identity: Vec<usize> = (0..12).collect();
        let on_permuted = nested_mma(&permuted, &identity, sigma2).unwrap();
        let l1 = in_sample_loss(&via_order, &data).unwrap();
        let l2 = in_sample_loss(&on_permuted, &permuted).unwrap();
        assert!((l1 - l2).abs() < 1e-9 * (1.0 + l1));
    }

    #[test]
    fn ratio_of_means_stderr() {
        let a = [2.0, 4.0, 6.0];
        let b = [1.0, 2.0, 3.0];
        let (r, se) = ratio_of_means(&a, &b);
        assert_eq!(r, 2.0);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn factor_levels_and_application() {
        assert_eq!(Factor::N.default_levels(), vec![200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0]);
        assert_eq!(Factor::Rho.default_levels().len(), 10);
        assert_eq!(Factor::Delta.default_levels().len(), 11);
        assert_eq!(Factor::Delta.default_levels()[3], 0.3);
        assert_eq!(Factor::S.default_levels().last(), Some(&500.0));
        assert_eq!(Factor::R2.default_levels()[0], 0.1);
        assert_eq!(Factor::from_label("tau").unwrap_err(), Error::UnknownFactor("tau".into()));
        let base = SimConfig::comparison_defaults(CovKind::AutoRegressive);
        assert_eq!(Factor::P.apply(&base, 300.0).unwrap().p, 300);
        assert!(Factor::S.apply(&base, 700.0).is_err());
        assert!(Factor::N.apply(&base, 2.5).is_err());
    }

    #[test]
    fn small_comparison_runs() {
        let config = SimConfig {
            n: 60,
            p: 40,
            s: 5,
            n_reps: 2,
            ..SimConfig::comparison_defaults(CovKind::CompoundSymmetry)
        };
        let (res, diag) = method_comparison_detailed(&config, Factor::Rho, &[0.0, 0.5]).unwrap();
        assert_eq!(res.records.len(), 2 * 2 * 6);
        assert!(res.failures.is_empty());
        assert!(diag.convexity_gaps.iter().all(|&g| g <= 1e-8));
        assert!(diag.oracle_excess.iter().all(|&e| e == 0.0));
        assert_eq!(res.summary().len(), 12);
    }
}

//! SLOPE: least squares with a sorted-L1 penalty.
//!
//! Penalty sequences follow the Benjamini-Hochberg construction
//! `tau_j = z(1 - j q / (2p))`; fits use accelerated proximal gradient with
//! the exact sorted-L1 prox and restart on objective increase.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gram::GramSystem;
use crate::lasso::support_size;

pub const PATH_LENGTH: usize = 9;
pub const DEFAULT_MAX_ITER: usize = 20_000;
/// Stop when one accepted step lowers the objective by less than this
/// fraction of `1 + objective`.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Standard normal quantile, Wichura's AS241 (PPND16) rational approximation.
pub fn normal_quantile(u: f64) -> Result<f64> {
    if !(u > 0.0 && u < 1.0) {
        return Err(Error::OutOfDomain(u));
    }
    let q = u - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_813e4) * r
            + 6.726_577_092_700_87e4)
            * r
            + 4.592_195_393_154_987e4)
            * r
            + 1.373_169_376_550_946e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_5)
            * q;
        let den = ((((((5.226_495_278_852_545e3 * r + 2.872_908_573_572_194_3e4) * r
            + 3.930_789_580_009_271e4)
            * r
            + 2.121_379_430_158_659_7e4)
            * r
            + 5.394_196_021_424_751e3)
            * r
            + 6.871_870_074_920_579e2)
            * r
            + 4.231_333_070_160_091e1)
            * r
            + 1.0;
        return Ok(num / den);
    }
    let tail = if q < 0.0 { u } else { 1.0 - u };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414e-4 * r + 2.272_384_498_926_918_4e-2) * r
            + 2.417_807_251_774_506e-1)
            * r
            + 1.270_458_252_452_368_4)
            * r
            + 3.647_848_324_763_204_5)
            * r
            + 5.769_497_221_460_691)
            * r
            + 4.630_337_846_156_545)
            * r
            + 1.423_437_110_749_683_5;
        let den = ((((((1.050_750_071_644_416_9e-9 * r + 5.475_938_084_995_345e-4) * r
            + 1.519_866_656_361_645_7e-2)
            * r
            + 1.481_039_764_274_800_8e-1)
            * r
            + 6.897_673_349_851e-1)
            * r
            + 1.676_384_830_183_803_8)
            * r
            + 2.053_191_626_637_759)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_1e-7 * r + 2.711_555_568_743_487_6e-5) * r
            + 1.242_660_947_388_078_4e-3)
            * r
            + 2.653_218_952_657_612_4e-2)
            * r
            + 2.965_605_718_285_048_7e-1)
            * r
            + 1.784_826_539_917_291_3)
            * r
            + 5.463_784_911_164_114)
            * r
            + 6.657_904_643_501_103;
        let den = ((((((2.044_263_103_389_939_7e-15 * r + 1.421_511_758_316_446e-7) * r
            + 1.846_318_317_510_054_8e-5)
            * r
            + 7.868_691_311_456_133e-4)
            * r
            + 1.487_536_129_085_061_5e-2)
            * r
            + 1.369_298_809_227_358e-1)
            * r
            + 5.998_322_065_558_88e-1)
            * r
            + 1.0;
        num / den
    };
    Ok(if q < 0.0 { -val } else { val })
}

/// Nonincreasing SLOPE penalty sequence for level `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeWeights {
    pub q: f64,
    pub tau: DVector<f64>,
}

pub fn bh_weights(q: f64, p: usize) -> Result<SlopeWeights> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::OutOfDomain(q));
    }
    let pf = p as f64;
    let tau = (1..=p)
        .map(|j| normal_quantile(1.0 - j as f64 * q / (2.0 * pf)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SlopeWeights {
        q,
        tau: DVector::from_vec(tau),
    })
}

/// Levels `q_k = 10^(k-11)` for `k = 1..9`.
pub fn q_grid() -> Vec<f64> {
    (1..=PATH_LENGTH as i32).map(|k| 10f64.powi(k - 11)).collect()
}

/// Sorted-L1 norm `sum_j tau_j |b|_(j)` with `|b|` sorted decreasingly.
pub fn sorted_l1_norm(beta: &DVector<f64>, tau: &DVector<f64>) -> f64 {
    let mut mags: Vec<f64> = beta.iter().map(|b| b.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    mags.iter().zip(tau.iter()).map(|(m, t)| m * t).sum()
}

fn check_weights(tau: &DVector<f64>) -> Result<()> {
    let sorted = tau.iter().all(|&t| t >= 0.0) && tau.as_slice().windows(2).all(|w| w[0] >= w[1]);
    if sorted {
        Ok(())
    } else {
        Err(Error::WeightsNotSorted)
    }
}

/// Proximal operator of the sorted-L1 norm.
///
/// Sorts `|v|` decreasingly, subtracts `tau`, projects onto the
/// nonincreasing cone by pooling adjacent violators on a stack, clamps at
/// zero, then restores the original order and signs.
pub fn sorted_l1_prox(v: &DVector<f64>, tau: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != tau.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values for {} weights",
            v.len(),
            tau.len()
        )));
    }
    check_weights(tau)?;
    Ok(prox_unchecked(v.as_slice(), tau.as_slice()))
}

fn prox_unchecked(v: &[f64], tau: &[f64]) -> DVector<f64> {
    let p = v.len();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()));

    // Blocks of (start, length, sum).
    let mut blocks: Vec<(usize, usize, f64)> = Vec::with_capacity(p);
    for (i, &j) in order.iter().enumerate() {
        blocks.push((i, 1, v[j].abs() - tau[i]));
        while blocks.len() > 1 {
            let (_, len_b, sum_b) = blocks[blocks.len() - 1];
            let (start_a, len_a, sum_a) = blocks[blocks.len() - 2];
            if sum_a / len_a as f64 > sum_b / len_b as f64 {
                break;
            }
            blocks.pop();
            let last = blocks.len() - 1;
            blocks[last] = (start_a, len_a + len_b, sum_a + sum_b);
        }
    }

    let mut out = DVector::zeros(p);
    for &(start, len, sum) in &blocks {
        let level = (sum / len as f64).max(0.0);
        if level > 0.0 {
            for &j in &order[start..start + len] {
                out[j] = level.copysign(v[j]);
            }
        }
    }
    out
}

/// Largest eigenvalue of the Gram matrix by power iteration.
pub fn lipschitz_constant(system: &GramSystem) -> f64 {
    let p = system.p();
    let mut v = DVector::from_element(p, 1.0 / (p as f64).sqrt());
    let mut estimate = 0.0;
    for _ in 0..10_000 {
        let w = &system.gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - estimate).abs() <= 1e-8 * next.abs() {
            return next.max(norm);
        }
        estimate = next;
    }
    estimate
}

#[derive(Debug, Clone)]
pub struct SlopeFit {
    pub coefficients: DVector<f64>,
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct SlopeOptions {
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for SlopeOptions {
    fn default() -> Self {
        SlopeOptions {
            tolerance: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

pub fn objective(system: &GramSystem, beta: &DVector<f64>, penalty: &DVector<f64>) -> f64 {
    0.5 * system.rss(beta) + sorted_l1_norm(beta, penalty)
}

/// Accelerated proximal gradient for `(1/2)||y - Xb||^2 + sum_j pen_j |b|_(j)`
/// with an explicit penalty vector.
///
/// Accepted iterates never increase the objective: a step that would is
/// discarded and the momentum reset. `lipschitz` may be supplied to reuse
/// the power-iteration estimate across a path.
pub fn slope_fit_penalty(
    system: &GramSystem,
    penalty: &DVector<f64>,
    warm_start: Option<&DVector<f64>>,
    lipschitz: Option<f64>,
    options: SlopeOptions,
    mut trace: Option<&mut Vec<f64>>,
) -> Result<SlopeFit> {
    let p = system.p();
    if penalty.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "{} penalty weights for {p} columns",
            penalty.len()
        )));
    }
    check_weights(penalty)?;
    let mut beta = match warm_start {
        Some(b) if b.len() == p => b.clone(),
        Some(b) => {
            return Err(Error::DimensionMismatch(format!(
                "warm start has {} entries for {p} columns",
                b.len()
            )))
        }
        None => DVector::zeros(p),
    };
    let mut lip = lipschitz.unwrap_or_else(|| lipschitz_constant(system));
    if !(lip > 0.0) {
        return Ok(SlopeFit {
            objective: objective(system, &beta, penalty),
            coefficients: beta,
            converged: true,
            iterations: 0,
        });
    }

    let obj = |b: &DVector<f64>, gb: &DVector<f64>| {
        0.5 * system.rss_with(b, gb) + sorted_l1_norm(b, penalty)
    };
    let mut g_beta = system.gram_times(&beta);
    let mut f = obj(&beta, &g_beta);
    if let Some(t) = trace.as_deref_mut() {
        t.push(f);
    }
    let mut v = beta.clone();
    let mut g_v = g_beta.clone();
    let mut t = 1.0_f64;
    let mut momentum = false;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iter {
        iterations += 1;
        let step = 1.0 / lip;
        let point = &v - (&g_v - &system.xty) * step;
        let scaled: Vec<f64> = penalty.iter().map(|w| w * step).collect();
        let cand = prox_unchecked(point.as_slice(), &scaled);
        let g_cand = system.gram_times(&cand);
        let f_cand = obj(&cand, &g_cand);

        if f_cand > f {
            if momentum {
                // Restart from the last accepted iterate.
                v.copy_from(&beta);
                g_v.copy_from(&g_beta);
                t = 1.0;
                momentum = false;
            } else {
                // A plain proximal step cannot increase the objective with a
                // valid step size; the Lipschitz estimate was too low.
                lip *= 2.0;
            }
            continue;
        }

        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let mix = (t - 1.0) / t_next;
        v = &cand + (&cand - &beta) * mix;
        g_v = &g_cand + (&g_cand - &g_beta) * mix;
        momentum = mix != 0.0;
        t = t_next;

        let decrease = f - f_cand;
        beta = cand;
        g_beta = g_cand;
        f = f_cand;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(f);
        }
        if decrease < options.tolerance * (1.0 + f.abs()) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("SLOPE proximal gradient hit {iterations} iterations");
    }
    Ok(SlopeFit {
        coefficients: beta,
        objective: f,
        converged,
        iterations,
    })
}

/// SLOPE fit with penalty `sigma_scale * tau`.
pub fn slope_fit(
    system: &GramSystem,
    weights: &SlopeWeights,
    sigma_scale: f64,
    warm_start: Option<&DVector<f64>>,
) -> Result<SlopeFit> {
    if !(sigma_scale > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_scale = {sigma_scale}")));
    }
    let penalty = &weights.tau * sigma_scale;
    slope_fit_penalty(system, &penalty, warm_start, None, SlopeOptions::default(), None)
}

#[derive(Debug, Clone)]
pub struct SlopePath {
    pub q_values: Vec<f64>,
    /// Standardized-scale solutions, one per level.
    pub coefficients: Vec<DVector<f64>>,
    pub support_sizes: Vec<usize>,
    pub converged: Vec<bool>,
}

/// Fits the nine-level path, warm-starting each level from the previous one.
pub fn slope_path(system: &GramSystem, sigma_scale: f64) -> Result<SlopePath> {
    if !(sigma_scale > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma_scale = {sigma_scale}")));
    }
    let p = system.p();
    let lip = lipschitz_constant(system);
    let q_values = q_grid();
    let mut coefficients: Vec<DVector<f64>> = Vec::with_capacity(q_values.len());
    let mut converged = Vec::with_capacity(q_values.len());
    for &q in &q_values {
        let penalty = bh_weights(q, p)?.tau * sigma_scale;
        let fit = slope_fit_penalty(
            system,
            &penalty,
            coefficients.last(),
            Some(lip),
            SlopeOptions::default(),
            None,
        )?;
        converged.push(fit.converged);
        coefficients.push(fit.coefficients);
    }
    let support_sizes = coefficients.iter().map(support_size).collect();
    Ok(SlopePath {
        q_values,
        coefficients,
        support_sizes,
        converged,
    })
}

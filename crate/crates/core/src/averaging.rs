//! Mallows model averaging over a set of candidate fits.
//!
//! Weights live on the unit simplex and minimize
//! `C(w) = ||y - sum_k w_k mu_k||^2 + 2 sigma2 sum_k w_k s_k`,
//! a convex quadratic in `w`. The optimizer moves mass between pairs of
//! candidates with exact line searches, so every iterate stays feasible.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gram::GramSystem;
use crate::lasso::support_size;
use crate::linmodel::Dataset;

pub const MAX_SWEEPS: usize = 10_000;
pub const SWEEP_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CandidateSet {
    /// Fitted values `mu_k`, each of length `n`.
    pub fitted: Vec<DVector<f64>>,
    pub coefficients: Vec<DVector<f64>>,
    /// Number of nonzero coefficients of each candidate.
    pub sizes: Vec<usize>,
    pub sigma2_hat: f64,
}

impl CandidateSet {
    /// Candidates `X b_k` built from coefficient vectors in the coordinates of `data`.
    pub fn from_coefficients(
        coefficients: &[DVector<f64>],
        data: &Dataset,
        sigma2_hat: f64,
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::EmptyPath);
        }
        let mut fitted = Vec::with_capacity(coefficients.len());
        for b in coefficients {
            if b.len() != data.p() {
                return Err(Error::DimensionMismatch(format!(
                    "candidate has {} coefficients for {} columns",
                    b.len(),
                    data.p()
                )));
            }
            let mut mu = DVector::zeros(data.n());
            for (j, &bj) in b.iter().enumerate() {
                if bj != 0.0 {
                    mu.axpy(bj, &data.x.column(j), 1.0);
                }
            }
            fitted.push(mu);
        }
        Ok(CandidateSet {
            fitted,
            sizes: coefficients.iter().map(support_size).collect(),
            coefficients: coefficients.to_vec(),
            sigma2_hat,
        })
    }

    pub fn len(&self) -> usize {
        self.fitted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fitted.is_empty()
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.fitted.is_empty() {
            return Err(Error::EmptyPath);
        }
        if self.sizes.len() != self.fitted.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} sizes for {} candidates",
                self.sizes.len(),
                self.fitted.len()
            )));
        }
        if let Some(mu) = self.fitted.iter().find(|mu| mu.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "fitted vector of length {} for response of length {n}",
                mu.len()
            )));
        }
        Ok(())
    }
}

/// A point on the simplex with its criterion value.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub w: DVector<f64>,
    pub criterion: f64,
}

/// Evaluates the averaging criterion directly from the residuals.
pub fn mma_criterion(candidates: &CandidateSet, w: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    candidates.check(y.len())?;
    if w.len() != candidates.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} candidates",
            w.len(),
            candidates.len()
        )));
    }
    let mut mu = DVector::zeros(y.len());
    let mut size = 0.0;
    for (k, &wk) in w.iter().enumerate() {
        if wk != 0.0 {
            mu.axpy(wk, &candidates.fitted[k], 1.0);
            size += wk * candidates.sizes[k] as f64;
        }
    }
    Ok((y - mu).norm_squared() + 2.0 * candidates.sigma2_hat * size)
}

/// `w' A w - 2 b' w + c` restricted to the simplex.
#[derive(Debug, Clone)]
pub struct SimplexQuadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

impl SimplexQuadratic {
    pub fn from_candidates(candidates: &CandidateSet, y: &DVector<f64>) -> Result<Self> {
        candidates.check(y.len())?;
        let k = candidates.len();
        let f = DMatrix::from_columns(&candidates.fitted);
        let a = f.transpose() * &f;
        let fy = f.transpose() * y;
        let b = DVector::from_fn(k, |i, _| fy[i] - candidates.sigma2_hat * candidates.sizes[i] as f64);
        Ok(SimplexQuadratic {
            a,
            b,
            c: y.norm_squared(),
        })
    }

    /// The same quadratic built from sufficient statistics: with `G = X'X`,
    /// `A_kl = b_k' G b_l` and `b_k = b_k' X'y - sigma2_hat s_k`.
    pub fn from_gram(
        system: &GramSystem,
        coefficients: &[DVector<f64>],
        sigma2_hat: f64,
    ) -> Result<Self> {
        if coefficients.is_empty() {
            return Err(Error::EmptyPath);
        }
        if let Some(b) = coefficients.iter().find(|b| b.len() != system.p()) {
            return Err(Error::DimensionMismatch(format!(
                "candidate has {} coefficients for {} columns",
                b.len(),
                system.p()
            )));
        }
        let k = coefficients.len();
        let gb: Vec<DVector<f64>> = coefficients.iter().map(|b| system.gram_times(b)).collect();
        let a = DMatrix::from_fn(k, k, |i, j| {
            if i <= j {
                coefficients[i].dot(&gb[j])
            } else {
                coefficients[j].dot(&gb[i])
            }
        });
        let b = DVector::from_fn(k, |i, _| {
            coefficients[i].dot(&system.xty) - sigma2_hat * support_size(&coefficients[i]) as f64
        });
        Ok(SimplexQuadratic {
            a,
            b,
            c: system.yty,
        })
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        w.dot(&(&self.a * w)) - 2.0 * self.b.dot(w) + self.c
    }

    /// Pairwise coordinate descent from the uniform point.
    pub fn minimize(&self) -> DVector<f64> {
        let k = self.b.len();
        let mut w = DVector::from_element(k, 1.0 / k as f64);
        if k == 1 {
            return w;
        }
        // h = A w - b, half the gradient.
        let mut h = &self.a * &w - &self.b;
        let value = |w: &DVector<f64>, h: &DVector<f64>| w.dot(h) - self.b.dot(w) + self.c;
        let mut current = value(&w, &h);
        for _ in 0..MAX_SWEEPS {
            for i in 0..k {
                for j in (i + 1)..k {
                    if w[i] == 0.0 && w[j] == 0.0 {
                        continue;
                    }
                    let slope = h[i] - h[j];
                    if slope == 0.0 {
                        continue;
                    }
                    let curv = self.a[(i, i)] + self.a[(j, j)] - 2.0 * self.a[(i, j)];
                    let delta = if curv > 0.0 {
                        (-slope / curv).clamp(-w[i], w[j])
                    } else if slope > 0.0 {
                        -w[i]
                    } else {
                        w[j]
                    };
                    if delta == 0.0 {
                        continue;
                    }
                    // Moving all of one side's mass sets it to exactly zero.
                    if delta == -w[i] {
                        w[j] += w[i];
                        w[i] = 0.0;
                    } else if delta == w[j] {
                        w[i] += w[j];
                        w[j] = 0.0;
                    } else {
                        w[i] += delta;
                        w[j] -= delta;
                    }
                    for r in 0..k {
                        h[r] += delta * (self.a[(r, i)] - self.a[(r, j)]);
                    }
                }
            }
            // Resynchronize to keep rounding from accumulating.
            h = &self.a * &w - &self.b;
            let next = value(&w, &h);
            let decrease = current - next;
            current = next;
            if decrease <= SWEEP_TOLERANCE * current.abs().max(f64::MIN_POSITIVE) {
                break;
            }
        }
        // Renormalize away drift in the sum.
        let total = w.sum();
        w / total
    }
}

/// Minimizes the averaging criterion over the simplex.
pub fn optimize_weights(candidates: &CandidateSet, y: &DVector<f64>) -> Result<WeightVector> {
    let quad = SimplexQuadratic::from_candidates(candidates, y)?;
    let w = quad.minimize();
    let criterion = mma_criterion(candidates, &w, y)?;
    Ok(WeightVector { w, criterion })
}

/// Averages path solutions directly (no refit per candidate).
///
/// `path_coefficients` and `data` must share coordinates; the returned
/// coefficient vector is `sum_k w_k b_k` in those coordinates.
pub fn fit_path_ma(
    path_coefficients: &[DVector<f64>],
    data: &Dataset,
    sigma2_hat: f64,
) -> Result<(DVector<f64>, WeightVector)> {
    if path_coefficients.is_empty() {
        return Err(Error::EmptyPath);
    }
    if !(sigma2_hat > 0.0) {
        return Err(Error::InvalidConfig(format!("sigma2_hat = {sigma2_hat}")));
    }
    let candidates = CandidateSet::from_coefficients(path_coefficients, data, sigma2_hat)?;
    let weights = optimize_weights(&candidates, &data.y)?;
    Ok((combine(path_coefficients, &weights.w), weights))
}

/// `sum_k w_k b_k`.
pub fn combine(coefficients: &[DVector<f64>], w: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(coefficients[0].len());
    for (b, &wk) in coefficients.iter().zip(w.iter()) {
        if wk != 0.0 {
            out.axpy(wk, b, 1.0);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_candidates(n: usize, k: usize, seed: u64) -> (CandidateSet, DVector<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let fitted = (0..k)
            .map(|_| DVector::from_fn(n, |i, _| 0.7 * y[i] + rng.random_range(-0.6..0.6)))
            .collect();
        let sizes = (0..k).map(|_| rng.random_range(0..6)).collect();
        let cand = CandidateSet {
            fitted,
            coefficients: vec![DVector::zeros(1); k],
            sizes,
            sigma2_hat: rng.random_range(0.01..0.2),
        };
        (cand, y)
    }

    #[test]
    fn criterion_examples() {
        let y = DVector::from_vec(vec![1.0, 2.0]);
        let perfect = CandidateSet {
            fitted: vec![y.clone()],
            coefficients: vec![DVector::zeros(1)],
            sizes: vec![0],
            sigma2_hat: 1.0,
        };
        let one = DVector::from_element(1, 1.0);
        assert_eq!(mma_criterion(&perfect, &one, &y).unwrap(), 0.0);
        let off = CandidateSet {
            fitted: vec![DVector::from_vec(vec![1.0, 0.0])],
            coefficients: vec![DVector::zeros(1)],
            sizes: vec![3],
            sigma2_hat: 1.0,
        };
        assert_eq!(mma_criterion(&off, &one, &y).unwrap(), 10.0);
        assert!(mma_criterion(&off, &one, &DVector::zeros(3)).is_err());
    }

    #[test]
    fn criterion_matches_direct_arithmetic() {
        let (cand, y) = random_candidates(6, 2, 1);
        let w = DVector::from_vec(vec![0.3, 0.7]);
        let mut rss = 0.0;
        for i in 0..6 {
            let r = y[i] - 0.3 * cand.fitted[0][i] - 0.7 * cand.fitted[1][i];
            rss += r * r;
        }
        let direct = rss + 2.0 * cand.sigma2_hat * (0.3 * cand.sizes[0] as f64 + 0.7 * cand.sizes[1] as f64);
        assert!((mma_criterion(&cand, &w, &y).unwrap() - direct).abs() < 1e-12);
        let quad = SimplexQuadratic::from_candidates(&cand, &y).unwrap();
        assert!((quad.value(&w) - direct).abs() < 1e-12);
    }

    #[test]
    fn singleton_and_linear_cases() {
        let (cand, y) = random_candidates(5, 1, 2);
        let w = optimize_weights(&cand, &y).unwrap();
        assert_eq!(w.w.as_slice(), &[1.0]);

        let mu = DVector::from_vec(vec![0.5, 1.0, -0.2]);
        let twins = CandidateSet {
            fitted: vec![mu.clone(), mu],
            coefficients: vec![DVector::zeros(1); 2],
            sizes: vec![1, 3],
            sigma2_hat: 0.5,
        };
        let w = optimize_weights(&twins, &DVector::from_vec(vec![1.0, 1.0, 0.0])).unwrap();
        assert_eq!(w.w.as_slice(), &[1.0, 0.0]);
    }

    /// Exhaustive search over the simplex grid with spacing 1/res.
    fn grid_minimum(quad: &SimplexQuadratic, res: usize) -> f64 {
        let k = quad.b.len();
        let mut best = f64::INFINITY;
        let mut counts = vec![0usize; k];
        fn rec(i: usize, left: usize, counts: &mut Vec<usize>, res: usize, quad: &SimplexQuadratic, best: &mut f64) {
            let k = counts.len();
            if i == k - 1 {
                counts[i] = left;
                let w = DVector::from_iterator(k, counts.iter().map(|&c| c as f64 / res as f64));
                *best = best.min(quad.value(&w));
                return;
            }
            for c in 0..=left {
                counts[i] = c;
                rec(i + 1, left - c, counts, res, quad, best);
            }
        }
        rec(0, res, &mut counts, res, quad, &mut best);
        best
    }

    #[test]
    fn three_candidates_match_grid_search() {
        let (cand, y) = random_candidates(10, 3, 3);
        let quad = SimplexQuadratic::from_candidates(&cand, &y).unwrap();
        let w = optimize_weights(&cand, &y).unwrap();
        let grid = grid_minimum(&quad, 1000);
        assert!(w.criterion <= grid + 1e-12);
        assert!((grid - w.criterion) <= 1e-6 * grid.abs());
        assert!((w.w.sum() - 1.0).abs() < 1e-12);
        assert!(w.w.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn gram_form_matches_data_form() {
        use crate::linmodel::standardize;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x = DMatrix::from_fn(15, 4, |_, _| rng.random_range(-1.0..1.0));
        let y = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let (std, info) = standardize(&Dataset::new(x, y).unwrap()).unwrap();
        let system = GramSystem::from_standardized(&std, info);
        let coefs = vec![
            DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.3, 0.0, -0.2, 0.0]),
            DVector::from_vec(vec![0.5, 0.1, -0.4, 0.2]),
        ];
        let direct = SimplexQuadratic::from_candidates(
            &CandidateSet::from_coefficients(&coefs, &std, 0.7).unwrap(),
            &std.y,
        )
        .unwrap();
        let gram = SimplexQuadratic::from_gram(&system, &coefs, 0.7).unwrap();
        assert!((&direct.a - &gram.a).amax() < 1e-12);
        assert!((&direct.b - &gram.b).amax() < 1e-12);
        assert!((direct.c - gram.c).abs() < 1e-12);
    }

    #[test]
    fn path_of_one_solution() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i + 2 * j) as f64 - 3.0);
        let data = Dataset::new(x, DVector::from_fn(6, |i, _| i as f64)).unwrap();
        let b = DVector::from_vec(vec![0.2, -0.1]);
        let (ma, w) = fit_path_ma(std::slice::from_ref(&b), &data, 1.0).unwrap();
        assert_eq!(ma, b);
        assert_eq!(w.w.as_slice(), &[1.0]);
        assert_eq!(fit_path_ma(&[], &data, 1.0).unwrap_err(), Error::EmptyPath);
    }

    #[test]
    fn noiseless_truth_gets_all_weight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = DMatrix::from_fn(30, 4, |_, _| rng.random_range(-1.0..1.0));
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.0, 0.5]);
        let y = &x * &beta;
        let data = Dataset::with_truth(x, y, beta.clone()).unwrap();
        let path = vec![
            DVector::zeros(4),
            DVector::from_vec(vec![0.5, -1.0, 0.0, 0.0]),
            beta.clone(),
            DVector::from_vec(vec![1.1, -2.1, 0.3, 0.6]),
        ];
        let (ma, w) = fit_path_ma(&path, &data, 1e-12).unwrap();
        assert!((w.w[2] - 1.0).abs() < 1e-6, "{:?}", w.w);
        let loss = crate::linmodel::in_sample_loss(&ma, &data).unwrap();
        assert!(loss < 1e-8);
    }
}

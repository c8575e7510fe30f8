//! Sufficient statistics of a standardized least-squares problem.
//!
//! Both path solvers only touch the data through `X'X`, `X'y` and `y'y` of
//! the standardized design, so a fit never needs the raw rows. Cross-products
//! of row subsets can be formed by subtraction, which is how the
//! cross-validation folds get their training systems.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linmodel::{standardize, Dataset, StandardizationInfo};

/// Standardized problem `(1/2)||y - X b||^2` in Gram form.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub n: usize,
    /// `X'X` of the standardized design.
    pub gram: DMatrix<f64>,
    /// `X'y` with `y` centered.
    pub xty: DVector<f64>,
    /// `y'y` with `y` centered.
    pub yty: f64,
    pub info: StandardizationInfo,
}

impl GramSystem {
    /// Standardizes `data` and forms its cross-products.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        let (std, info) = standardize(data)?;
        Ok(Self::from_standardized(&std, info))
    }

    /// Forms cross-products of a dataset that is already in the coordinates
    /// the solver should use.
    pub fn from_standardized(data: &Dataset, info: StandardizationInfo) -> Self {
        let xt = data.x.transpose();
        GramSystem {
            n: data.n(),
            gram: &xt * &data.x,
            xty: &xt * &data.y,
            yty: data.y.norm_squared(),
            info,
        }
    }

    pub fn from_parts(gram: DMatrix<f64>, xty: DVector<f64>, yty: f64, n: usize) -> Self {
        let p = xty.len();
        GramSystem {
            n,
            gram,
            xty,
            yty,
            info: StandardizationInfo::identity(p),
        }
    }

    pub fn p(&self) -> usize {
        self.xty.len()
    }

    /// `G b` using only the nonzero entries of `b`.
    pub fn gram_times(&self, beta: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.p());
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                out.axpy(b, &self.gram.column(j), 1.0);
            }
        }
        out
    }

    /// Residual correlations `X'(y - X b)`.
    pub fn correlations(&self, beta: &DVector<f64>) -> DVector<f64> {
        &self.xty - self.gram_times(beta)
    }

    /// `||y - X b||^2` given `G b`.
    pub fn rss_with(&self, beta: &DVector<f64>, gb: &DVector<f64>) -> f64 {
        (self.yty - 2.0 * beta.dot(&self.xty) + beta.dot(gb)).max(0.0)
    }

    pub fn rss(&self, beta: &DVector<f64>) -> f64 {
        self.rss_with(beta, &self.gram_times(beta))
    }
}

/// Raw cross-products of a row set, taken about a fixed reference shift.
///
/// Subtracting the products of a held-out fold from the full-sample products
/// yields the products of the training rows; [`CrossProducts::standardize`]
/// then produces the training-fold [`GramSystem`] with its own centering and
/// scaling.
#[derive(Debug, Clone)]
pub struct CrossProducts {
    pub n: usize,
    x_shift: DVector<f64>,
    y_shift: f64,
    xtx: DMatrix<f64>,
    xty: DVector<f64>,
    yty: f64,
    x_sum: DVector<f64>,
    y_sum: f64,
}

impl CrossProducts {
    /// Products of all rows, shifted by the column means so that later
    /// recentering only removes small corrections.
    pub fn from_dataset(data: &Dataset) -> Self {
        let n = data.n() as f64;
        let x_shift = DVector::from_iterator(data.p(), data.x.column_iter().map(|c| c.sum() / n));
        let y_shift = data.y.sum() / n;
        Self::with_shift(data, None, x_shift, y_shift)
    }

    /// Products of `rows` using the same shift as `full`.
    pub fn from_rows(data: &Dataset, rows: &[usize], full: &CrossProducts) -> Self {
        Self::with_shift(data, Some(rows), full.x_shift.clone(), full.y_shift)
    }

    fn with_shift(
        data: &Dataset,
        rows: Option<&[usize]>,
        x_shift: DVector<f64>,
        y_shift: f64,
    ) -> Self {
        let (mut x, mut y) = match rows {
            Some(r) => {
                let sub = data.select_rows(r);
                (sub.x, sub.y)
            }
            None => (data.x.clone(), data.y.clone()),
        };
        for (j, mut col) in x.column_iter_mut().enumerate() {
            col.add_scalar_mut(-x_shift[j]);
        }
        y.add_scalar_mut(-y_shift);
        let xt = x.transpose();
        CrossProducts {
            n: x.nrows(),
            xtx: &xt * &x,
            xty: &xt * &y,
            yty: y.norm_squared(),
            x_sum: DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum())),
            y_sum: y.sum(),
            x_shift,
            y_shift,
        }
    }

    /// Products of the rows in `self` that are not in `other`.
    pub fn minus(&self, other: &CrossProducts) -> CrossProducts {
        CrossProducts {
            n: self.n - other.n,
            xtx: &self.xtx - &other.xtx,
            xty: &self.xty - &other.xty,
            yty: self.yty - other.yty,
            x_sum: &self.x_sum - &other.x_sum,
            y_sum: self.y_sum - other.y_sum,
            x_shift: self.x_shift.clone(),
            y_shift: self.y_shift,
        }
    }

    /// Centers and scales the represented rows and returns their Gram system.
    pub fn standardize(&self) -> Result<GramSystem> {
        let n = self.n;
        if n < 2 {
            return Err(Error::DimensionMismatch(
                "standardization needs at least two rows".into(),
            ));
        }
        let nf = n as f64;
        let p = self.x_sum.len();
        let mx = &self.x_sum / nf;
        let my = self.y_sum / nf;
        let mut cov = &self.xtx - (&mx * self.x_sum.transpose());
        let mut cxy = &self.xty - &mx * self.y_sum;
        let cyy = self.yty - my * self.y_sum;
        let mut scales = DVector::zeros(p);
        for j in 0..p {
            let ss = cov[(j, j)];
            if !(ss > 1e-12 * self.xtx[(j, j)].max(f64::MIN_POSITIVE)) {
                return Err(Error::ConstantColumn(j));
            }
            scales[j] = (ss / (nf - 1.0)).sqrt();
        }
        for j in 0..p {
            for i in 0..p {
                cov[(i, j)] /= scales[i] * scales[j];
            }
            cxy[j] /= scales[j];
        }
        // Restore exact symmetry lost to the rank-one update.
        let gram = (&cov + cov.transpose()) * 0.5;
        Ok(GramSystem {
            n,
            gram,
            xty: cxy,
            yty: cyy.max(0.0),
            info: StandardizationInfo {
                column_means: mx + &self.x_shift,
                column_scales: scales,
                y_mean: my + self.y_shift,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sample(n: usize, p: usize, seed: u64) -> Dataset {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, p, |_, j| rng.random_range(0.0..1.0) + j as f64);
        let y = DVector::from_fn(n, |i, _| x[(i, 0)] * 2.0 - x[(i, 1)] + rng.random_range(-0.1..0.1));
        Dataset::new(x, y).unwrap()
    }

    #[test]
    fn subtraction_matches_direct_standardization() {
        let data = sample(40, 4, 11);
        let full = CrossProducts::from_dataset(&data);
        let fold: Vec<usize> = (0..40).filter(|i| i % 5 == 2).collect();
        let train: Vec<usize> = (0..40).filter(|i| i % 5 != 2).collect();
        let via_minus = full
            .minus(&CrossProducts::from_rows(&data, &fold, &full))
            .standardize()
            .unwrap();
        let direct = GramSystem::from_dataset(&data.select_rows(&train)).unwrap();
        assert_eq!(via_minus.n, 32);
        assert!((&via_minus.gram - &direct.gram).amax() < 1e-10);
        assert!((&via_minus.xty - &direct.xty).amax() < 1e-10);
        assert!((via_minus.yty - direct.yty).abs() < 1e-10);
        assert!((&via_minus.info.column_means - &direct.info.column_means).amax() < 1e-12);
        assert!((&via_minus.info.column_scales - &direct.info.column_scales).amax() < 1e-12);
        assert!((via_minus.info.y_mean - direct.info.y_mean).abs() < 1e-12);
    }

    #[test]
    fn rss_matches_explicit_residuals() {
        let data = sample(25, 3, 12);
        let (std, info) = standardize(&data).unwrap();
        let sys = GramSystem::from_standardized(&std, info);
        let b = DVector::from_vec(vec![0.4, -0.2, 0.1]);
        let direct = (&std.y - &std.x * &b).norm_squared();
        assert!((sys.rss(&b) - direct).abs() < 1e-9 * (1.0 + direct));
        let corr = sys.correlations(&b);
        let direct_corr = std.x.transpose() * (&std.y - &std.x * &b);
        assert!((corr - direct_corr).amax() < 1e-9);
    }
}

//! Independent oracles and the randomized invariant checks shared by the
//! `properties` and `acceptance` test targets. Every check runs on a fixed
//! proptest seed and reports the first counterexample as an error string.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use pathavg::averaging::SimplexQuadratic;
use pathavg::gram::GramSystem;
use pathavg::lasso::{lambda_max, lasso_fit, DEFAULT_TOLERANCE};
use pathavg::linmodel::{in_sample_loss, mspe, Dataset};
use pathavg::rng::{rep_rng, standard_normal};
use pathavg::selection::oracle_select;
use pathavg::simulation::{CovKind, DesignSampler, SimConfig};
use pathavg::slope::{sorted_l1_norm, sorted_l1_prox};

pub fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

fn flatten(outcome: Result<(), proptest::test_runner::TestError<impl std::fmt::Debug>>) -> Result<(), String> {
    outcome.map_err(|e| e.to_string())
}

// ---- sorted-L1 prox ----

fn permutations(p: usize) -> Vec<Vec<usize>> {
    if p == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(p - 1) {
        for slot in 0..=rest.len() {
            let mut perm = rest.clone();
            perm.insert(slot, p - 1);
            out.push(perm);
        }
    }
    out
}

fn prox_objective(w: &DVector<f64>, target: &DVector<f64>, tau: &DVector<f64>) -> f64 {
    0.5 * (w - target).norm_squared() + sorted_l1_norm(w, tau)
}

/// Exact prox by enumeration. The minimizer for `|v|` is nonnegative; fixing
/// the order of its entries and which neighbours are tied (or tied to zero)
/// leaves an equality-constrained quadratic whose solution is a block mean.
/// The minimizer is one of these candidates, so the best candidate under the
/// true objective is the prox.
pub fn brute_force_prox(v: &DVector<f64>, tau: &DVector<f64>) -> DVector<f64> {
    let p = v.len();
    let magnitude = v.abs();
    let mut best = DVector::zeros(p);
    let mut best_value = prox_objective(&best, &magnitude, tau);
    for order in permutations(p) {
        for mask in 0u32..(1 << p) {
            let mut w = DVector::zeros(p);
            let mut start = 0;
            while start < p {
                let mut end = start + 1;
                while end < p && mask & (1 << (end - 1)) != 0 {
                    end += 1;
                }
                let zero_block = end == p && mask & (1 << (p - 1)) != 0;
                let value = if zero_block {
                    0.0
                } else {
                    (start..end).map(|i| magnitude[order[i]] - tau[i]).sum::<f64>() / (end - start) as f64
                };
                for i in start..end {
                    w[order[i]] = value;
                }
                start = end;
            }
            let value = prox_objective(&w, &magnitude, tau);
            if value < best_value {
                best_value = value;
                best = w;
            }
        }
    }
    best.zip_map(v, |w, s| if s < 0.0 { -w } else { w })
}

fn prox_input(max_dim: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_dim).prop_flat_map(|p| {
        (
            prop::collection::vec(-5.0..5.0f64, p),
            prop::collection::vec(0.0..3.0f64, p).prop_map(|mut t| {
                t.sort_by(|a, b| b.total_cmp(a));
                t
            }),
        )
    })
}

pub fn prox_matches_brute_force(cases: u32) -> Result<(), String> {
    flatten(runner(cases).run(&prox_input(5), |(v, tau)| {
        let v = DVector::from_vec(v);
        let tau = DVector::from_vec(tau);
        let fast = sorted_l1_prox(&v, &tau).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let exact = brute_force_prox(&v, &tau);
        let gap = (&fast - &exact).amax();
        prop_assert!(gap <= 1e-6, "prox {fast:?} vs oracle {exact:?}");
        Ok(())
    }))
}

pub fn prox_is_nonexpansive_and_equivariant(cases: u32) -> Result<(), String> {
    let input = (prox_input(8), any::<u64>()).prop_flat_map(|((v, tau), seed)| {
        let p = v.len();
        (Just((v, tau, seed)), prop::collection::vec(-5.0..5.0f64, p))
    });
    flatten(runner(cases).run(&input, |((v, tau, seed), u)| {
        let (v, u, tau) = (DVector::from_vec(v), DVector::from_vec(u), DVector::from_vec(tau));
        let prox = |x: &DVector<f64>| sorted_l1_prox(x, &tau).expect("valid weights");
        let (pv, pu) = (prox(&v), prox(&u));
        prop_assert!((&pv - &pu).norm() <= (&v - &u).norm() * (1.0 + 1e-12) + 1e-12);
        let order = pathavg::rng::permutation(v.len(), &mut rep_rng(seed, 0));
        let permuted = DVector::from_fn(v.len(), |i, _| v[order[i]]);
        let p_permuted = prox(&permuted);
        for i in 0..v.len() {
            prop_assert!((p_permuted[i] - pv[order[i]]).abs() <= 1e-12);
        }
        let flipped = prox(&(-&v));
        prop_assert!((flipped + &pv).amax() <= 1e-12);
        Ok(())
    }))
}

// ---- lasso ----

pub fn random_dataset(n: usize, p: usize, correlation: f64, seed: u64) -> Dataset {
    let mut rng = rep_rng(seed, 0);
    let shared: Vec<f64> = (0..n).map(|_| standard_normal(&mut rng)).collect();
    let x = DMatrix::from_fn(n, p, |i, _| {
        correlation.sqrt() * shared[i] + (1.0 - correlation).sqrt() * standard_normal(&mut rng)
    });
    let beta = DVector::from_fn(p, |j, _| if j % 3 == 0 { 1.0 / (j + 1) as f64 } else { 0.0 });
    let noise = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
    Dataset::new(x.clone(), &x * beta + noise).expect("shapes agree")
}

/// Largest violation of the lasso optimality conditions, computed from the
/// Gram system directly.
pub fn kkt_residual(system: &GramSystem, beta: &DVector<f64>, lambda: f64) -> f64 {
    let grad = &system.xty - &system.gram * beta;
    grad.iter()
        .zip(beta.iter())
        .map(|(&g, &b)| {
            if b != 0.0 {
                (g - lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn lasso_satisfies_kkt(cases: u32) -> Result<(), String> {
    let input = (10usize..60, 2usize..40, 0.0..0.9f64, 0.01..1.0f64, any::<u64>());
    flatten(runner(cases).run(&input, |(n, p, correlation, fraction, seed)| {
        let data = random_dataset(n, p, correlation, seed);
        let system = GramSystem::from_dataset(&data).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let lambda = fraction * lambda_max(&system);
        let fit = lasso_fit(&system, lambda, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert!(fit.converged, "not converged after {} sweeps", fit.sweeps);
        let residual = kkt_residual(&system, &fit.coefficients, lambda);
        prop_assert!(
            residual <= DEFAULT_TOLERANCE * lambda.max(1.0),
            "KKT residual {residual} at lambda {lambda}"
        );
        Ok(())
    }))
}

/// Scaling the response by `c` scales the standardized lasso solution at
/// penalty `c * lambda` by `c`.
pub fn lasso_scales_with_response(cases: u32) -> Result<(), String> {
    let input = (20usize..50, 2usize..15, 0.1..1.0f64, 0.1..50.0f64, any::<u64>());
    flatten(runner(cases).run(&input, |(n, p, fraction, scale, seed)| {
        let data = random_dataset(n, p, 0.3, seed);
        let scaled = Dataset::new(data.x.clone(), &data.y * scale).expect("shapes agree");
        let base = GramSystem::from_dataset(&data).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let other = GramSystem::from_dataset(&scaled).map_err(|e| TestCaseError::reject(e.to_string()))?;
        let lambda = fraction * lambda_max(&base);
        let a = lasso_fit(&base, lambda, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let b = lasso_fit(&other, lambda * scale, None).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let gap = (&a.coefficients * scale - &b.coefficients).amax();
        prop_assert!(gap <= 1e-6 * scale.max(1.0) * (1.0 + a.coefficients.amax()), "gap {gap}");
        Ok(())
    }))
}

// ---- simplex weights ----

/// Exact minimizer over the simplex: for every support set, the
/// equality-constrained stationary point; the best feasible one wins.
pub fn exact_simplex_min(quad: &SimplexQuadratic) -> f64 {
    let k = quad.b.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << k) {
        let set: Vec<usize> = (0..k).filter(|&i| mask & (1 << i) != 0).collect();
        let m = set.len();
        let mut lhs = DMatrix::zeros(m + 1, m + 1);
        let mut rhs = DVector::zeros(m + 1);
        for (r, &i) in set.iter().enumerate() {
            for (c, &j) in set.iter().enumerate() {
                lhs[(r, c)] = 2.0 * quad.a[(i, j)];
            }
            lhs[(r, m)] = 1.0;
            lhs[(m, r)] = 1.0;
            rhs[r] = 2.0 * quad.b[i];
        }
        rhs[m] = 1.0;
        let Some(solution) = lhs.lu().solve(&rhs) else { continue };
        if solution.rows(0, m).iter().any(|&w| w < -1e-12) {
            continue;
        }
        let mut w = DVector::zeros(k);
        for (r, &i) in set.iter().enumerate() {
            w[i] = solution[r].max(0.0);
        }
        let total = w.sum();
        best = best.min(quad.value(&(w / total)));
    }
    best
}

/// Minimum over the simplex points with coordinates in multiples of `1/steps`.
pub fn grid_simplex_min(quad: &SimplexQuadratic, steps: usize) -> f64 {
    fn walk(quad: &SimplexQuadratic, steps: usize, w: &mut DVector<f64>, slot: usize, left: usize, best: &mut f64) {
        let k = w.len();
        if slot == k - 1 {
            w[slot] = left as f64 / steps as f64;
            *best = best.min(quad.value(w));
            return;
        }
        for units in 0..=left {
            w[slot] = units as f64 / steps as f64;
            walk(quad, steps, w, slot + 1, left - units, best);
        }
    }
    let mut best = f64::INFINITY;
    let mut w = DVector::zeros(quad.b.len());
    walk(quad, steps, &mut w, 0, steps, &mut best);
    best
}

fn simplex_input() -> impl Strategy<Value = SimplexQuadratic> {
    (2usize..=4).prop_flat_map(|k| {
        (
            prop::collection::vec(-2.0..2.0f64, (k + 2) * k),
            prop::collection::vec(-3.0..3.0f64, k),
            0.0..10.0f64,
        )
            .prop_map(move |(m, b, c)| {
                let factor = DMatrix::from_vec(k + 2, k, m);
                SimplexQuadratic {
                    a: factor.transpose() * &factor + DMatrix::identity(k, k) * 1e-3,
                    b: DVector::from_vec(b),
                    c,
                }
            })
    })
}

pub fn weights_match_exhaustive_search(cases: u32) -> Result<(), String> {
    flatten(runner(cases).run(&simplex_input(), |quad| {
        let w = quad.minimize();
        prop_assert!((w.sum() - 1.0).abs() <= 1e-12 && w.iter().all(|&x| x >= 0.0));
        let value = quad.value(&w);
        let k = w.len();
        for vertex in 0..k {
            let e = DVector::from_fn(k, |i, _| if i == vertex { 1.0 } else { 0.0 });
            prop_assert!(value <= quad.value(&e) + 1e-8, "vertex {vertex} beats the optimizer");
        }
        let exact = exact_simplex_min(&quad);
        prop_assert!(
            (value - exact).abs() <= 1e-6 * exact.abs().max(1.0),
            "optimizer {value} vs exact {exact}"
        );
        let grid = grid_simplex_min(&quad, if k == 4 { 60 } else { 200 });
        prop_assert!(value <= grid + 1e-10, "grid {grid} beats optimizer {value}");
        Ok(())
    }))
}

// ---- losses and selection ----

pub fn oracle_select_is_minimal(cases: u32) -> Result<(), String> {
    let input = (5usize..30, 1usize..8, 1usize..12, any::<u64>());
    flatten(runner(cases).run(&input, |(n, p, k, seed)| {
        let mut rng = rep_rng(seed, 1);
        let x = DMatrix::from_fn(n, p, |_, _| standard_normal(&mut rng));
        let beta = DVector::from_fn(p, |_, _| standard_normal(&mut rng));
        let y = &x * &beta;
        let data = Dataset::with_truth(x, y, beta).expect("shapes agree");
        let path: Vec<DVector<f64>> = (0..k)
            .map(|_| DVector::from_fn(p, |_, _| standard_normal(&mut rng)))
            .collect();
        let (index, chosen) = oracle_select(&path, &data).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(&chosen, &path[index]);
        let best = in_sample_loss(&chosen, &data).expect("shapes agree");
        for b in &path {
            prop_assert!(best <= in_sample_loss(b, &data).expect("shapes agree"));
        }
        Ok(())
    }))
}

pub fn mspe_ignores_row_order(cases: u32) -> Result<(), String> {
    let input = (1usize..40, 1usize..6, any::<u64>());
    flatten(runner(cases).run(&input, |(n, p, seed)| {
        let mut rng = rep_rng(seed, 2);
        let x = DMatrix::from_fn(n, p, |_, _| standard_normal(&mut rng));
        let y = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
        let beta = DVector::from_fn(p, |_, _| standard_normal(&mut rng));
        let intercept = standard_normal(&mut rng);
        let data = Dataset::new(x, y).expect("shapes agree");
        let order = pathavg::rng::permutation(n, &mut rng);
        let shuffled = data.select_rows(&order);
        let a = mspe(&beta, intercept, &data).expect("nonempty");
        let b = mspe(&beta, intercept, &shuffled).expect("nonempty");
        prop_assert!(a >= 0.0 && (a - b).abs() <= 1e-12 * a.max(1.0));
        Ok(())
    }))
}

// ---- simulation design ----

/// Sample R-squared of `X beta` against `y` at `n` rows, for each covariance.
pub fn empirical_r2(kind: CovKind, rho: f64, r2: f64, n: usize, seed: u64) -> f64 {
    let config = SimConfig {
        n,
        p: 60,
        s: 20,
        rho,
        r2_target: r2,
        cov_kind: kind,
        base_seed: seed,
        ..SimConfig::comparison_defaults(kind)
    };
    let sampler = DesignSampler::new(&config).expect("valid configuration");
    let data = sampler.sample(&mut rep_rng(seed, 0));
    let signal = &data.x * sampler.beta();
    let noise = &data.y - &signal;
    let y_mean = data.y.mean();
    let total: f64 = data.y.iter().map(|v| (v - y_mean).powi(2)).sum();
    1.0 - noise.norm_squared() / total
}

pub fn r2_calibration() -> Result<(), String> {
    let settings = [
        (CovKind::CompoundSymmetry, 0.5, 0.5),
        (CovKind::AutoRegressive, 0.8, 0.3),
        (CovKind::BlockCsIdentity, 0.1, 0.9),
    ];
    for (kind, rho, r2) in settings {
        let got = empirical_r2(kind, rho, r2, 100_000, 5);
        if (got - r2).abs() > 0.02 {
            return Err(format!("{kind:?} rho {rho}: empirical R2 {got} vs target {r2}"));
        }
    }
    Ok(())
}

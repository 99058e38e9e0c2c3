use std::collections::BTreeSet;

use lpv_core::lasso::CoordinateDescent;
use lpv_core::{
    approximate_system, fit_lasso, make_basis, models, sample_domain, FitOptions, FitReport, GammaSpec,
    LassoOptions, SamplingStrategy,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn problem(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = DMatrix::from_fn(rows, cols, |_, b| {
        if b == 0 {
            1.0
        } else {
            rng.random_range(-1.0..1.0) + 0.3 * b as f64
        }
    });
    let truth = DVector::from_fn(cols, |_, _| rng.random_range(-3.0..3.0));
    let noise = DVector::from_fn(rows, |_, _| rng.random_range(-0.1..0.1));
    let y = &x * truth + noise;
    (x, y)
}

/// Least squares through the Cholesky factor of `XᵀX`.
fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let chol = (x.transpose() * x).cholesky().expect("full rank");
    chol.solve(&(x.transpose() * y))
}

#[test]
fn zero_penalty_matches_normal_equations() {
    for seed in 0..20 {
        let (x, y) = problem(50, 6, seed);
        let fit = fit_lasso(&x, &y, &LassoOptions::default());
        let oracle = normal_equations(&x, &y);
        for (a, b) in fit.coef.iter().zip(oracle.iter()) {
            assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
        assert!(fit.report.converged);
    }
}

#[test]
fn kkt_certificate_at_convergence() {
    for gamma in [0.01, 0.1, 1.0] {
        for seed in 0..5 {
            let (x, y) = problem(80, 8, 100 + seed);
            let fit = fit_lasso(&x, &y, &LassoOptions { gamma, ..Default::default() });
            let tol = FitReport::kkt_tolerance(y.as_slice());
            assert!(fit.report.converged);
            assert!(
                fit.report.max_kkt_violation <= tol,
                "gamma {gamma}: violation {} > {tol}",
                fit.report.max_kkt_violation
            );
        }
    }
}

#[test]
fn zero_penalty_residual_is_orthogonal() {
    let (x, y) = problem(120, 10, 7);
    let fit = fit_lasso(&x, &y, &LassoOptions::default());
    let r = &y - &x * DVector::from_vec(fit.coef);
    for b in 0..x.ncols() {
        let col = x.column(b);
        assert!(col.dot(&r).abs() <= 1e-8 * col.norm() * y.norm());
    }
}

#[test]
fn penalty_sparsifies_example_fits() {
    let sys = models::example1().unwrap();
    let s = sample_domain(&sys.domain, SamplingStrategy::LatinHypercube, 800, 3).unwrap();
    let count = |gamma: f64| {
        let opts = FitOptions {
            pf: 3,
            pg: 3,
            gamma: GammaSpec::Fixed { value: gamma },
            ..Default::default()
        };
        let a = approximate_system(&sys, &s, &opts).unwrap();
        a.f.iter()
            .chain(a.g.iter().flatten())
            .map(|p| p.terms.len())
            .collect::<Vec<_>>()
    };
    let dense = count(0.0);
    let sparse = count(10.0);
    for (d, s) in dense.iter().zip(&sparse) {
        assert!(s <= d);
    }
    assert!(sparse.iter().sum::<usize>() < dense.iter().sum::<usize>());
}

/// Enumerates `[0..=p]^n` and keeps total degree `<= p`.
fn brute_force_exponents(n: usize, p: u32) -> BTreeSet<Vec<u32>> {
    let mut out = BTreeSet::new();
    let mut cur = vec![0u32; n];
    loop {
        if cur.iter().sum::<u32>() <= p {
            out.insert(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= p {
                break;
            }
            cur[k] = 0;
            k += 1;
        }
    }
}

#[test]
fn basis_is_complete() {
    for n in 1..=4 {
        for p in 0..=4 {
            let b = make_basis(n, p);
            let got: BTreeSet<Vec<u32>> = b.monomials.iter().map(|m| m.0.clone()).collect();
            assert_eq!(got.len(), b.len(), "duplicates for n={n} p={p}");
            assert_eq!(got, brute_force_exponents(n, p));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cost_is_monotone(seed in 0u64..10_000, gamma in 0.0..5.0f64) {
        let (x, y) = problem(40, 7, seed);
        let mut cd = CoordinateDescent::new(&x, &y, gamma);
        let mut prev = cd.cost();
        for _ in 0..30 {
            cd.sweep();
            let c = cd.cost();
            prop_assert!(c <= prev + 1e-12 * prev.max(1.0));
            prev = c;
        }
    }

    #[test]
    fn report_cost_decomposes(seed in 0u64..10_000, gamma in 0.0..5.0f64) {
        let (x, y) = problem(30, 5, seed);
        let r = fit_lasso(&x, &y, &LassoOptions { gamma, ..Default::default() }).report;
        prop_assert!((r.cost - (r.sse + gamma * r.l1)).abs() <= 1e-10 * r.cost.max(1e-300));
    }
}

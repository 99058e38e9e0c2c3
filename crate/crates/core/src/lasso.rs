//! Cyclic coordinate descent for
//!
//! ```text
//! minimize  sum_j (y_j - X_j eta)^2 + gamma * ||eta||_1
//! ```
//!
//! The penalty acts on the raw coefficients. Internally each column is scaled
//! to unit norm (coordinate minimisation is invariant to that). With
//! `gamma == 0` the non-constant columns are also centred against the constant
//! column, which decouples the intercept and speeds up convergence; the
//! fitted values are unchanged.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub gamma: f64,
    /// Stop when the largest raw coefficient change in a sweep is below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            gamma: 0.0,
            tol: 1e-10,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub gamma: f64,
    pub cost: f64,
    pub sse: f64,
    pub l1: f64,
    pub iterations: usize,
    pub converged: bool,
    pub max_kkt_violation: f64,
    pub zero_columns: Vec<usize>,
}

impl FitReport {
    /// KKT tolerance used for the optimality certificate: `1e-6 * ||y||^2`.
    pub fn kkt_tolerance(y: &[f64]) -> f64 {
        1e-6 * y.iter().map(|v| v * v).sum::<f64>()
    }
}

#[derive(Debug, Clone)]
pub struct LassoFit {
    pub coef: Vec<f64>,
    pub report: FitReport,
}

/// Soft-threshold operator `sign(z) max(|z| - t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

/// Stepwise solver state; [`fit_lasso`] drives it to convergence.
pub struct CoordinateDescent<'a> {
    x: &'a DMatrix<f64>,
    y: &'a DVector<f64>,
    gamma: f64,
    gram: DMatrix<f64>,
    xty: DVector<f64>,
    /// Coefficients in working (centred, unit-norm) coordinates.
    w: DVector<f64>,
    /// `gram * w`, maintained incrementally.
    gw: DVector<f64>,
    norms: Vec<f64>,
    /// Column means removed from the working columns, with the index and
    /// value of the constant column they were folded into.
    centering: Option<(usize, f64, Vec<f64>)>,
    pub zero_columns: Vec<usize>,
}

impl<'a> CoordinateDescent<'a> {
    pub fn new(x: &'a DMatrix<f64>, y: &'a DVector<f64>, gamma: f64) -> Self {
        assert!(gamma >= 0.0, "gamma must be nonnegative");
        assert_eq!(x.nrows(), y.len(), "design rows must match targets");
        let (rows, cols) = x.shape();

        let constant_col = (0..cols).find(|&b| {
            let c = x[(0, b)];
            c != 0.0 && x.column(b).iter().all(|v| *v == c)
        });
        let mut z = x.clone();
        let centering = match constant_col {
            Some(c0) if gamma == 0.0 && rows > 1 => {
                let means: Vec<f64> = (0..cols)
                    .map(|b| if b == c0 { 0.0 } else { x.column(b).mean() })
                    .collect();
                for (b, mu) in means.iter().enumerate() {
                    if *mu != 0.0 {
                        z.column_mut(b).add_scalar_mut(-mu);
                    }
                }
                Some((c0, x[(0, c0)], means))
            }
            _ => None,
        };

        let mut norms = vec![0.0; cols];
        let mut zero_columns = Vec::new();
        for b in 0..cols {
            let nb = z.column(b).norm();
            if nb > 0.0 && x.column(b).norm() > 0.0 {
                norms[b] = nb;
                z.column_mut(b).scale_mut(1.0 / nb);
            } else {
                z.column_mut(b).fill(0.0);
                zero_columns.push(b);
            }
        }
        if !zero_columns.is_empty() {
            warn!("lasso: all-zero design columns {zero_columns:?} are held at 0");
        }

        let gram = z.tr_mul(&z);
        let xty = z.tr_mul(y);
        CoordinateDescent {
            x,
            y,
            gamma,
            gram,
            xty,
            w: DVector::zeros(cols),
            gw: DVector::zeros(cols),
            norms,
            centering,
            zero_columns,
        }
    }

    /// Current coefficients in raw coordinates.
    pub fn coefficients(&self) -> Vec<f64> {
        let mut eta: Vec<f64> = self
            .w
            .iter()
            .zip(&self.norms)
            .map(|(w, d)| if *d > 0.0 { w / d } else { 0.0 })
            .collect();
        if let Some((c0, cval, means)) = &self.centering {
            let shift: f64 = eta.iter().zip(means).map(|(e, mu)| e * mu).sum();
            eta[*c0] -= shift / cval;
        }
        eta
    }

    /// One cyclic pass over all coordinates; returns the largest raw
    /// coefficient change.
    pub fn sweep(&mut self) -> f64 {
        let before = self.coefficients();
        for b in 0..self.w.len() {
            let d = self.norms[b];
            if d == 0.0 {
                continue;
            }
            let gbb = self.gram[(b, b)];
            let old = self.w[b];
            let rho = self.xty[b] - self.gw[b] + gbb * old;
            let new = soft_threshold(rho, self.gamma / (2.0 * d)) / gbb;
            let delta = new - old;
            if delta != 0.0 {
                self.w[b] = new;
                self.gw.axpy(delta, &self.gram.column(b), 1.0);
            }
        }
        self.coefficients()
            .iter()
            .zip(&before)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn residual(&self, eta: &[f64]) -> DVector<f64> {
        self.y - self.x * DVector::from_column_slice(eta)
    }

    /// `(cost, sse, l1)` of raw coefficients.
    pub fn cost_parts(&self, eta: &[f64]) -> (f64, f64, f64) {
        let sse = self.residual(eta).norm_squared();
        let l1: f64 = eta.iter().map(|v| v.abs()).sum();
        (sse + self.gamma * l1, sse, l1)
    }

    pub fn cost(&self) -> f64 {
        self.cost_parts(&self.coefficients()).0
    }

    /// Largest violation of the subgradient optimality conditions.
    pub fn kkt_violation(&self, eta: &[f64]) -> f64 {
        let r = self.residual(eta);
        let mut worst: f64 = 0.0;
        for (b, e) in eta.iter().enumerate() {
            if self.zero_columns.contains(&b) {
                continue;
            }
            let g = 2.0 * self.x.column(b).dot(&r);
            let v = if *e == 0.0 {
                (g.abs() - self.gamma).max(0.0)
            } else {
                (g - self.gamma * e.signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Fits `eta` by cyclic coordinate descent with exact soft-threshold updates.
/// On hitting `max_iter` the last (lowest-cost) iterate is returned with
/// `converged = false`.
pub fn fit_lasso(x: &DMatrix<f64>, y: &DVector<f64>, opts: &LassoOptions) -> LassoFit {
    let mut cd = CoordinateDescent::new(x, y, opts.gamma);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        if cd.sweep() < opts.tol {
            converged = true;
            break;
        }
    }
    let coef = cd.coefficients();
    if !converged {
        warn!("lasso: no convergence after {iterations} sweeps");
    }
    let (cost, sse, l1) = cd.cost_parts(&coef);
    let report = FitReport {
        gamma: opts.gamma,
        cost,
        sse,
        l1,
        iterations,
        converged,
        max_kkt_violation: cd.kkt_violation(&coef),
        zero_columns: cd.zero_columns.clone(),
    };
    LassoFit { coef, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(rows: usize, cols: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(rows, cols, |_, b| {
            if b == 0 {
                1.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        });
        let y = DVector::from_fn(rows, |_, _| rng.random_range(-2.0..2.0));
        (x, y)
    }

    #[test]
    fn mean_with_zero_penalty() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let y = DVector::from_vec(vec![2.0, 2.0]);
        let fit = fit_lasso(&x, &y, &LassoOptions::default());
        assert!((fit.coef[0] - 2.0).abs() < 1e-14);
        assert!(fit.report.converged);
    }

    #[test]
    fn soft_threshold_kills_small_signal() {
        // (1 - eta)^2 + 2|eta| has its minimum at eta = 0
        let x = DMatrix::from_element(1, 1, 1.0);
        let y = DVector::from_vec(vec![1.0]);
        let fit = fit_lasso(&x, &y, &LassoOptions { gamma: 2.0, ..Default::default() });
        assert_eq!(fit.coef[0], 0.0);
        assert_eq!(fit.report.cost, 1.0);
        // and below the threshold it shrinks: argmin (1-eta)^2 + |eta| = 0.5
        let fit = fit_lasso(&x, &y, &LassoOptions { gamma: 1.0, ..Default::default() });
        assert!((fit.coef[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn cost_decomposition() {
        let (x, y) = random_problem(40, 5, 3);
        let fit = fit_lasso(&x, &y, &LassoOptions { gamma: 0.7, ..Default::default() });
        let r = &fit.report;
        assert!((r.cost - (r.sse + 0.7 * r.l1)).abs() <= 1e-10 * r.cost);
    }

    #[test]
    fn cost_never_increases_across_sweeps() {
        for (seed, gamma) in [(1, 0.0), (2, 0.05), (3, 1.0), (4, 10.0)] {
            let (x, y) = random_problem(60, 8, seed);
            let mut cd = CoordinateDescent::new(&x, &y, gamma);
            let mut prev = cd.cost();
            for _ in 0..50 {
                cd.sweep();
                let c = cd.cost();
                assert!(c <= prev * (1.0 + 1e-12) + 1e-14, "{c} > {prev}");
                prev = c;
            }
        }
    }

    #[test]
    fn zero_column_is_reported_and_held() {
        let mut x = DMatrix::from_element(5, 2, 1.0);
        x.column_mut(1).fill(0.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        let fit = fit_lasso(&x, &y, &LassoOptions::default());
        assert_eq!(fit.report.zero_columns, vec![1]);
        assert_eq!(fit.coef[1], 0.0);
        assert!((fit.coef[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_cap_is_reported() {
        let (x, y) = random_problem(30, 6, 9);
        let fit = fit_lasso(&x, &y, &LassoOptions { max_iter: 1, ..Default::default() });
        assert!(!fit.report.converged);
        assert_eq!(fit.report.iterations, 1);
    }

    #[test]
    fn large_penalty_zeroes_everything() {
        let (x, y) = random_problem(30, 4, 5);
        let fit = fit_lasso(&x, &y, &LassoOptions { gamma: 1e6, ..Default::default() });
        assert!(fit.coef.iter().all(|c| *c == 0.0));
    }
}

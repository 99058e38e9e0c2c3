//! Factorization of functions vanishing at the origin into rows multiplying
//! the state: polynomials exactly by monomial assignment, residuals by
//! sequential differences along a variable ordering.

use crate::error::{Error, Result};
use crate::expr::{central_difference, default_step, Expr};
use crate::poly::{Monomial, PolyModel};
use crate::system::NlSystem;

/// Below this magnitude a coordinate is treated as exactly zero.
pub const ZERO_THRESHOLD: f64 = 1e-12;
/// Between [`ZERO_THRESHOLD`] and this, the difference quotient is checked
/// against the derivative before being trusted.
pub const GUARD_THRESHOLD: f64 = 1e-8;
/// Largest admissible `|e(0)|` for a shifted residual.
pub const ORIGIN_RESIDUAL_TOL: f64 = 1e-9;

/// `beta` such that `sum_k beta[k] * x_k` equals the polynomial minus its
/// constant term.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyFactorRow {
    pub constant: f64,
    pub beta: Vec<PolyModel>,
}

impl PolyFactorRow {
    /// `sum_k beta_k * x_k`, rebuilt at coefficient level.
    pub fn recombine(&self) -> PolyModel {
        let n = self.beta.len();
        self.beta
            .iter()
            .enumerate()
            .fold(PolyModel::zero(n), |acc, (k, b)| acc.add(&b.mul_var(k)))
    }
}

/// Checks that `order` is a permutation of `0..n`.
pub fn validate_order(order: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if order.len() != n {
        return Err(Error::Config(format!(
            "ordering has {} entries, expected {n}",
            order.len()
        )));
    }
    for &k in order {
        if k >= n || seen[k] {
            return Err(Error::Config(format!(
                "ordering {order:?} is not a permutation of 1..{n}"
            )));
        }
        seen[k] = true;
    }
    Ok(())
}

pub fn natural_order(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Assigns every non-constant monomial to the first variable in `order` that
/// it contains and divides that variable out.
pub fn factor_poly(p: &PolyModel, order: &[usize]) -> PolyFactorRow {
    let n = p.n_vars;
    let mut beta = vec![PolyModel::zero(n); n];
    for (m, &c) in &p.terms {
        if m.is_constant() {
            continue;
        }
        let k = *order
            .iter()
            .find(|&&k| m.0[k] > 0)
            .expect("ordering covers every variable");
        let mut e = m.0.clone();
        e[k] -= 1;
        beta[k].add_term(Monomial(e), c);
    }
    PolyFactorRow {
        constant: p.constant_term(),
        beta,
    }
}

/// `e(x) = f(x) - (f~(x) - f~(0))`, the fit residual with the fitted constant
/// folded back in so that it vanishes at the origin.
#[derive(Debug, Clone)]
pub struct ShiftedResidual {
    pub f: Expr,
    /// The fitted polynomial without its constant term.
    pub fbar: PolyModel,
}

impl ShiftedResidual {
    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        Ok(self.f.eval(x)? - self.fbar.eval(x))
    }
}

pub fn shift_residual(f: &Expr, fitted: &PolyModel) -> Result<ShiftedResidual> {
    let r = ShiftedResidual {
        f: f.clone(),
        fbar: fitted.without_constant(),
    };
    let at0 = r.eval(&vec![0.0; fitted.n_vars])?;
    if at0.abs() > ORIGIN_RESIDUAL_TOL {
        return Err(Error::InvalidModel(format!(
            "shifted residual of `{f}` is {at0:e} at the origin"
        )));
    }
    Ok(r)
}

/// Sequential-difference factorization of any `e` with `e(0) = 0`.
///
/// With `x^k` keeping the first `k` variables of `order` and zeroing the rest
/// (`x^0 = 0`), the entry for variable `order[k]` is
/// `(e(x^{k+1}) - e(x^k)) / x_{order[k]}`, or the partial derivative along that
/// variable at `x^k` when the coordinate is zero. The entries times `x` sum to
/// `e(x) - e(0)`.
pub fn factor_row<F>(e: F, x: &[f64], order: &[usize]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let n = x.len();
    let mut row = vec![0.0; n];
    let mut prefix = vec![0.0; n];
    let mut prev = e(&prefix)?;
    for &k in order {
        let xk = x[k];
        let derivative = |at: &[f64]| central_difference(&e, at, k, default_step(0.0));
        if xk.abs() < ZERO_THRESHOLD {
            row[k] = derivative(&prefix)?;
            if xk != 0.0 {
                prefix[k] = xk;
                prev = e(&prefix)?;
            }
            continue;
        }
        prefix[k] = xk;
        let next = e(&prefix)?;
        let quotient = (next - prev) / xk;
        row[k] = if xk.abs() < GUARD_THRESHOLD {
            let mut at = prefix.clone();
            at[k] = 0.0;
            let d = derivative(&at)?;
            if quotient.is_finite() && (quotient - d).abs() <= 1e-4 * (1.0 + d.abs()) {
                quotient
            } else {
                d
            }
        } else {
            quotient
        };
        prev = next;
    }
    Ok(row)
}

/// One e^f row: the shifted residual of `f_i` and the ordering used for its
/// factorization.
#[derive(Debug, Clone)]
pub struct ResidualRowEvaluator {
    pub residual: ShiftedResidual,
    pub order: Vec<usize>,
}

impl ResidualRowEvaluator {
    pub fn eval_residual(&self, x: &[f64]) -> Result<f64> {
        self.residual.eval(x)
    }
}

pub fn eval_residual_row(ev: &ResidualRowEvaluator, x: &[f64]) -> Result<Vec<f64>> {
    factor_row(|z| ev.residual.eval(z), x, &ev.order)
}

/// Evaluates the full residual vector `e(x)`: the factorized e^f rows
/// followed by the e^g entries `g_ij - g~_ij`.
#[derive(Debug, Clone)]
pub struct ResidualModel {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub rows: Vec<ResidualRowEvaluator>,
    pub g: Vec<Vec<(Expr, PolyModel)>>,
}

impl ResidualModel {
    /// `fbar[i]` are the fitted F polynomials without constants and `gt[i][j]`
    /// the fitted G polynomials.
    pub fn new(
        sys: &NlSystem,
        fbar: &[PolyModel],
        gt: &[Vec<PolyModel>],
        order: &[usize],
    ) -> Result<Self> {
        validate_order(order, sys.n)?;
        let rows = sys
            .f
            .iter()
            .zip(fbar)
            .map(|(f, p)| {
                Ok(ResidualRowEvaluator {
                    residual: shift_residual(f, p)?,
                    order: order.to_vec(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let g = sys
            .g
            .iter()
            .zip(gt)
            .map(|(gi, pi)| gi.iter().cloned().zip(pi.iter().cloned()).collect())
            .collect();
        Ok(ResidualModel {
            n: sys.n,
            m: sys.m,
            q: sys.q,
            rows,
            g,
        })
    }

    pub fn len(&self) -> usize {
        (self.n + self.q) * (self.n + self.m)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ef_slot(&self, i: usize, k: usize) -> usize {
        i * self.n + k
    }

    pub fn eg_slot(&self, i: usize, j: usize) -> usize {
        self.n * (self.n + self.q) + i * self.m + j
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut e = Vec::with_capacity(self.len());
        for row in &self.rows {
            e.extend(eval_residual_row(row, x)?);
        }
        for (i, gi) in self.g.iter().enumerate() {
            for (j, (g, p)) in gi.iter().enumerate() {
                let v = g.eval(x).map_err(|source| Error::SingularPoint {
                    function: NlSystem::g_name(i, j),
                    x: x.to_vec(),
                    source,
                })?;
                e.push(v - p.eval(x));
            }
        }
        Ok(e)
    }
}

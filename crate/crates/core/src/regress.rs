//! Per-function polynomial fits of a whole system.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lasso::{fit_lasso, FitReport, LassoOptions};
use crate::poly::{design_matrix, make_basis, MonomialBasis, PolyModel};
use crate::system::{NlSystem, SampleSet};

/// How the l1 weight is chosen for each fitted function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum GammaSpec {
    /// `multiplier * (N+1) * var(y)` for target values `y`.
    Heuristic { multiplier: f64 },
    Fixed { value: f64 },
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Heuristic { multiplier: 0.01 }
    }
}

impl GammaSpec {
    pub fn resolve(&self, y: &[f64]) -> f64 {
        match *self {
            GammaSpec::Fixed { value } => value,
            GammaSpec::Heuristic { multiplier } => {
                let n = y.len() as f64;
                let mean = y.iter().sum::<f64>() / n;
                let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                multiplier * n * var
            }
        }
    }
}

impl fmt::Display for GammaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GammaSpec::Heuristic { multiplier } if *multiplier == 0.01 => f.write_str("auto"),
            GammaSpec::Heuristic { multiplier } => write!(f, "auto*{multiplier}"),
            GammaSpec::Fixed { value } => write!(f, "{value}"),
        }
    }
}

/// Accepts `auto`, `auto*<multiplier>` or a nonnegative number.
impl FromStr for GammaSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("gamma must be `auto`, `auto*<k>` or a number >= 0, got `{s}`"));
        let s = s.trim();
        let spec = if s == "auto" {
            GammaSpec::default()
        } else if let Some(k) = s.strip_prefix("auto*") {
            GammaSpec::Heuristic {
                multiplier: k.parse().map_err(|_| bad())?,
            }
        } else {
            GammaSpec::Fixed {
                value: s.parse().map_err(|_| bad())?,
            }
        };
        let v = match spec {
            GammaSpec::Heuristic { multiplier } => multiplier,
            GammaSpec::Fixed { value } => value,
        };
        if !(v >= 0.0 && v.is_finite()) {
            return Err(bad());
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub pf: u32,
    pub pg: u32,
    pub gamma: GammaSpec,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        let l = LassoOptions::default();
        FitOptions {
            pf: 1,
            pg: 0,
            gamma: GammaSpec::default(),
            tol: l.tol,
            max_iter: l.max_iter,
        }
    }
}

/// Fitted `F~` (n+q entries) and `G~` ((n+q) x m entries) with their reports.
#[derive(Debug, Clone)]
pub struct Approximation {
    pub f: Vec<PolyModel>,
    pub g: Vec<Vec<PolyModel>>,
    pub f_reports: Vec<FitReport>,
    pub g_reports: Vec<Vec<FitReport>>,
}

impl Approximation {
    /// `(name, report)` in row order, F entries first.
    pub fn reports(&self) -> Vec<(String, &FitReport)> {
        let mut out: Vec<_> = self
            .f_reports
            .iter()
            .enumerate()
            .map(|(i, r)| (NlSystem::f_name(i), r))
            .collect();
        for (i, row) in self.g_reports.iter().enumerate() {
            for (j, r) in row.iter().enumerate() {
                out.push((NlSystem::g_name(i, j), r));
            }
        }
        out
    }
}

/// Fits one polynomial over `basis` to target values `y`.
pub fn fit_poly(
    basis: &MonomialBasis,
    x: &DMatrix<f64>,
    y: &[f64],
    opts: &FitOptions,
) -> (PolyModel, FitReport) {
    let lasso = LassoOptions {
        gamma: opts.gamma.resolve(y),
        tol: opts.tol,
        max_iter: opts.max_iter,
    };
    let fit = fit_lasso(x, &DVector::from_column_slice(y), &lasso);
    (PolyModel::from_coefficients(basis, &fit.coef), fit.report)
}

/// Evaluates the system on the samples and fits every `f_i` with degree `pf`
/// and every `g_ij` with degree `pg`. Fits run in parallel.
pub fn approximate_system(
    sys: &NlSystem,
    samples: &SampleSet,
    opts: &FitOptions,
) -> Result<Approximation> {
    if opts.pf < 1 {
        return Err(Error::Config("the F degree must be at least 1".into()));
    }
    let basis_f = make_basis(sys.n, opts.pf);
    let basis_g = make_basis(sys.n, opts.pg);
    let needed = basis_f.len().max(if sys.m > 0 { basis_g.len() } else { 0 });
    if samples.len() < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: samples.len(),
        });
    }

    let values = samples
        .points
        .par_iter()
        .map(|x| sys.eval(x))
        .collect::<Result<Vec<_>>>()?;
    let rows = sys.rows();
    let f_targets: Vec<Vec<f64>> = (0..rows)
        .map(|i| values.iter().map(|(f, _)| f[i]).collect())
        .collect();
    let g_targets: Vec<Vec<f64>> = (0..rows * sys.m)
        .map(|ij| values.iter().map(|(_, g)| g[ij / sys.m][ij % sys.m]).collect())
        .collect();

    let xf = design_matrix(&basis_f, samples);
    let xg = if sys.m > 0 { design_matrix(&basis_g, samples) } else { DMatrix::zeros(0, 0) };

    let f_fits: Vec<_> = f_targets
        .par_iter()
        .map(|y| fit_poly(&basis_f, &xf, y, opts))
        .collect();
    let mut g_fits: Vec<_> = g_targets
        .par_iter()
        .map(|y| fit_poly(&basis_g, &xg, y, opts))
        .collect();

    let (f, f_reports) = f_fits.into_iter().unzip();
    let mut g = Vec::with_capacity(rows);
    let mut g_reports = Vec::with_capacity(rows);
    for _ in 0..rows {
        let (p, r): (Vec<_>, Vec<_>) = g_fits.drain(..sys.m).unzip();
        g.push(p);
        g_reports.push(r);
    }
    Ok(Approximation {
        f,
        g,
        f_reports,
        g_reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{sample_domain, SamplingStrategy};

    const SYS: &str = "states 2\ninputs 1\noutputs 1\ndomain x1 -1 1\ndomain x2 -1 1\n\
                       f[1] = x1 - 2*x1*x2\nf[2] = sin(x2)\nf[3] = x1\ng[1][1] = 1 + x2^2\n";

    #[test]
    fn gamma_spec_parsing() {
        assert_eq!("auto".parse::<GammaSpec>().unwrap(), GammaSpec::default());
        assert_eq!(
            "0.5".parse::<GammaSpec>().unwrap(),
            GammaSpec::Fixed { value: 0.5 }
        );
        assert_eq!(
            "auto*0.1".parse::<GammaSpec>().unwrap(),
            GammaSpec::Heuristic { multiplier: 0.1 }
        );
        assert!("-1".parse::<GammaSpec>().is_err());
        assert!("nan".parse::<GammaSpec>().is_err());
        assert!("lots".parse::<GammaSpec>().is_err());
    }

    #[test]
    fn heuristic_gamma() {
        let g = GammaSpec::Heuristic { multiplier: 0.5 };
        // var of (1,2,3) with divisor 3 is 2/3
        assert!((g.resolve(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn polynomial_functions_are_exact() {
        let sys: NlSystem = SYS.parse().unwrap();
        let s = sample_domain(&sys.domain, SamplingStrategy::LatinHypercube, 200, 4).unwrap();
        let opts = FitOptions {
            pf: 2,
            pg: 2,
            gamma: GammaSpec::Fixed { value: 0.0 },
            ..Default::default()
        };
        let a = approximate_system(&sys, &s, &opts).unwrap();
        for x in s.iter() {
            assert!((a.f[0].eval(x) - (x[0] - 2.0 * x[0] * x[1])).abs() < 1e-10);
            assert!((a.f[2].eval(x) - x[0]).abs() < 1e-10);
            assert!((a.g[0][0].eval(x) - (1.0 + x[1] * x[1])).abs() < 1e-10);
            assert!(a.g[1][0].eval(x).abs() < 1e-10);
        }
        assert_eq!(a.reports().len(), 6);
        assert_eq!(a.reports()[3].0, "g11");
    }

    #[test]
    fn too_few_samples() {
        let sys: NlSystem = SYS.parse().unwrap();
        let s = sample_domain(&sys.domain, SamplingStrategy::Grid, 4, 0).unwrap();
        let opts = FitOptions { pf: 3, ..Default::default() };
        assert!(matches!(
            approximate_system(&sys, &s, &opts),
            Err(Error::InsufficientSamples { needed: 10, got: 4 })
        ));
        let opts = FitOptions { pf: 0, ..Default::default() };
        assert!(matches!(approximate_system(&sys, &s, &opts), Err(Error::Config(_))));
    }
}

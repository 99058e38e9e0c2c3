//! Residual data matrix, row normalization, SVD and the affine θ map.

use std::fmt::Write as _;

use log::warn;
use nalgebra::{DMatrix, DVector, SVD};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factor::ResidualModel;
use crate::system::SampleSet;

/// Rows whose standard deviation is below this are left unscaled.
pub const SCALE_FLOOR: f64 = 1e-12;
/// If every centred entry is below this, the matrix is treated as zero.
pub const ZERO_MATRIX_TOL: f64 = 1e-8;

/// `Π`: one column `e(x_j)` per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualMatrix {
    pub data: DMatrix<f64>,
}

pub fn build_residual_matrix(res: &ResidualModel, samples: &SampleSet) -> Result<ResidualMatrix> {
    let cols = samples
        .points
        .par_iter()
        .map(|x| res.eval(x))
        .collect::<Result<Vec<_>>>()?;
    let rows = res.len();
    Ok(ResidualMatrix {
        data: DMatrix::from_fn(rows, cols.len(), |r, c| cols[c][r]),
    })
}

/// Affine row law `z -> (z - mu) / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowNormalizer {
    pub mu: Vec<f64>,
    pub s: Vec<f64>,
}

impl RowNormalizer {
    pub fn apply(&self, e: &[f64]) -> Vec<f64> {
        e.iter()
            .zip(self.mu.iter().zip(&self.s))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mu.iter().zip(&self.s))
            .map(|(v, (m, s))| m + s * v)
            .collect()
    }
}

/// Centres every row and divides by its standard deviation (divisor
/// `cols - 1`). Returns the normalized matrix and whether all of `Π` was
/// numerically constant, in which case no row is scaled.
pub fn normalize_rows(pi: &DMatrix<f64>) -> (DMatrix<f64>, RowNormalizer, bool) {
    let (rows, cols) = pi.shape();
    let mut mu = vec![0.0; rows];
    let mut s = vec![1.0; rows];
    let mut out = pi.clone();
    let mut largest: f64 = 0.0;
    for r in 0..rows {
        let row = pi.row(r);
        let m = if cols > 0 { row.mean() } else { 0.0 };
        mu[r] = m;
        let ss: f64 = row.iter().map(|v| (v - m).powi(2)).sum();
        largest = largest.max(row.iter().map(|v| (v - m).abs()).fold(0.0, f64::max));
        let sd = if cols > 1 { (ss / (cols - 1) as f64).sqrt() } else { 0.0 };
        if sd >= SCALE_FLOOR {
            s[r] = sd;
        }
    }
    let degenerate = largest < ZERO_MATRIX_TOL;
    if degenerate {
        s.iter_mut().for_each(|v| *v = 1.0);
    }
    for r in 0..rows {
        let (m, sc) = (mu[r], s[r]);
        out.row_mut(r).apply(|v| *v = (*v - m) / sc);
    }
    (out, RowNormalizer { mu, s }, degenerate)
}

/// Left singular vectors and singular values (descending) of a matrix.
/// Column signs are fixed so the largest-magnitude entry is positive.
pub fn svd_left(a: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let svd = SVD::try_new(a.clone(), true, false, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let u = svd.u.ok_or(Error::SvdFailed)?;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let sigma: Vec<f64> = idx.iter().map(|&i| svd.singular_values[i]).collect();
    let mut us = DMatrix::zeros(u.nrows(), idx.len());
    for (c, &i) in idx.iter().enumerate() {
        let mut col = u.column(i).clone_owned();
        let lead = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
        if lead < 0.0 {
            col.neg_mut();
        }
        us.set_column(c, &col);
    }
    Ok((us, sigma))
}

/// Full decomposition of the normalized residual matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaFit {
    pub normalizer: RowNormalizer,
    pub u: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub rank: usize,
}

pub fn numerical_rank(sigma: &[f64], shape: (usize, usize)) -> usize {
    let Some(&s1) = sigma.first() else { return 0 };
    let tol = s1 * shape.0.max(shape.1) as f64 * f64::EPSILON;
    sigma.iter().filter(|&&s| s > tol && s > 0.0).count()
}

pub fn pca_fit(pi: &ResidualMatrix) -> Result<PcaFit> {
    let (pn, normalizer, degenerate) = normalize_rows(&pi.data);
    if pn.iter().any(|v| !v.is_finite()) {
        return Err(Error::Dimension("residual matrix has non-finite entries".into()));
    }
    let rows = pn.nrows();
    if degenerate || pn.ncols() == 0 {
        return Ok(PcaFit {
            normalizer,
            u: DMatrix::identity(rows, rows),
            sigma: vec![0.0; rows],
            rank: 0,
        });
    }
    let (u, sigma) = svd_left(&pn)?;
    let rank = numerical_rank(&sigma, pn.shape());
    Ok(PcaFit {
        normalizer,
        u,
        sigma,
        rank,
    })
}

/// Fraction of total variation kept by the first `v` singular values; 1 when
/// all are zero.
pub fn vm_fraction(sigma: &[f64], v: usize) -> f64 {
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 1.0;
    }
    let kept: f64 = sigma.iter().take(v).map(|s| s * s).sum();
    (kept / total).min(1.0)
}

/// CSV table with columns `v,sigma,vm`.
pub fn vm_table_csv(sigma: &[f64]) -> String {
    let mut out = String::from("v,sigma,vm\n");
    for (i, s) in sigma.iter().enumerate() {
        let _ = writeln!(out, "{},{:.17e},{:.17e}", i + 1, s, vm_fraction(sigma, i + 1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Selection {
    Count(usize),
    VmTarget(f64),
}

/// The retained directions and normalizer defining `θ = U_sᵀ N(e)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaReduction {
    pub u_s: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub v: usize,
    pub normalizer: RowNormalizer,
}

pub fn select_scheduling(fit: &PcaFit, sel: Selection) -> Result<PcaReduction> {
    let cap = fit.rank.max(1).min(fit.u.ncols());
    let v = match sel {
        Selection::Count(v) => {
            if v == 0 || v > cap {
                return Err(Error::Selection {
                    requested: v,
                    reason: format!("must lie in 1..={cap} (numerical rank {})", fit.rank),
                });
            }
            v
        }
        Selection::VmTarget(t) => {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("vm target {t} outside (0, 1]")));
            }
            match (1..=cap).find(|&v| vm_fraction(&fit.sigma, v) >= t - 1e-12) {
                Some(v) => v,
                None => {
                    warn!("vm target {t} not reached; keeping all {cap} directions");
                    cap
                }
            }
        }
    };
    Ok(PcaReduction {
        u_s: fit.u.columns(0, v).into_owned(),
        sigma: fit.sigma.clone(),
        v,
        normalizer: fit.normalizer.clone(),
    })
}

impl PcaReduction {
    pub fn vm(&self) -> f64 {
        vm_fraction(&self.sigma, self.v)
    }

    pub fn theta_map(&self, e: &[f64]) -> Vec<f64> {
        let z = DVector::from_vec(self.normalizer.apply(e));
        (self.u_s.transpose() * z).iter().copied().collect()
    }

    pub fn reconstruct_e(&self, theta: &[f64]) -> Vec<f64> {
        let z = &self.u_s * DVector::from_column_slice(theta);
        self.normalizer.invert(z.as_slice())
    }

    /// `θ` for every column of `Π`, as a `v x cols` matrix.
    pub fn theta_samples(&self, pi: &ResidualMatrix) -> DMatrix<f64> {
        let mut z = pi.data.clone();
        for r in 0..z.nrows() {
            let (m, s) = (self.normalizer.mu[r], self.normalizer.s[r]);
            z.row_mut(r).apply(|v| *v = (*v - m) / s);
        }
        self.u_s.tr_mul(&z)
    }
}

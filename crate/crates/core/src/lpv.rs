//! The assembled LPV model `[xdot; y] = [A B; C D](α) [x; u]`.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{PolyFactorRow, ResidualModel};
use crate::pca::{build_residual_matrix, PcaReduction, ResidualMatrix};
use crate::poly::PolyModel;
use crate::regress::GammaSpec;
use crate::system::{Interval, NlSystem, SampleSet, SamplingStrategy};

pub const DEFAULT_MARGIN: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "kebab-case")]
pub enum SchedKind {
    /// Zero-based state index.
    State(usize),
    /// Zero-based θ component.
    Theta(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedVar {
    pub kind: SchedKind,
    pub lo: f64,
    pub hi: f64,
}

impl SchedVar {
    pub fn name(&self) -> String {
        match self.kind {
            SchedKind::State(k) => format!("x{}", k + 1),
            SchedKind::Theta(l) => format!("theta{}", l + 1),
        }
    }
}

/// Widens `[lo, hi]` about its midpoint by `margin` of its half-width. A
/// degenerate interval gets a tiny half-width so it stays nonempty.
pub fn inflate(lo: f64, hi: f64, margin: f64) -> (f64, f64) {
    let mid = 0.5 * (lo + hi);
    let half = (0.5 * (hi - lo) * (1.0 + margin)).max(1e-12 * (1.0 + mid.abs()));
    (mid - half, mid + half)
}

/// One matrix entry: a polynomial in the states plus `c0 + sum_l c_l θ_l`,
/// the reconstruction of residual slot `slot`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvEntry {
    pub poly: PolyModel,
    pub slot: usize,
    pub theta: Vec<f64>,
}

impl LpvEntry {
    pub fn eval(&self, x: &[f64], theta: &[f64]) -> f64 {
        let affine: f64 = self.theta[1..].iter().zip(theta).map(|(c, t)| c * t).sum();
        self.poly.eval(x) + self.theta[0] + affine
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub pf: u32,
    pub pg: u32,
    pub gamma: GammaSpec,
    pub strategy: SamplingStrategy,
    pub samples: usize,
    pub seed: u64,
    /// Zero-based factorization ordering.
    pub order: Vec<usize>,
    pub margin: f64,
}

#[derive(Debug, Clone)]
pub struct LpvModel {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub scheduling: Vec<SchedVar>,
    pub a: Vec<Vec<LpvEntry>>,
    pub b: Vec<Vec<LpvEntry>>,
    pub c: Vec<Vec<LpvEntry>>,
    pub d: Vec<Vec<LpvEntry>>,
    pub reduction: PcaReduction,
    pub provenance: Provenance,
    pub system: NlSystem,
    residual: ResidualModel,
}

/// Numeric result of evaluating the model at `(x, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvEval {
    pub e: Vec<f64>,
    pub theta: Vec<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub xdot: Vec<f64>,
    pub y: Vec<f64>,
}

fn theta_coefficients(red: &PcaReduction, slot: usize) -> Vec<f64> {
    let s = red.normalizer.s[slot];
    std::iter::once(red.normalizer.mu[slot])
        .chain((0..red.v).map(|l| s * red.u_s[(slot, l)]))
        .collect()
}

/// Builds the model from the factorized F fits, the G fits and the reduction.
/// Bounds are left empty until [`LpvModel::compute_bounds`].
pub fn assemble_lpv(
    sys: &NlSystem,
    factor_rows: &[PolyFactorRow],
    g_fits: &[Vec<PolyModel>],
    reduction: &PcaReduction,
    provenance: Provenance,
) -> Result<LpvModel> {
    let (n, m, q) = (sys.n, sys.m, sys.q);
    if factor_rows.len() != n + q || g_fits.len() != n + q {
        return Err(Error::Dimension(format!(
            "expected {} fitted rows, got {} / {}",
            n + q,
            factor_rows.len(),
            g_fits.len()
        )));
    }
    let fbar: Vec<PolyModel> = factor_rows.iter().map(PolyFactorRow::recombine).collect();
    let residual = ResidualModel::new(sys, &fbar, g_fits, &provenance.order)?;
    if reduction.u_s.nrows() != residual.len() {
        return Err(Error::Dimension(format!(
            "reduction has {} rows, residual vector has {}",
            reduction.u_s.nrows(),
            residual.len()
        )));
    }

    let entry = |poly: &PolyModel, slot: usize| LpvEntry {
        poly: poly.clone(),
        slot,
        theta: theta_coefficients(reduction, slot),
    };
    let ab: Vec<(Vec<LpvEntry>, Vec<LpvEntry>)> = (0..n + q)
        .map(|i| {
            let f_part = (0..n)
                .map(|k| entry(&factor_rows[i].beta[k], residual.ef_slot(i, k)))
                .collect();
            let g_part = (0..m)
                .map(|j| entry(&g_fits[i][j], residual.eg_slot(i, j)))
                .collect();
            (f_part, g_part)
        })
        .collect();
    let (mut top_a, mut top_b): (Vec<_>, Vec<_>) = ab.into_iter().unzip();
    let c = top_a.split_off(n);
    let d = top_b.split_off(n);

    let mut model = LpvModel {
        n,
        m,
        q,
        scheduling: Vec::new(),
        a: top_a,
        b: top_b,
        c,
        d,
        reduction: reduction.clone(),
        provenance,
        system: sys.clone(),
        residual,
    };
    model.scheduling = model.default_scheduling();
    Ok(model)
}

impl LpvModel {
    /// Reassembles a model from stored parts, rebuilding the residual
    /// evaluator from the block polynomials.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        system: NlSystem,
        a: Vec<Vec<LpvEntry>>,
        b: Vec<Vec<LpvEntry>>,
        c: Vec<Vec<LpvEntry>>,
        d: Vec<Vec<LpvEntry>>,
        reduction: PcaReduction,
        scheduling: Vec<SchedVar>,
        provenance: Provenance,
    ) -> Result<Self> {
        let fbar: Vec<PolyModel> = a
            .iter()
            .chain(&c)
            .map(|row| {
                let beta = row.iter().map(|e| e.poly.clone()).collect();
                PolyFactorRow { constant: 0.0, beta }.recombine()
            })
            .collect();
        let gt: Vec<Vec<PolyModel>> = b
            .iter()
            .chain(&d)
            .map(|row| row.iter().map(|e| e.poly.clone()).collect())
            .collect();
        let residual = ResidualModel::new(&system, &fbar, &gt, &provenance.order)?;
        Ok(LpvModel {
            n: system.n,
            m: system.m,
            q: system.q,
            scheduling,
            a,
            b,
            c,
            d,
            reduction,
            provenance,
            system,
            residual,
        })
    }

    pub fn v(&self) -> usize {
        self.reduction.v
    }

    pub fn vm(&self) -> f64 {
        self.reduction.vm()
    }

    pub fn residual_model(&self) -> &ResidualModel {
        &self.residual
    }

    fn entries(&self) -> impl Iterator<Item = &LpvEntry> {
        [&self.a, &self.b, &self.c, &self.d]
            .into_iter()
            .flatten()
            .flatten()
    }

    /// State variables that appear in any polynomial part.
    pub fn state_scheduling(&self) -> BTreeSet<usize> {
        self.entries().flat_map(|e| e.poly.variables()).collect()
    }

    /// Highest state degree of the polynomial parts.
    pub fn poly_degree(&self) -> u32 {
        self.entries().map(|e| e.poly.degree()).max().unwrap_or(0)
    }

    fn default_scheduling(&self) -> Vec<SchedVar> {
        let unset = |kind| SchedVar {
            kind,
            lo: f64::NAN,
            hi: f64::NAN,
        };
        (0..self.v())
            .map(|l| unset(SchedKind::Theta(l)))
            .chain(self.state_scheduling().into_iter().map(|k| unset(SchedKind::State(k))))
            .collect()
    }

    /// Bounds from the samples: states use the domain box, θ components their
    /// sampled range; both are widened by the provenance margin.
    pub fn compute_bounds(&mut self, samples: &SampleSet) -> Result<()> {
        let pi = build_residual_matrix(&self.residual, samples)?;
        self.compute_bounds_from(&pi);
        Ok(())
    }

    /// As [`compute_bounds`](Self::compute_bounds) with a precomputed `Π`.
    pub fn compute_bounds_from(&mut self, pi: &ResidualMatrix) {
        let theta = self.reduction.theta_samples(pi);
        let margin = self.provenance.margin;
        for sv in &mut self.scheduling {
            let (lo, hi) = match sv.kind {
                SchedKind::State(k) => {
                    let Interval { lo, hi } = self.system.domain[k];
                    (lo, hi)
                }
                SchedKind::Theta(l) => {
                    let row = theta.row(l);
                    (row.min(), row.max())
                }
            };
            (sv.lo, sv.hi) = inflate(lo, hi, margin);
        }
    }

    /// Scheduling values `α` at a state, in the order of [`Self::scheduling`].
    pub fn scheduling_values(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        self.scheduling
            .iter()
            .map(|sv| match sv.kind {
                SchedKind::State(k) => x[k],
                SchedKind::Theta(l) => theta[l],
            })
            .collect()
    }

    /// Number of points of `samples` at which some scheduling variable leaves
    /// its bounds.
    pub fn bound_violations(&self, samples: &SampleSet) -> Result<usize> {
        let counts = samples
            .points
            .par_iter()
            .map(|x| {
                let theta = self.theta(x)?;
                let alpha = self.scheduling_values(x, &theta);
                let out = self
                    .scheduling
                    .iter()
                    .zip(&alpha)
                    .any(|(sv, a)| !(sv.lo <= *a && *a <= sv.hi));
                Ok(usize::from(out))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(counts.iter().sum())
    }

    fn check_state(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "state has {} entries, model has {}",
                x.len(),
                self.n
            )));
        }
        Ok(())
    }

    pub fn residual_vector(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_state(x)?;
        self.residual.eval(x)
    }

    pub fn theta(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.reduction.theta_map(&self.residual_vector(x)?))
    }

    /// `A, B, C, D` at state `x` and θ.
    pub fn matrices(
        &self,
        x: &[f64],
        theta: &[f64],
    ) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        self.check_state(x)?;
        if theta.len() != self.v() {
            return Err(Error::Dimension(format!(
                "theta has {} entries, model has {}",
                theta.len(),
                self.v()
            )));
        }
        let block = |rows: &Vec<Vec<LpvEntry>>, cols: usize| {
            DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j].eval(x, theta))
        };
        Ok((
            block(&self.a, self.n),
            block(&self.b, self.m),
            block(&self.c, self.n),
            block(&self.d, self.m),
        ))
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Result<LpvEval> {
        if u.len() != self.m {
            return Err(Error::Dimension(format!(
                "input has {} entries, model has {}",
                u.len(),
                self.m
            )));
        }
        let e = self.residual_vector(x)?;
        let theta = self.reduction.theta_map(&e);
        let (a, b, c, d) = self.matrices(x, &theta)?;
        let xv = DVector::from_column_slice(x);
        let uv = DVector::from_column_slice(u);
        let xdot = (&a * &xv + &b * &uv).as_slice().to_vec();
        let y = (&c * &xv + &d * &uv).as_slice().to_vec();
        Ok(LpvEval {
            e,
            theta,
            a,
            b,
            c,
            d,
            xdot,
            y,
        })
    }
}

pub fn eval_lpv(model: &LpvModel, x: &[f64], u: &[f64]) -> Result<LpvEval> {
    model.eval(x, u)
}

impl fmt::Display for LpvModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "n = {}, m = {}, q = {}, v = {} (vm = {:.4})",
            self.n,
            self.m,
            self.q,
            self.v(),
            self.vm()
        )?;
        let p = &self.provenance;
        writeln!(
            f,
            "degrees pf = {}, pg = {}; gamma {}; {} {} samples, seed {}",
            p.pf, p.pg, p.gamma, p.samples, p.strategy, p.seed
        )?;
        writeln!(f, "scheduling variables ({}):", self.scheduling.len())?;
        for sv in &self.scheduling {
            writeln!(f, "  {:<8} [{:.6}, {:.6}]", sv.name(), sv.lo, sv.hi)?;
        }
        let blocks = [("A", &self.a), ("B", &self.b), ("C", &self.c), ("D", &self.d)];
        for (name, rows) in blocks {
            for (i, row) in rows.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    writeln!(f, "  {name}[{}][{}] = {} + e~{}(theta)", i + 1, j + 1, e.poly, e.slot + 1)?;
                }
            }
        }
        Ok(())
    }
}

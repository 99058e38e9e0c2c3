//! The full embedding: sample, fit, factor, build `Π`, decompose. The result
//! can then be assembled into LPV models for any number of θ components.

use log::{debug, info};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor::{factor_poly, natural_order, validate_order, PolyFactorRow, ResidualModel};
use crate::lpv::{assemble_lpv, LpvModel, Provenance, DEFAULT_MARGIN};
use crate::pca::{build_residual_matrix, pca_fit, select_scheduling, vm_fraction, PcaFit, ResidualMatrix, Selection};
use crate::regress::{approximate_system, Approximation, FitOptions};
use crate::system::{sample_domain, NlSystem, SampleSet, SamplingStrategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedConfig {
    pub fit: FitOptions,
    /// Number of sample points (N+1).
    pub samples: usize,
    pub strategy: SamplingStrategy,
    pub seed: u64,
    /// Zero-based factorization ordering; natural order when absent.
    pub order: Option<Vec<usize>>,
    pub margin: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            fit: FitOptions::default(),
            samples: 5000,
            strategy: SamplingStrategy::LatinHypercube,
            seed: 1,
            order: None,
            margin: DEFAULT_MARGIN,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.fit.pf < 1 {
            return Err(Error::Config("pf must be at least 1".into()));
        }
        if !(self.margin >= 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin {} must be >= 0", self.margin)));
        }
        if self.fit.tol.is_nan() || self.fit.tol <= 0.0 || self.fit.max_iter == 0 {
            return Err(Error::Config("tolerance and iteration cap must be positive".into()));
        }
        if let Some(order) = &self.order {
            validate_order(order, n)?;
        }
        Ok(())
    }
}

/// Every intermediate of the embedding, kept so models for several `v` can be
/// assembled without refitting.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub system: NlSystem,
    pub config: EmbedConfig,
    pub order: Vec<usize>,
    pub samples: SampleSet,
    pub approx: Approximation,
    pub factor_rows: Vec<PolyFactorRow>,
    pub residual: ResidualModel,
    pub pi: ResidualMatrix,
    pub pca: PcaFit,
}

pub fn embed(system: &NlSystem, config: &EmbedConfig) -> Result<Embedding> {
    config.validate(system.n)?;
    let order = config.order.clone().unwrap_or_else(|| natural_order(system.n));
    let samples = sample_domain(&system.domain, config.strategy, config.samples, config.seed)?;
    debug!("drew {} {} samples (seed {})", samples.len(), config.strategy, config.seed);

    let approx = approximate_system(system, &samples, &config.fit)?;
    for (name, r) in approx.reports() {
        debug!(
            "fit {name}: cost {:.6e} sse {:.6e} l1 {:.6e} sweeps {} converged {}",
            r.cost, r.sse, r.l1, r.iterations, r.converged
        );
    }

    let factor_rows: Vec<PolyFactorRow> = approx.f.iter().map(|p| factor_poly(p, &order)).collect();
    let fbar: Vec<_> = factor_rows.iter().map(PolyFactorRow::recombine).collect();
    let residual = ResidualModel::new(system, &fbar, &approx.g, &order)?;
    let pi = build_residual_matrix(&residual, &samples)?;
    let pca = pca_fit(&pi)?;
    info!(
        "residual matrix {} x {}, numerical rank {}",
        pi.data.nrows(),
        pi.data.ncols(),
        pca.rank
    );
    Ok(Embedding {
        system: system.clone(),
        config: config.clone(),
        order,
        samples,
        approx,
        factor_rows,
        residual,
        pi,
        pca,
    })
}

impl Embedding {
    pub fn vm(&self, v: usize) -> f64 {
        vm_fraction(&self.pca.sigma, v)
    }

    pub fn provenance(&self) -> Provenance {
        Provenance {
            pf: self.config.fit.pf,
            pg: self.config.fit.pg,
            gamma: self.config.fit.gamma,
            strategy: self.config.strategy,
            samples: self.config.samples,
            seed: self.config.seed,
            order: self.order.clone(),
            margin: self.config.margin,
        }
    }

    /// Assembles the LPV model for a selection and sets its bounds from the
    /// fitting samples.
    pub fn lpv(&self, sel: Selection) -> Result<LpvModel> {
        let red = select_scheduling(&self.pca, sel)?;
        let mut model = assemble_lpv(
            &self.system,
            &self.factor_rows,
            &self.approx.g,
            &red,
            self.provenance(),
        )?;
        model.compute_bounds_from(&self.pi);
        Ok(model)
    }
}

//! Embedding of control-affine nonlinear systems into LPV form.
//!
//! The pipeline fits sparse polynomials to every system function, factors the
//! polynomial parts and the residuals into rows multiplying the state, and
//! compresses the residuals into a few scheduling variables with PCA. With all
//! principal directions kept the LPV model reproduces the nonlinear system
//! exactly on its domain.
//!
//! ```no_run
//! use lpv_core::{embed, models, EmbedConfig, Selection};
//!
//! let sys = models::example1().unwrap();
//! let emb = embed(&sys, &EmbedConfig::default()).unwrap();
//! let lpv = emb.lpv(Selection::Count(3)).unwrap();
//! let out = lpv.eval(&[0.1, 0.2], &[1.0]).unwrap();
//! println!("vm = {:.4}, xdot = {:?}", lpv.vm(), out.xdot);
//! ```

pub mod error;
pub mod export;
pub mod expr;
pub mod factor;
pub mod lasso;
pub mod lpv;
pub mod models;
pub mod pca;
pub mod pipeline;
pub mod poly;
pub mod regress;
pub mod system;

pub use error::{Error, Result};
pub use export::{export_model, from_json, import_model, to_json, SCHEMA};
pub use expr::{parse_expr, Expr};
pub use factor::{eval_residual_row, factor_poly, factor_row, shift_residual, PolyFactorRow, ResidualModel, ResidualRowEvaluator};
pub use lasso::{fit_lasso, FitReport, LassoOptions};
pub use lpv::{assemble_lpv, eval_lpv, LpvEval, LpvModel, Provenance, SchedKind, SchedVar};
pub use pca::{
    build_residual_matrix, normalize_rows, pca_fit, select_scheduling, vm_fraction, vm_table_csv, PcaFit,
    PcaReduction, ResidualMatrix, RowNormalizer, Selection,
};
pub use pipeline::{embed, EmbedConfig, Embedding};
pub use poly::{design_matrix, make_basis, Monomial, MonomialBasis, PolyModel};
pub use regress::{approximate_system, Approximation, FitOptions, GammaSpec};
pub use system::{load_system, sample_domain, Interval, NlSystem, SampleSet, SamplingStrategy};

/// Matrix types used in the public API.
pub use nalgebra;

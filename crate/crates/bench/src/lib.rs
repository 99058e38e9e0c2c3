//! Reproduction runs for the bundled examples: v_m sweeps, MSE tables and
//! function surfaces, written as CSV next to the exported models.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use log::info;
use lpv_core::lpv::LpvModel;
use lpv_core::{
    embed, models, sample_domain, to_json, EmbedConfig, Embedding, Error, GammaSpec, NlSystem,
    Result, SampleSet, SamplingStrategy, Selection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaseId {
    Example1S1,
    Example1S2,
    Example2,
}

impl CaseId {
    pub const ALL: [CaseId; 3] = [CaseId::Example1S1, CaseId::Example1S2, CaseId::Example2];
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseId::Example1S1 => "example1-s1",
            CaseId::Example1S2 => "example1-s2",
            CaseId::Example2 => "example2",
        })
    }
}

impl FromStr for CaseId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CaseId::ALL
            .into_iter()
            .find(|c| c.to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown case `{s}` (expected one of example1-s1, example1-s2, example2)"
                ))
            })
    }
}

/// Published value a computed quantity is compared against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub v: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct BenchCase {
    pub id: CaseId,
    pub model_text: &'static str,
    pub config: EmbedConfig,
    pub sweep: Vec<usize>,
    /// `v` used for the surfaces and the MSE reference comparison.
    pub surface_v: usize,
    pub reference_vm: Vec<Reference>,
    /// Published values of a competing method, reproduced for display only.
    pub baseline_vm: Vec<Reference>,
    /// `(function, mse)` references at `surface_v`.
    pub reference_mse: Vec<(&'static str, f64)>,
}

fn refs(vs: &[usize], values: &[f64]) -> Vec<Reference> {
    vs.iter().zip(values).map(|(&v, &value)| Reference { v, value }).collect()
}

impl BenchCase {
    pub fn new(id: CaseId) -> Self {
        let mut config = EmbedConfig::default();
        config.fit.gamma = GammaSpec::Fixed { value: 0.0 };
        match id {
            CaseId::Example1S1 => BenchCase {
                id,
                model_text: models::EXAMPLE1,
                config,
                sweep: (1..=5).collect(),
                surface_v: 3,
                reference_vm: refs(&[1, 2, 3, 4, 5], &[0.6273, 0.8835, 0.9609, 0.9938, 0.9998]),
                baseline_vm: Vec::new(),
                reference_mse: vec![("f1", 0.1244), ("f2", 0.2476), ("g11", 0.1876), ("g21", 1.4796)],
            },
            CaseId::Example1S2 => {
                config.fit.pf = 3;
                config.fit.pg = 3;
                BenchCase {
                    id,
                    model_text: models::EXAMPLE1,
                    config,
                    sweep: (1..=3).collect(),
                    surface_v: 1,
                    reference_vm: refs(&[1, 2, 3], &[0.3009, 0.5285, 0.7137]),
                    baseline_vm: Vec::new(),
                    reference_mse: vec![("f1", 0.0200), ("f2", 0.0369), ("g11", 0.1237), ("g21", 0.1021)],
                }
            }
            CaseId::Example2 => BenchCase {
                id,
                model_text: models::ROBOT2DOF,
                config,
                sweep: (3..=6).collect(),
                surface_v: 3,
                reference_vm: refs(&[3, 4, 5, 6], &[0.8998, 0.9810, 0.9982, 0.9996]),
                baseline_vm: refs(&[3, 4, 5, 6], &[0.6960, 0.8090, 0.8684, 0.9210]),
                reference_mse: Vec::new(),
            },
        }
    }

    pub fn system(&self) -> Result<NlSystem> {
        self.model_text.parse()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.samples {
            self.config.samples = v;
        }
        if let Some(v) = o.seed {
            self.config.seed = v;
        }
        if let Some(v) = o.gamma {
            self.config.fit.gamma = v;
        }
        if let Some(v) = o.strategy {
            self.config.strategy = v;
        }
        if let Some(v) = o.margin {
            self.config.margin = v;
        }
        if let Some(v) = &o.order {
            self.config.order = Some(v.clone());
        }
        if let Some(v) = &o.sched {
            self.sweep = v.clone();
            if !v.contains(&self.surface_v) {
                self.surface_v = v[0];
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub gamma: Option<GammaSpec>,
    pub strategy: Option<SamplingStrategy>,
    pub margin: Option<f64>,
    pub order: Option<Vec<usize>>,
    pub sched: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmRow {
    pub v: usize,
    pub scheduling: usize,
    pub vm: f64,
    pub reference: Option<f64>,
    pub baseline: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub v: usize,
    pub function: String,
    pub mse: f64,
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub case: CaseId,
    pub rank: usize,
    pub vm: Vec<VmRow>,
    pub mse: Vec<MseRow>,
    /// Points of a fresh sample set where some scheduling variable left its
    /// bounds, per `v`.
    pub bound_violations: Vec<(usize, usize, usize)>,
    pub files: Vec<PathBuf>,
}

impl MetricsReport {
    pub fn mse_at(&self, v: usize, function: &str) -> Option<f64> {
        self.mse
            .iter()
            .find(|r| r.v == v && r.function == function)
            .map(|r| r.mse)
    }
}

/// Uniform 51 x 51 grid on two-state boxes; otherwise a Latin hypercube of
/// the same size drawn with `seed + 1`.
pub fn evaluation_grid(sys: &NlSystem, seed: u64) -> Result<SampleSet> {
    if sys.n == 2 {
        sample_domain(&sys.domain, SamplingStrategy::Grid, 51 * 51, seed)
    } else {
        sample_domain(&sys.domain, SamplingStrategy::LatinHypercube, 51 * 51, seed + 1)
    }
}

/// `(name, true, lpv)` for every function, comparing `f_i(x)` with
/// `row_i(x) . x` and `g_ij(x)` with `b_ij(x)` at the true θ.
pub fn function_errors(sys: &NlSystem, model: &LpvModel, x: &[f64]) -> Result<Vec<(String, f64, f64)>> {
    let (f, g) = sys.eval(x)?;
    let theta = model.theta(x)?;
    let (a, b, c, d) = model.matrices(x, &theta)?;
    let mut out = Vec::new();
    for i in 0..sys.rows() {
        let row = if i < sys.n { a.row(i) } else { c.row(i - sys.n) };
        let lpv: f64 = row.iter().zip(x).map(|(r, v)| r * v).sum();
        out.push((NlSystem::f_name(i), f[i], lpv));
    }
    for i in 0..sys.rows() {
        for j in 0..sys.m {
            let lpv = if i < sys.n { b[(i, j)] } else { d[(i - sys.n, j)] };
            out.push((NlSystem::g_name(i, j), g[i][j], lpv));
        }
    }
    Ok(out)
}

/// Mean squared `c` over the grid, per function.
pub fn mse_functions(sys: &NlSystem, model: &LpvModel, grid: &SampleSet) -> Result<Vec<(String, f64)>> {
    let mut acc: Vec<(String, f64)> = Vec::new();
    for x in grid.iter() {
        let errs = function_errors(sys, model, x)?;
        if acc.is_empty() {
            acc = errs.iter().map(|(n, _, _)| (n.clone(), 0.0)).collect();
        }
        for (slot, (_, t, l)) in acc.iter_mut().zip(errs) {
            slot.1 += (t - l).powi(2);
        }
    }
    let count = grid.len().max(1) as f64;
    Ok(acc.into_iter().map(|(n, s)| (n, s / count)).collect())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// One table per function over a 51 x 51 grid in `(x1, x2)`, other states
/// held at 0. Columns `x1,x2,true,lpv,error`.
fn surfaces(sys: &NlSystem, model: &LpvModel) -> Result<Vec<(String, String)>> {
    let (d1, d2) = (sys.domain[0], sys.domain[1]);
    let mut tables: Vec<(String, String)> = Vec::new();
    for i in 0..51 {
        for j in 0..51 {
            let mut x = vec![0.0; sys.n];
            x[0] = if i == 50 { d1.hi } else { d1.lo + d1.width() * i as f64 / 50.0 };
            x[1] = if j == 50 { d2.hi } else { d2.lo + d2.width() * j as f64 / 50.0 };
            let errs = function_errors(sys, model, &x)?;
            if tables.is_empty() {
                tables = errs
                    .iter()
                    .map(|(n, _, _)| (format!("surface_{n}.csv"), String::from("x1,x2,true,lpv,error\n")))
                    .collect();
            }
            for ((_, out), (_, t, l)) in tables.iter_mut().zip(errs) {
                let _ = writeln!(out, "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", x[0], x[1], t, l, t - l);
            }
        }
    }
    Ok(tables)
}

/// Runs the embedding once and evaluates every `v` of the sweep. Writes the
/// output tree under `out_dir` when given.
pub fn run_case(case: &BenchCase, out_dir: Option<&Path>) -> Result<MetricsReport> {
    let sys = case.system()?;
    let emb = embed(&sys, &case.config)?;
    evaluate(case, &sys, &emb, out_dir)
}

fn evaluate(case: &BenchCase, sys: &NlSystem, emb: &Embedding, out_dir: Option<&Path>) -> Result<MetricsReport> {
    let seed = case.config.seed;
    let grid = evaluation_grid(sys, seed)?;
    let validation = sample_domain(&sys.domain, SamplingStrategy::UniformRandom, 2000, seed + 2)?;
    let mut log = String::new();
    let _ = writeln!(log, "case {}", case.id);
    let c = &case.config;
    let _ = writeln!(
        log,
        "config pf={} pg={} gamma={} samples={} strategy={} seed={} order={:?} margin={}",
        c.fit.pf, c.fit.pg, c.fit.gamma, c.samples, c.strategy, c.seed, emb.order, c.margin
    );
    let _ = writeln!(log, "fits function,gamma,cost,sse,l1,iterations,converged,max_kkt_violation");
    for (name, r) in emb.approx.reports() {
        let _ = writeln!(
            log,
            "fit {name},{:e},{:e},{:e},{:e},{},{},{:e}",
            r.gamma, r.cost, r.sse, r.l1, r.iterations, r.converged, r.max_kkt_violation
        );
    }
    let _ = writeln!(
        log,
        "residual matrix {} x {}, numerical rank {}",
        emb.pi.data.nrows(),
        emb.pi.data.ncols(),
        emb.pca.rank
    );
    if !case.baseline_vm.is_empty() {
        let _ = writeln!(log, "vm.csv baseline column: published baseline, not computed");
    }

    let mut report = MetricsReport {
        case: case.id,
        rank: emb.pca.rank,
        vm: Vec::new(),
        mse: Vec::new(),
        bound_violations: Vec::new(),
        files: Vec::new(),
    };
    let find = |list: &[Reference], v: usize| list.iter().find(|r| r.v == v).map(|r| r.value);
    let mut files: Vec<(String, String)> = Vec::new();

    for &v in &case.sweep {
        let model = emb.lpv(Selection::Count(v))?;
        report.vm.push(VmRow {
            v,
            scheduling: model.scheduling.len(),
            vm: model.vm(),
            reference: find(&case.reference_vm, v),
            baseline: find(&case.baseline_vm, v),
        });
        for (function, mse) in mse_functions(sys, &model, &grid)? {
            let reference = (v == case.surface_v)
                .then(|| case.reference_mse.iter().find(|(f, _)| *f == function).map(|r| r.1))
                .flatten();
            report.mse.push(MseRow {
                v,
                function,
                mse,
                reference,
            });
        }
        let violations = model.bound_violations(&validation)?;
        report.bound_violations.push((v, violations, validation.len()));
        let names: Vec<String> = model
            .scheduling
            .iter()
            .map(|s| format!("{}[{:.6e},{:.6e}]", s.name(), s.lo, s.hi))
            .collect();
        let _ = writeln!(log, "v={v} vm={:.6} scheduling {}", model.vm(), names.join(" "));
        let _ = writeln!(
            log,
            "v={v} bounds validation (uniform, seed {}): {violations} of {} points outside",
            seed + 2,
            validation.len()
        );
        if out_dir.is_some() {
            files.push((format!("model_v{v}.json"), to_json(&model)?));
        }
        if v == case.surface_v && out_dir.is_some() {
            files.extend(surfaces(sys, &model)?);
        }
    }
    info!("{}: rank {}, vm {:?}", case.id, report.rank, report.vm.iter().map(|r| r.vm).collect::<Vec<_>>());

    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        let mut vm = String::from("v,scheduling_count,vm,reference_vm,baseline_reference_vm\n");
        for r in &report.vm {
            let _ = writeln!(vm, "{},{},{:.17e},{},{}", r.v, r.scheduling, r.vm, opt(r.reference), opt(r.baseline));
        }
        let mut mse = String::from("v,function,mse,reference_mse\n");
        for r in &report.mse {
            let _ = writeln!(mse, "{},{},{:.17e},{}", r.v, r.function, r.mse, opt(r.reference));
        }
        files.push(("vm.csv".into(), vm));
        files.push(("mse.csv".into(), mse));
        files.push(("run.log".into(), log));
        for (name, text) in files {
            let path = dir.join(name);
            std::fs::write(&path, text)?;
            report.files.push(path);
        }
    }
    Ok(report)
}

/// `out/<case>` under `root`.
pub fn case_dir(root: &Path, id: CaseId) -> PathBuf {
    root.join(id.to_string())
}

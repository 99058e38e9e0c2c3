//! `lpvembed`: embed a control-affine system into an LPV model, evaluate and
//! inspect exported models, and run the bundled reproduction cases.

mod config;

use std::fmt::Write as _;
use std::io::{ErrorKind, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};
use log::{info, warn};
use lpv_bench::{case_dir, run_case, BenchCase, CaseId, Overrides};
use lpv_core::nalgebra::DMatrix;
use lpv_core::{
    embed, export_model, import_model, load_system, vm_table_csv, Error, GammaSpec, SamplingStrategy,
};

use config::{parse_list, zero_based, RunConfig};

// aliases keep clap from treating the parsed lists as repeated flags
type Values = Vec<f64>;
type Indices = Vec<usize>;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unreadable inputs, unknown case ids: exit code 2.
    Usage(String),
    /// A pipeline stage failed: exit code 1.
    Stage(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match &e {
            Error::Io(io) if io.kind() == ErrorKind::NotFound => CliError::Usage(e.to_string()),
            Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Stage(e),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Stage(Error::Io(e))
    }
}

#[derive(Parser)]
#[command(name = "lpvembed", version, about = "LPV embedding of control-affine nonlinear systems")]
struct Cli {
    /// More log output on stderr (-v info, -vv debug).
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an LPV model from a system file and export it.
    Embed(EmbedArgs),
    /// Evaluate an exported model at one point and compare with the system.
    Eval(EvalArgs),
    /// Run one of the bundled reproduction cases.
    Bench(BenchArgs),
    /// Print a summary of an exported model.
    Inspect(InspectArgs),
}

#[derive(Args)]
struct EmbedArgs {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// System description (.nlsys).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Polynomial degree for F.
    #[arg(long)]
    pf: Option<u32>,
    /// Polynomial degree for G.
    #[arg(long)]
    pg: Option<u32>,
    /// l1 weight: `auto`, `auto*<k>` or a number.
    #[arg(long)]
    gamma: Option<String>,
    /// Number of sample points.
    #[arg(long)]
    samples: Option<usize>,
    /// grid, latin-hypercube or uniform-random.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of θ components.
    #[arg(long, conflicts_with = "vm_target")]
    sched: Option<usize>,
    /// Smallest number of θ components reaching this variation fraction.
    #[arg(long)]
    vm_target: Option<f64>,
    /// Factorization ordering as one-based state indices, e.g. `2,1`.
    #[arg(long, value_parser = parse_list::<usize>)]
    order: Option<Indices>,
    /// Relative inflation of the scheduling bounds.
    #[arg(long)]
    margin: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl EmbedArgs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            model: self.model.clone(),
            pf: self.pf,
            pg: self.pg,
            gamma: self.gamma.clone(),
            samples: self.samples,
            strategy: self.strategy.clone(),
            seed: self.seed,
            sched: self.sched,
            vm_target: self.vm_target,
            order: self.order.clone(),
            margin: self.margin,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    /// Exported model (.json).
    #[arg(long)]
    model: PathBuf,
    /// State as comma separated values.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_list::<f64>)]
    x: Values,
    /// Input as comma separated values; zero when omitted.
    #[arg(long, allow_hyphen_values = true, value_parser = parse_list::<f64>)]
    u: Option<Values>,
}

#[derive(Args)]
struct BenchArgs {
    /// example1-s1, example1-s2 or example2.
    case: String,
    /// Output root; results go to `<out>/<case>`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// θ counts to sweep, e.g. `3,4,5,6`.
    #[arg(long, value_parser = parse_list::<usize>)]
    sched: Option<Indices>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = |s: &str| s.parse::<GammaSpec>().map_err(|e| e.to_string()))]
    gamma: Option<GammaSpec>,
    #[arg(long, value_parser = |s: &str| s.parse::<SamplingStrategy>().map_err(|e| e.to_string()))]
    strategy: Option<SamplingStrategy>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, value_parser = parse_list::<usize>)]
    order: Option<Indices>,
}

#[derive(Args)]
struct InspectArgs {
    /// Exported model (.json).
    model: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Embed(a) => cmd_embed(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::Inspect(a) => cmd_inspect(&a),
    };
    match result {
        Ok(text) => {
            // a closed pipe (e.g. `| head`) is not an error
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            ExitCode::SUCCESS
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Stage(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("file not found: {}", path.display())))
    }
}

fn cmd_embed(args: &EmbedArgs) -> Result<String, CliError> {
    let mut out = String::new();
    let file = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let run = file.overlay(args.flags());
    let cfg = run.resolve()?;
    require_file(&cfg.model)?;
    let sys = load_system(&cfg.model)?;
    let emb = embed(&sys, &cfg.embed)?;
    let model = emb.lpv(cfg.selection)?;

    std::fs::create_dir_all(&cfg.out)?;
    let model_path = cfg.out.join("model.json");
    export_model(&model, &model_path)?;
    std::fs::write(cfg.out.join("vm.csv"), vm_table_csv(&emb.pca.sigma))?;
    let effective = RunConfig {
        sched: Some(model.v()),
        vm_target: None,
        ..run
    };
    let mut log = String::from("# effective configuration\n");
    log.push_str(&toml::to_string(&effective).map_err(|e| CliError::Stage(Error::Config(e.to_string())))?);
    let _ = writeln!(log, "\n# fits: function,gamma,cost,sse,l1,iterations,converged,max_kkt_violation");
    for (name, r) in emb.approx.reports() {
        if !r.converged {
            warn!("fit {name} stopped at the iteration cap");
        }
        let _ = writeln!(
            log,
            "# {name},{:e},{:e},{:e},{:e},{},{},{:e}",
            r.gamma, r.cost, r.sse, r.l1, r.iterations, r.converged, r.max_kkt_violation
        );
    }
    let _ = writeln!(log, "# numerical rank {}, v = {}, vm = {:.6}", emb.pca.rank, model.v(), model.vm());
    std::fs::write(cfg.out.join("run.log"), log)?;
    info!("wrote {}", model_path.display());

    let _ = writeln!(out, "v = {} of rank {}, vm = {:.4}", model.v(), emb.pca.rank, model.vm());
    let _ = writeln!(out, "scheduling variables ({}):", model.scheduling.len());
    for s in &model.scheduling {
        let _ = writeln!(out, "  {:<8} [{:.6}, {:.6}]", s.name(), s.lo, s.hi);
    }
    let _ = writeln!(out, "model written to {}", model_path.display());
    Ok(out)
}

fn print_matrix(out: &mut String, name: &str, m: &DMatrix<f64>) {
    let _ = writeln!(out, "{name} ({} x {}):", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>20.12e}")).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
}

fn cmd_eval(args: &EvalArgs) -> Result<String, CliError> {
    let mut out = String::new();
    require_file(&args.model)?;
    let model = import_model(&args.model)?;
    let u = args.u.clone().unwrap_or_else(|| vec![0.0; model.m]);
    if args.x.len() != model.n || u.len() != model.m {
        return Err(CliError::Usage(format!(
            "model expects {} states and {} inputs, got {} and {}",
            model.n,
            model.m,
            args.x.len(),
            u.len()
        )));
    }
    let ev = model.eval(&args.x, &u)?;
    let (xdot, y) = model.system.dynamics(&args.x, &u)?;

    let _ = writeln!(out, "theta = {:?}", ev.theta);
    print_matrix(&mut out, "A", &ev.a);
    print_matrix(&mut out, "B", &ev.b);
    print_matrix(&mut out, "C", &ev.c);
    print_matrix(&mut out, "D", &ev.d);
    let _ = writeln!(out, "{:<8} {:>20} {:>20} {:>12}", "output", "lpv", "true", "error");
    let rows = ev
        .xdot
        .iter()
        .zip(&xdot)
        .enumerate()
        .map(|(i, p)| (format!("xdot{}", i + 1), p))
        .chain(ev.y.iter().zip(&y).enumerate().map(|(i, p)| (format!("y{}", i + 1), p)));
    for (name, (hat, truth)) in rows {
        let _ = writeln!(out, "{name:<8} {hat:>20.12e} {truth:>20.12e} {:>12.3e}", (hat - truth).abs());
    }
    Ok(out)
}

fn cmd_bench(args: &BenchArgs) -> Result<String, CliError> {
    let mut out = String::new();
    let id: CaseId = args.case.parse()?;
    let mut case = BenchCase::new(id);
    let order = args.order.as_deref().map(zero_based).transpose()?;
    if args.sched.as_ref().is_some_and(|s| s.contains(&0)) {
        return Err(CliError::Usage("sched entries must be at least 1".into()));
    }
    case.apply(&Overrides {
        samples: args.samples,
        seed: args.seed,
        gamma: args.gamma,
        strategy: args.strategy,
        margin: args.margin,
        order,
        sched: args.sched.clone(),
    });
    let dir = case_dir(&args.out, id);
    let report = run_case(&case, Some(&dir))?;
    let _ = writeln!(out, "{id}: numerical rank {}", report.rank);
    let _ = writeln!(out, "{:>3} {:>11} {:>9} {:>9}", "v", "scheduling", "vm", "ref");
    for r in &report.vm {
        let reference = r.reference.map_or("-".into(), |v| format!("{v:.4}"));
        let _ = writeln!(out, "{:>3} {:>11} {:>9.4} {:>9}", r.v, r.scheduling, r.vm, reference);
    }
    let _ = writeln!(out, "results written to {}", dir.display());
    Ok(out)
}

fn cmd_inspect(args: &InspectArgs) -> Result<String, CliError> {
    let mut out = String::new();
    require_file(&args.model)?;
    let model = import_model(&args.model)?;
    let _ = write!(out, "{model}");
    let p = &model.provenance;
    let order: Vec<String> = p.order.iter().map(|k| (k + 1).to_string()).collect();
    let _ = writeln!(out, "ordering {}, bounds margin {}", order.join(","), p.margin);
    Ok(out)
}

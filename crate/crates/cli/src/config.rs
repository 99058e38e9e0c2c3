//! Run configuration shared by the config file and the `embed` flags.

use std::path::{Path, PathBuf};

use lpv_core::{EmbedConfig, GammaSpec, SamplingStrategy, Selection};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Every field is optional so that a file and the flags can be layered.
/// `order` is one-based, as on the command line.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub model: Option<PathBuf>,
    pub pf: Option<u32>,
    pub pg: Option<u32>,
    pub gamma: Option<String>,
    pub samples: Option<usize>,
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub sched: Option<usize>,
    pub vm_target: Option<f64>,
    pub order: Option<Vec<usize>>,
    pub margin: Option<f64>,
    pub out: Option<PathBuf>,
}

/// Fully resolved configuration of one `embed` run.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub model: PathBuf,
    pub embed: EmbedConfig,
    pub selection: Selection,
    pub out: PathBuf,
}

pub const DEFAULT_VM_TARGET: f64 = 0.99;

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// Fields set in `over` win.
    pub fn overlay(self, over: RunConfig) -> RunConfig {
        RunConfig {
            model: over.model.or(self.model),
            pf: over.pf.or(self.pf),
            pg: over.pg.or(self.pg),
            gamma: over.gamma.or(self.gamma),
            samples: over.samples.or(self.samples),
            strategy: over.strategy.or(self.strategy),
            seed: over.seed.or(self.seed),
            // an explicit count on the command line replaces a file target and vice versa
            sched: if over.vm_target.is_some() { over.sched } else { over.sched.or(self.sched) },
            vm_target: if over.sched.is_some() { over.vm_target } else { over.vm_target.or(self.vm_target) },
            order: over.order.or(self.order),
            margin: over.margin.or(self.margin),
            out: over.out.or(self.out),
        }
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let model = self
            .model
            .clone()
            .ok_or_else(|| CliError::Usage("no model given (--model or `model` in the config file)".into()))?;
        let mut embed = EmbedConfig::default();
        if let Some(v) = self.pf {
            embed.fit.pf = v;
        }
        if let Some(v) = self.pg {
            embed.fit.pg = v;
        }
        if let Some(v) = &self.gamma {
            embed.fit.gamma = v.parse::<GammaSpec>().map_err(usage)?;
        }
        if let Some(v) = self.samples {
            embed.samples = v;
        }
        if let Some(v) = &self.strategy {
            embed.strategy = v.parse::<SamplingStrategy>().map_err(usage)?;
        }
        if let Some(v) = self.seed {
            embed.seed = v;
        }
        if let Some(v) = self.margin {
            embed.margin = v;
        }
        if let Some(order) = &self.order {
            embed.order = Some(zero_based(order)?);
        }
        let selection = match (self.sched, self.vm_target) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either sched or vm-target, not both".into())),
            (Some(v), None) if v >= 1 => Selection::Count(v),
            (Some(_), None) => return Err(CliError::Usage("sched must be at least 1".into())),
            (None, Some(t)) if t > 0.0 && t <= 1.0 => Selection::VmTarget(t),
            (None, Some(t)) => return Err(CliError::Usage(format!("vm-target {t} outside (0, 1]"))),
            (None, None) => Selection::VmTarget(DEFAULT_VM_TARGET),
        };
        Ok(Resolved {
            model,
            embed,
            selection,
            out: self.out.clone().unwrap_or_else(|| PathBuf::from("out")),
        })
    }
}

fn usage(e: lpv_core::Error) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn zero_based(order: &[usize]) -> Result<Vec<usize>, CliError> {
    order
        .iter()
        .map(|&k| {
            k.checked_sub(1)
                .ok_or_else(|| CliError::Usage("order entries are one-based state indices".into()))
        })
        .collect()
}

/// Parses `1, 2,3` style lists.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|_| format!("`{}` is not a valid entry", t.trim())))
        .collect()
}

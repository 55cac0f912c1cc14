//! Run configuration: strict JSON config file plus command-line overrides.
//!
//! Unknown keys are rejected so a typo in a config never silently changes a
//! run. The merged configuration is validated before dispatch; every error
//! names the offending field.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::Deserialize;

use rateopt_core::ensemble::{
    ChannelParam, DegreeDistribution, DistributionKind, DistributionSpec,
};
use rateopt_core::sdpcore::SolveOptions;
use rateopt_core::sosrep;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
#[clap(rename_all = "lowercase")]
pub enum Command {
    Optimize,
    Verify,
    Threshold,
    Baseline,
    Sweep,
}

impl Command {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "optimize" => Ok(Command::Optimize),
            "verify" => Ok(Command::Verify),
            "threshold" => Ok(Command::Threshold),
            "baseline" => Ok(Command::Baseline),
            "sweep" => Ok(Command::Sweep),
            other => Err(CliError::Config(format!("unknown command {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<String>,
    pub rho: Option<DistributionSpec>,
    pub lambda: Option<DistributionSpec>,
    pub epsilon: Option<f64>,
    pub dv_max: Option<u32>,
    pub solver: Option<SolverConfig>,
    pub grid: Option<GridConfig>,
    pub sweep: Option<Vec<SweepEntry>>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub tol_feas: Option<f64>,
    pub tol_gap: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: Option<usize>,
    pub n_values: Option<Vec<usize>>,
    pub scheme: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub rho: DistributionSpec,
    pub epsilon: f64,
}

/// Command-line overrides collected by clap; every field beats the config
/// file when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub command: Option<Command>,
    pub rho: Option<String>,
    pub lambda: Option<String>,
    pub epsilon: Option<f64>,
    pub dv_max: Option<u32>,
    pub output: Option<PathBuf>,
    pub format: Option<String>,
    pub grid_n: Option<usize>,
    pub grid_scheme: Option<String>,
    pub workers: Option<usize>,
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub rho: Option<DegreeDistribution>,
    pub lambda: Option<DegreeDistribution>,
    pub epsilon: Option<ChannelParam>,
    pub dv_max: u32,
    pub solve_options: SolveOptions,
    pub grid_n: usize,
    pub grid_n_values: Option<Vec<usize>>,
    pub grid_scheme: GridSchemeChoice,
    pub sweep: Vec<(DegreeDistribution, ChannelParam)>,
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSchemeChoice {
    Uniform,
    Clustered,
}

fn parse_format(s: &str) -> Result<OutputFormat, CliError> {
    match s {
        "json" => Ok(OutputFormat::Json),
        "csv" => Ok(OutputFormat::Csv),
        other => Err(CliError::Config(format!(
            "field `format` must be \"json\" or \"csv\", got {other:?}"
        ))),
    }
}

fn parse_scheme(s: &str) -> Result<GridSchemeChoice, CliError> {
    match s {
        "uniform" => Ok(GridSchemeChoice::Uniform),
        "clustered" => Ok(GridSchemeChoice::Clustered),
        other => Err(CliError::Config(format!(
            "field `grid.scheme` must be \"uniform\" or \"clustered\", got {other:?}"
        ))),
    }
}

impl RunConfig {
    /// Merges the config file (if any) with command-line overrides and
    /// validates everything needed for dispatch.
    pub fn resolve(file: Option<FileConfig>, over: &Overrides) -> Result<Self, CliError> {
        let file = file.unwrap_or_default();

        let command = match (over.command, file.command.as_deref()) {
            (Some(c), _) => c,
            (None, Some(s)) => Command::parse(s)?,
            (None, None) => {
                return Err(CliError::Config(
                    "missing field `command` (config key or positional argument)".into(),
                ))
            }
        };

        let rho_spec = over
            .rho
            .as_deref()
            .map(DistributionSpec::parse)
            .or(file.rho);
        let rho = rho_spec
            .map(|s| {
                s.into_distribution(DistributionKind::Check)
                    .map_err(|e| CliError::Config(format!("field `rho`: {e}")))
            })
            .transpose()?;
        let lambda_spec = over
            .lambda
            .as_deref()
            .map(DistributionSpec::parse)
            .or(file.lambda);
        let lambda = lambda_spec
            .map(|s| {
                s.into_distribution(DistributionKind::Variable)
                    .map_err(|e| CliError::Config(format!("field `lambda`: {e}")))
            })
            .transpose()?;
        let epsilon = over
            .epsilon
            .or(file.epsilon)
            .map(|e| ChannelParam::new(e).map_err(|e| CliError::Config(format!("field `epsilon`: {e}"))))
            .transpose()?;

        let dv_max = over.dv_max.or(file.dv_max).unwrap_or(7);
        if dv_max < 2 {
            return Err(CliError::Config(format!(
                "field `dv_max` must be at least 2, got {dv_max}"
            )));
        }

        let defaults = sosrep::design_solve_options();
        let solver = file.solver.unwrap_or_default();
        let solve_options = SolveOptions {
            tol_feas: solver.tol_feas.unwrap_or(defaults.tol_feas),
            tol_gap: solver.tol_gap.unwrap_or(defaults.tol_gap),
            max_iter: solver.max_iter.unwrap_or(defaults.max_iter),
        };
        let tol_valid = |t: f64| t.is_finite() && t > 0.0;
        if !tol_valid(solve_options.tol_feas) || !tol_valid(solve_options.tol_gap) {
            return Err(CliError::Config(
                "field `solver`: tolerances must be positive".into(),
            ));
        }

        let grid = file.grid.unwrap_or_default();
        let grid_n = over.grid_n.or(grid.n).unwrap_or(100);
        if grid_n == 0 {
            return Err(CliError::Config("field `grid.n` must be at least 1".into()));
        }
        let grid_scheme = match over.grid_scheme.as_deref().or(grid.scheme.as_deref()) {
            Some(s) => parse_scheme(s)?,
            None => GridSchemeChoice::Uniform,
        };
        if let Some(values) = &grid.n_values {
            if values.is_empty() {
                return Err(CliError::Config(
                    "field `grid.n_values` must not be empty".into(),
                ));
            }
            if values.contains(&0) {
                return Err(CliError::Config(
                    "field `grid.n_values` entries must be at least 1".into(),
                ));
            }
        }

        let mut sweep = Vec::new();
        if let Some(entries) = file.sweep {
            for (idx, entry) in entries.into_iter().enumerate() {
                let rho = entry
                    .rho
                    .into_distribution(DistributionKind::Check)
                    .map_err(|e| CliError::Config(format!("field `sweep[{idx}].rho`: {e}")))?;
                let eps = ChannelParam::new(entry.epsilon).map_err(|e| {
                    CliError::Config(format!("field `sweep[{idx}].epsilon`: {e}"))
                })?;
                sweep.push((rho, eps));
            }
        }

        let workers = over.workers.or(file.workers).unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });
        if workers == 0 {
            return Err(CliError::Config("field `workers` must be at least 1".into()));
        }

        let format = match over.format.as_deref().or(file.format.as_deref()) {
            Some(s) => Some(parse_format(s)?),
            None => None,
        };

        Ok(RunConfig {
            command,
            rho,
            lambda,
            epsilon,
            dv_max,
            solve_options,
            grid_n,
            grid_n_values: grid.n_values,
            grid_scheme,
            sweep,
            workers,
            output: over.output.clone().or(file.output),
            format,
        })
    }

    pub fn require_rho(&self) -> Result<&DegreeDistribution, CliError> {
        self.rho
            .as_ref()
            .ok_or_else(|| CliError::Config("missing field `rho`".into()))
    }

    pub fn require_lambda(&self) -> Result<&DegreeDistribution, CliError> {
        self.lambda
            .as_ref()
            .ok_or_else(|| CliError::Config("missing field `lambda`".into()))
    }

    pub fn require_epsilon(&self) -> Result<ChannelParam, CliError> {
        self.epsilon
            .ok_or_else(|| CliError::Config("missing field `epsilon`".into()))
    }
}

/// Loads and strictly parses a JSON config file.
pub fn load_file(path: &std::path::Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Rounds a map of degree → fraction to four decimals for display blocks.
pub fn display_lambda(dd: &DegreeDistribution) -> BTreeMap<String, f64> {
    dd.coefficients()
        .filter(|(_, c)| *c != 0.0)
        .map(|(d, c)| (d.to_string(), round4(c)))
        .collect()
}

pub fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

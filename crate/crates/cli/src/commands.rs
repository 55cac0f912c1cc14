//! The five user commands, each producing a rendered result document and an
//! exit code. Result files are deterministic: no timestamps, stable field
//! order, full float precision plus a four-decimal display block.

use std::collections::BTreeMap;

use serde::Serialize;

use rateopt_core::baseline_lp::{self, DiscretizationGrid};
use rateopt_core::desim::{self, VerificationReport};
use rateopt_core::ensemble::{ChannelParam, DegreeDistribution, DesignResult};
use rateopt_core::sdpcore::{self, SdpSolution, SolveStatus};
use rateopt_core::sosrep::{self, CertificateSummary, SosError};

use crate::config::{display_lambda, round4, Command, GridSchemeChoice, OutputFormat, RunConfig};
use crate::CliError;

/// Rendered output plus the process exit code (0 ok, 3 verification failed).
pub struct CmdOutcome {
    pub rendered: String,
    pub exit_code: i32,
}

#[derive(Serialize)]
struct SolverEcho {
    status: SolveStatus,
    iterations: usize,
    objective_value: f64,
    primal_residual: f64,
    dual_gap_estimate: f64,
}

impl From<&SdpSolution> for SolverEcho {
    fn from(s: &SdpSolution) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            objective_value: s.objective_value,
            primal_residual: s.primal_residual,
            dual_gap_estimate: s.dual_gap_estimate,
        }
    }
}

#[derive(Serialize)]
struct DisplayBlock {
    lambda: BTreeMap<String, f64>,
    epsilon: f64,
    threshold: f64,
    rate: f64,
    capacity: f64,
    delta: f64,
}

impl DisplayBlock {
    fn for_design(design: &DesignResult) -> Self {
        Self {
            lambda: display_lambda(&design.lambda),
            epsilon: round4(design.epsilon.epsilon()),
            threshold: round4(design.threshold),
            rate: round4(design.rate),
            capacity: round4(design.capacity),
            delta: round4(design.delta),
        }
    }
}

#[derive(Serialize)]
struct OptimizeDocument<'a> {
    command: &'static str,
    input: InputEcho<'a>,
    solver: SolverEcho,
    design: &'a DesignResult,
    certificate: CertificateSummary,
    verification: &'a VerificationReport,
    display: DisplayBlock,
}

#[derive(Serialize)]
struct InputEcho<'a> {
    rho: &'a DegreeDistribution,
    epsilon: f64,
    dv_max: u32,
}

fn render_json<T: Serialize>(doc: &T) -> Result<String, CliError> {
    let mut text = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::Internal(format!("serialization failed: {e}")))?;
    text.push('\n');
    Ok(text)
}

fn expect_json_format(config: &RunConfig) -> Result<(), CliError> {
    if config.format == Some(OutputFormat::Csv) {
        return Err(CliError::Config(format!(
            "field `format`: {:?} emits a json result file",
            config.command
        )));
    }
    Ok(())
}

fn expect_csv_format(config: &RunConfig) -> Result<(), CliError> {
    if config.format == Some(OutputFormat::Json) {
        return Err(CliError::Config(format!(
            "field `format`: {:?} emits a csv table",
            config.command
        )));
    }
    Ok(())
}

fn map_sos_error(e: SosError) -> CliError {
    match e {
        SosError::NoDesign { status } => CliError::Solver(format!("solver returned {status:?}")),
        SosError::BadInput(msg) => CliError::Config(msg),
        other => CliError::Solver(other.to_string()),
    }
}

/// Full optimize pipeline for one (ρ, ε) instance; shared by `optimize` and
/// the sweep rows.
fn optimize_instance(
    rho: &DegreeDistribution,
    epsilon: ChannelParam,
    config: &RunConfig,
) -> Result<(SdpSolution, DesignResult, CertificateSummary, VerificationReport), CliError> {
    let problem = sosrep::build_rate_sdp(rho, epsilon, config.dv_max).map_err(map_sos_error)?;
    let solution = sdpcore::solve(&problem, &config.solve_options)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let (design, certificate) =
        sosrep::extract_design(&problem, &solution, rho, epsilon).map_err(map_sos_error)?;
    let verification = desim::verify_design(&design, 100_000)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let design = design.with_threshold(verification.threshold);
    Ok((solution, design, certificate.summary(), verification))
}

pub fn cmd_optimize(config: &RunConfig) -> Result<CmdOutcome, CliError> {
    expect_json_format(config)?;
    let rho = config.require_rho()?;
    let epsilon = config.require_epsilon()?;
    let (solution, design, certificate, verification) =
        optimize_instance(rho, epsilon, config)?;
    let doc = OptimizeDocument {
        command: "optimize",
        input: InputEcho {
            rho,
            epsilon: epsilon.epsilon(),
            dv_max: config.dv_max,
        },
        solver: SolverEcho::from(&solution),
        design: &design,
        certificate,
        verification: &verification,
        display: DisplayBlock::for_design(&design),
    };
    Ok(CmdOutcome {
        rendered: render_json(&doc)?,
        exit_code: if verification.pass { 0 } else { 3 },
    })
}

#[derive(Serialize)]
struct VerifyDocument<'a> {
    command: &'static str,
    design: &'a DesignResult,
    verification: &'a VerificationReport,
    display: DisplayBlock,
}

pub fn cmd_verify(config: &RunConfig) -> Result<CmdOutcome, CliError> {
    expect_json_format(config)?;
    let lambda = config.require_lambda()?;
    let rho = config.require_rho()?;
    let epsilon = config.require_epsilon()?;
    let design = desim::design_from_parts(lambda.clone(), rho.clone(), epsilon)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let verification =
        desim::verify_design(&design, 100_000).map_err(|e| CliError::Internal(e.to_string()))?;
    let design = design.with_threshold(verification.threshold);
    let doc = VerifyDocument {
        command: "verify",
        design: &design,
        verification: &verification,
        display: DisplayBlock::for_design(&design),
    };
    Ok(CmdOutcome {
        rendered: render_json(&doc)?,
        exit_code: if verification.pass { 0 } else { 3 },
    })
}

#[derive(Serialize)]
struct ThresholdDocument<'a> {
    command: &'static str,
    lambda: &'a DegreeDistribution,
    rho: &'a DegreeDistribution,
    threshold: f64,
    display: ThresholdDisplay,
}

#[derive(Serialize)]
struct ThresholdDisplay {
    threshold: f64,
}

pub fn cmd_threshold(config: &RunConfig) -> Result<CmdOutcome, CliError> {
    expect_json_format(config)?;
    let lambda = config.require_lambda()?;
    let rho = config.require_rho()?;
    let threshold = desim::bp_threshold(lambda, rho, 1e-5)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let doc = ThresholdDocument {
        command: "threshold",
        lambda,
        rho,
        threshold,
        display: ThresholdDisplay {
            threshold: round4(threshold),
        },
    };
    Ok(CmdOutcome {
        rendered: render_json(&doc)?,
        exit_code: 0,
    })
}

pub fn cmd_baseline(config: &RunConfig) -> Result<CmdOutcome, CliError> {
    expect_csv_format(config)?;
    let rho = config.require_rho()?;
    let epsilon = config.require_epsilon()?;
    let n_values = config
        .grid_n_values
        .clone()
        .unwrap_or_else(|| vec![config.grid_n]);

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["n", "objective", "rate", "max_violation", "lambda_json"])
        .map_err(|e| CliError::Internal(e.to_string()))?;
    for &n in &n_values {
        let grid = match config.grid_scheme {
            GridSchemeChoice::Uniform => DiscretizationGrid::uniform(epsilon, n),
            GridSchemeChoice::Clustered => DiscretizationGrid::clustered(epsilon, n),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        let out = baseline_lp::discretized_optimize(rho, epsilon, config.dv_max, &grid)
            .map_err(|e| CliError::Solver(e.to_string()))?;
        let lambda_json = serde_json::to_string(&out.design.lambda)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        writer
            .write_record([
                n.to_string(),
                out.objective.to_string(),
                out.design.rate.to_string(),
                out.max_violation.to_string(),
                lambda_json,
            ])
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(CmdOutcome {
        rendered: String::from_utf8(bytes).expect("csv output is utf-8"),
        exit_code: 0,
    })
}

/// One sweep row result, computed concurrently.
enum RowOutcome {
    Done(Box<DesignResult>),
    Failed(String),
}

pub fn cmd_sweep(config: &RunConfig) -> Result<CmdOutcome, CliError> {
    expect_csv_format(config)?;
    if config.sweep.is_empty() {
        return Err(CliError::Config("field `sweep` must list (rho, epsilon) pairs".into()));
    }

    let rows: Vec<RowOutcome> = run_rows(config);
    let mut header: Vec<String> = (2..=config.dv_max).map(|d| format!("lambda_{d}")).collect();
    header.extend(
        ["eps", "eps_th", "rate", "capacity", "delta"]
            .iter()
            .map(|s| s.to_string()),
    );

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(&header)
        .map_err(|e| CliError::Internal(e.to_string()))?;
    let mut any_ok = false;
    for (idx, row) in rows.iter().enumerate() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        match row {
            RowOutcome::Done(design) => {
                any_ok = true;
                for d in 2..=config.dv_max {
                    record.push(design.lambda.coefficient(d).to_string());
                }
                record.push(design.epsilon.epsilon().to_string());
                record.push(design.threshold.to_string());
                record.push(design.rate.to_string());
                record.push(design.capacity.to_string());
                record.push(design.delta.to_string());
            }
            RowOutcome::Failed(msg) => {
                eprintln!("sweep row {idx}: {msg}");
                for _ in 0..header.len() {
                    record.push("nan".to_string());
                }
            }
        }
        writer
            .write_record(&record)
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    if !any_ok {
        return Err(CliError::Solver("every sweep row failed".into()));
    }
    Ok(CmdOutcome {
        rendered: String::from_utf8(bytes).expect("csv output is utf-8"),
        exit_code: 0,
    })
}

/// Executes sweep rows on up to `workers` threads; row order is preserved.
fn run_rows(config: &RunConfig) -> Vec<RowOutcome> {
    let jobs = &config.sweep;
    let workers = config.workers.min(jobs.len()).max(1);
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<RowOutcome>> = Vec::new();
    slots.resize_with(jobs.len(), || None);
    let slots = std::sync::Mutex::new(slots);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= jobs.len() {
                    break;
                }
                let (rho, eps) = &jobs[idx];
                let outcome = match optimize_instance(rho, *eps, config) {
                    Ok((_, design, _, _)) => RowOutcome::Done(Box::new(design)),
                    Err(e) => RowOutcome::Failed(e.to_string()),
                };
                slots.lock().expect("sweep mutex")[idx] = Some(outcome);
            });
        }
    });

    slots
        .into_inner()
        .expect("sweep mutex")
        .into_iter()
        .map(|s| s.expect("every row computed"))
        .collect()
}

pub fn dispatch(config: &RunConfig) -> Result<CmdOutcome, CliError> {
    match config.command {
        Command::Optimize => cmd_optimize(config),
        Command::Verify => cmd_verify(config),
        Command::Threshold => cmd_threshold(config),
        Command::Baseline => cmd_baseline(config),
        Command::Sweep => cmd_sweep(config),
    }
}

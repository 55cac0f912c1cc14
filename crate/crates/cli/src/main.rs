use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rateopt_cli::config::{self, Command, Overrides, RunConfig};
use rateopt_cli::{commands, CliError};

/// Degree-distribution rate optimization for LDPC ensembles on the binary
/// erasure channel.
///
/// The run is described by a JSON config file, command-line flags, or both;
/// flags override config fields. Exit codes: 0 success, 1 config error,
/// 2 solver failure, 3 verification failure.
#[derive(Parser)]
#[command(name = "rateopt", version, about)]
struct Args {
    /// Command to run (may also come from the config file).
    #[arg(value_enum)]
    command: Option<Command>,

    /// JSON config file; unknown keys are rejected.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Check distribution: "x^n" shorthand or inline JSON map.
    #[arg(long)]
    rho: Option<String>,

    /// Variable distribution (verify/threshold): "x^n" or inline JSON map.
    #[arg(long)]
    lambda: Option<String>,

    /// Erasure probability in (0, 1).
    #[arg(long = "eps", alias = "epsilon")]
    epsilon: Option<f64>,

    /// Maximum variable-node degree.
    #[arg(long)]
    dv_max: Option<u32>,

    /// Output path; stdout when omitted.
    #[arg(long = "out")]
    output: Option<PathBuf>,

    /// Output format: json (optimize/verify/threshold) or csv (baseline/sweep).
    #[arg(long)]
    format: Option<String>,

    /// Grid size for the baseline command.
    #[arg(long)]
    grid_n: Option<usize>,

    /// Grid scheme: uniform or clustered.
    #[arg(long)]
    grid_scheme: Option<String>,

    /// Worker threads for sweep rows.
    #[arg(long)]
    workers: Option<usize>,
}

fn run(args: Args) -> Result<i32, CliError> {
    let file = args
        .config
        .as_deref()
        .map(config::load_file)
        .transpose()?;
    let overrides = Overrides {
        command: args.command,
        rho: args.rho,
        lambda: args.lambda,
        epsilon: args.epsilon,
        dv_max: args.dv_max,
        output: args.output,
        format: args.format,
        grid_n: args.grid_n,
        grid_scheme: args.grid_scheme,
        workers: args.workers,
    };
    let config = RunConfig::resolve(file, &overrides)?;
    let outcome = commands::dispatch(&config)?;
    match &config.output {
        Some(path) => std::fs::write(path, &outcome.rendered)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{}", outcome.rendered),
    }
    Ok(outcome.exit_code)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("rateopt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

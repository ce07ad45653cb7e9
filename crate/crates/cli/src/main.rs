use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use fd_sense::{config::Mode, io, CliError, RunConfig};

/// Global sensitivity analysis of Bayesian posteriors from score functions.
#[derive(Parser)]
#[command(name = "fd-sense", version, about)]
struct Args {
    /// What to compute: estimate, sensitivity, local, gaussian_demo, or decompose.
    mode: String,

    /// Path to the JSON run configuration.
    #[arg(long)]
    config: PathBuf,

    /// Write the report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Write objective curves (plot-ready, delimiter-separated) here.
    #[arg(long)]
    curves: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fd-sense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), CliError> {
    let mode = Mode::parse(&args.mode)?;
    let config = RunConfig::load(mode, &args.config)?;
    let report = fd_sense::run(&config)?;
    let json = report.to_json()?;
    match &args.out {
        Some(path) => std::fs::write(path, json)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?,
        None => print!("{json}"),
    }
    if let Some(path) = &args.curves {
        io::export_curves(&report.curves, path)?;
    }
    Ok(())
}

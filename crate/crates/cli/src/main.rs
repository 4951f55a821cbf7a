//! Command-line front end: one subcommand per run mode, strict TOML configs,
//! self-describing output directories.
//!
//! Exit codes: 0 clean, 2 configuration error, 3 at least one fit failed to
//! converge (partial outputs are kept), 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dfs_ramsey::pipeline::{self, Mode, RawConfig, RunSummary};
use dfs_ramsey::Error;

#[derive(Parser)]
#[command(
    name = "dfs-ramsey",
    version,
    about = "Two-ion decoherence-free Ramsey spectroscopy: simulation and moment extraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the plan seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory from the config.
    #[arg(long)]
    out: Option<String>,
    /// Also write plot-ready x/y/sigma text files.
    #[arg(long)]
    emit_plot_data: bool,
}

#[derive(Args)]
struct FitOnlyArgs {
    /// Optional configuration (fit window, inputs); CSVs can come purely
    /// from the command line.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<String>,
    /// Parity-scan CSVs (tau_s, parity, sigma, shots) to fit.
    #[arg(value_name = "CSV")]
    inputs: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and fit both entangled states at one operating point.
    ParityScan(RunArgs),
    /// Scan the field angle and fit the angular shift model.
    AngleScan(RunArgs),
    /// Scan the applied gradient, fit the line, and extract the moment.
    GradientScan(RunArgs),
    /// Convert a given slope directly into the quadrupole moment.
    Extract(RunArgs),
    /// Fit externally supplied parity CSVs; never simulates.
    FitOnly(FitOnlyArgs),
}

fn execute(command: Command) -> Result<RunSummary, Error> {
    let (mode, config_path, seed, out, emit_plot_data, inputs) = match command {
        Command::ParityScan(a) => (
            Mode::ParityScan,
            Some(a.config),
            a.seed,
            a.out,
            a.emit_plot_data,
            vec![],
        ),
        Command::AngleScan(a) => (
            Mode::AngleScan,
            Some(a.config),
            a.seed,
            a.out,
            a.emit_plot_data,
            vec![],
        ),
        Command::GradientScan(a) => (
            Mode::GradientScan,
            Some(a.config),
            a.seed,
            a.out,
            a.emit_plot_data,
            vec![],
        ),
        Command::Extract(a) => (
            Mode::Extract,
            Some(a.config),
            a.seed,
            a.out,
            a.emit_plot_data,
            vec![],
        ),
        Command::FitOnly(a) => (Mode::FitOnly, a.config, None, a.out, false, a.inputs),
    };

    let mut raw = match &config_path {
        Some(path) => pipeline::load_raw(path)?,
        None => RawConfig::default(),
    };
    let input_strings: Vec<String> = inputs.iter().map(|p| p.display().to_string()).collect();
    pipeline::apply_overrides(&mut raw, mode, seed, out.as_deref(), &input_strings)?;
    // Relative paths (output directory, fit-only inputs) resolve against the
    // working directory, matching how the flags were typed.
    let cfg = pipeline::resolve(&raw, mode, Path::new("."))?;
    pipeline::run(&cfg, emit_plot_data)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(summary) => {
            for file in &summary.files {
                println!("{}", file.display());
            }
            if summary.nonconverged.is_empty() {
                ExitCode::SUCCESS
            } else {
                for entry in &summary.nonconverged {
                    eprintln!("nonconverged: {entry}");
                }
                ExitCode::from(3)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

//! `leh`: simulate quasi-reaction systems, fit their log-rates, compare
//! models by BIC, and run estimator studies.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "leh", version, about = "Latent event history estimation for quasi-reaction systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a network exactly and write trajectory and event CSVs.
    Simulate(SimulateArgs),
    /// Estimate log-rates from a trajectory CSV.
    Fit(FitArgs),
    /// Fit several networks to one trajectory and pick the lowest BIC.
    Select(SelectArgs),
    /// Run a comparison or timing study from a TOML config.
    Study(StudyArgs),
    /// Pivot a date,region,I,R,D table into a trajectory CSV.
    Ingest(IngestArgs),
    /// List built-in systems, or print one as a network file.
    Systems(SystemsArgs),
}

/// Networks are read from a file, or named `builtin:<system>`.
#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub network: String,
    /// Log-rates, comma separated.
    #[arg(long, required = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub beta: Vec<f64>,
    /// Initial counts, comma separated, in species order.
    #[arg(long, required = true, value_delimiter = ',')]
    pub y0: Vec<f64>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Stop after this many events.
    #[arg(long)]
    pub events: Option<usize>,
    /// Observe after every `jump` events.
    #[arg(long)]
    pub jump: Option<usize>,
    #[arg(long)]
    pub n_intervals: Option<usize>,
    /// Grid step when observing on a time grid.
    #[arg(long, default_value_t = 1.0)]
    pub dt: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Network file, `builtin:<system>`, `sir-tied` or `sir-untied`.
    #[arg(long)]
    pub network: String,
    /// Trajectory CSV (`time,<species...>`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "em", value_parser = ["em", "lla"])]
    pub estimator: String,
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.002)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub maxit: usize,
    /// `lla`, or a fit JSON whose estimate starts EM.
    #[arg(long, default_value = "lla")]
    pub init: String,
    /// Fit JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Candidate network; repeat for each model.
    #[arg(long, required = true)]
    pub network: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 0.002)]
    pub tol: f64,
    #[arg(long, default_value_t = 300)]
    pub maxit: usize,
    /// Selection JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct StudyArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Print the cell plan and exit.
    #[arg(long)]
    pub dry_run: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's replicate count.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// First date kept, `YYYY-MM-DD`.
    #[arg(long)]
    pub from: Option<String>,
    /// Last date kept, `YYYY-MM-DD`.
    #[arg(long)]
    pub to: Option<String>,
    /// Trajectory CSV to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SystemsArgs {
    pub name: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Fit(a) => commands::fit(a),
        Command::Select(a) => commands::select(a),
        Command::Study(a) => commands::study(a),
        Command::Ingest(a) => commands::ingest(a),
        Command::Systems(a) => commands::systems(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eos_experiments::config::Eta;
use eos_experiments::{run_experiment, CliError, ConfigFile, Experiment, ExperimentConfig, Overrides};

/// Edge-of-stability experiments on scalar linear networks and a squared
/// regression model. Writes CSV tables and SVG plots.
#[derive(Parser)]
#[command(name = "eos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Per-step loss, sharpness, GFS sharpness and product of one GD run
    Trajectory(Common),
    /// GFS-sharpness monotonicity and certified membership over a grid
    Region(Common),
    /// Final sharpness over a grid
    Heatmap(Common),
    /// GD trajectory against periodic sets of the product map
    Bifurcation(Common),
    /// Sharpness and GFS sharpness of GD on synthetic regression
    Regression(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps
    #[arg(long)]
    workers: Option<usize>,
    /// Step size, or "auto" for regression
    #[arg(long, allow_negative_numbers = true)]
    eta: Option<Eta>,
    /// Network depth
    #[arg(long)]
    depth: Option<usize>,
    /// Maximum GD steps
    #[arg(long)]
    steps: Option<usize>,
}

fn execute(experiment: Experiment, c: Common) -> Result<(), CliError> {
    let file = match &c.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::default(),
    };
    let overrides = Overrides {
        seed: c.seed,
        out: c.out,
        workers: c.workers,
        eta: c.eta,
        depth: c.depth,
        steps: c.steps,
    };
    let cfg = ExperimentConfig::resolve(experiment, file, overrides)?;
    for path in run_experiment(&cfg)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (experiment, common) = match cli.command {
        Command::Trajectory(c) => (Experiment::Trajectory, c),
        Command::Region(c) => (Experiment::Region, c),
        Command::Heatmap(c) => (Experiment::Heatmap, c),
        Command::Bifurcation(c) => (Experiment::Bifurcation, c),
        Command::Regression(c) => (Experiment::Regression, c),
    };
    match execute(experiment, common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use spiked_kernel::error::Error;
use spiked_kernel::experiments::{run, Experiment, ExperimentConfig};

/// Spiked conjugate kernel experiments and verification suites.
#[derive(Debug, Parser)]
#[command(name = "skl", version)]
struct Cli {
    /// alignment | generalization | s-table | verify-eigen | expansion-residual | kernel-check
    experiment: String,
    /// JSON config; absent keys take the experiment's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `trials`.
    #[arg(long)]
    trials: Option<usize>,
}

const CONFIG_ERROR: u8 = 2;
const VERIFICATION_FAILURE: u8 = 3;

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let experiment: Experiment = cli.experiment.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_json(experiment, &text)?
        }
        None => ExperimentConfig::defaults(experiment),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("skl: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    match run(&cfg, &cli.out) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.passed {
                ExitCode::SUCCESS
            } else {
                eprintln!("skl: verification failed, see the summary file");
                ExitCode::from(VERIFICATION_FAILURE)
            }
        }
        Err(e @ (Error::Config(_) | Error::InsufficientData(_))) => {
            eprintln!("skl: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(e) => {
            eprintln!("skl: {e}");
            ExitCode::FAILURE
        }
    }
}

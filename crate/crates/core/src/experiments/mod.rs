//! Experiment drivers behind the `skl` binary.

use std::path::{Path, PathBuf};

use crate::covariance::dot;
use crate::error::Result;
use crate::rng::SeededStream;

pub mod alignment;
pub mod config;
pub mod generalization;
pub mod verification;

pub use config::{Experiment, ExperimentConfig};

/// Uniform direction on the sphere.
pub fn unit_vector(d: usize, rng: &mut SeededStream) -> Vec<f64> {
    loop {
        let v = rng.standard_normal_vec(d);
        let n = dot(&v, &v).sqrt();
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Median, averaging the two middle values for even lengths; NaN when empty.
pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    /// `false` only when a verification check failed.
    pub passed: bool,
}

/// Runs one experiment and writes `<name>.csv` (and `<name>_summary.csv` for
/// the verification suites) into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let name = cfg.experiment.name();
    let main = out_dir.join(format!("{name}.csv"));
    match cfg.experiment {
        Experiment::Alignment => {
            alignment::to_csv(&alignment::run_alignment(cfg)?).write(&main)?;
            Ok(RunOutcome {
                files: vec![main],
                passed: true,
            })
        }
        Experiment::Generalization => {
            generalization::to_csv(&generalization::run_generalization(cfg)?).write(&main)?;
            Ok(RunOutcome {
                files: vec![main],
                passed: true,
            })
        }
        _ => {
            let report = verification::run_verification(cfg)?;
            let summary = out_dir.join(format!("{name}_summary.csv"));
            report.detail.write(&main)?;
            verification::checks_to_csv(&report.checks).write(&summary)?;
            Ok(RunOutcome {
                files: vec![main, summary],
                passed: report.passed(),
            })
        }
    }
}

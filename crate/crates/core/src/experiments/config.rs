use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::link::LinkFunction;
use crate::mlp::MlpConfig;

/// Offset between the seeds of consecutive trials.
pub const TRIAL_STRIDE: u64 = 10_007;

pub const ALIGNMENT_SEED: u64 = 54_643;
pub const GENERALIZATION_SEED: u64 = 558_812;
pub const KFOLD_SEED: u64 = 38_182;
pub const MLP_SEED: u64 = 123_114;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Alignment,
    Generalization,
    STable,
    VerifyEigen,
    ExpansionResidual,
    KernelCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Alignment,
        Experiment::Generalization,
        Experiment::STable,
        Experiment::VerifyEigen,
        Experiment::ExpansionResidual,
        Experiment::KernelCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Alignment => "alignment",
            Experiment::Generalization => "generalization",
            Experiment::STable => "s-table",
            Experiment::VerifyEigen => "verify-eigen",
            Experiment::ExpansionResidual => "expansion-residual",
            Experiment::KernelCheck => "kernel-check",
        }
    }

    pub fn is_verification(self) -> bool {
        !matches!(self, Experiment::Alignment | Experiment::Generalization)
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dims: Vec<usize>,
    pub b_exponents: Vec<f64>,
    pub b_scale: f64,
    pub a_coef: f64,
    pub n_train: Vec<usize>,
    pub n_test: usize,
    pub trials: usize,
    pub master_seed: u64,
    pub link: String,
    pub lambda_grid: Vec<f64>,
    pub mlp_width: usize,
    pub mlp_epochs: usize,
    pub mlp_batch: usize,
    pub lr_grid: Vec<f64>,
    pub folds: usize,
    pub kfold_seed: u64,
    pub mlp_seed: u64,
    /// Input pairs per check in the verification suites.
    pub pairs: usize,
    /// Monte Carlo weight draws in `kernel-check`.
    pub samples: usize,
}

/// Every field optional, for reading partial config files.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialConfig {
    experiment: Option<Experiment>,
    dims: Option<Vec<usize>>,
    b_exponents: Option<Vec<f64>>,
    b_scale: Option<f64>,
    a_coef: Option<f64>,
    n_train: Option<Vec<usize>>,
    n_test: Option<usize>,
    trials: Option<usize>,
    master_seed: Option<u64>,
    link: Option<String>,
    lambda_grid: Option<Vec<f64>>,
    mlp_width: Option<usize>,
    mlp_epochs: Option<usize>,
    mlp_batch: Option<usize>,
    lr_grid: Option<Vec<f64>>,
    folds: Option<usize>,
    kfold_seed: Option<u64>,
    mlp_seed: Option<u64>,
    pairs: Option<usize>,
    samples: Option<usize>,
}

fn log_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            dims: vec![50, 100, 200, 400, 800, 1600, 3200],
            b_exponents: vec![0.3, 0.5, 0.7, 0.9],
            b_scale: 5.0,
            a_coef: 1.2,
            n_train: vec![1000],
            n_test: 600,
            trials: 10,
            master_seed: ALIGNMENT_SEED,
            link: LinkFunction::PaperTarget.name().to_string(),
            lambda_grid: log_grid(-3, 3),
            mlp_width: 400,
            mlp_epochs: 1,
            mlp_batch: 64,
            lr_grid: log_grid(-3, 0),
            folds: 5,
            kfold_seed: KFOLD_SEED,
            mlp_seed: MLP_SEED,
            pairs: 200,
            samples: 1_000_000,
        };
        match experiment {
            Experiment::Alignment | Experiment::STable => {}
            Experiment::Generalization => {
                cfg.dims = vec![300];
                cfg.n_train = vec![50, 100, 200, 400, 800, 1600, 3200];
                cfg.master_seed = GENERALIZATION_SEED;
            }
            Experiment::VerifyEigen => {
                cfg.dims = vec![100, 200];
                cfg.b_exponents = vec![0.5, 0.7];
                cfg.n_train = vec![4000, 2000];
            }
            Experiment::ExpansionResidual => {
                cfg.dims = vec![100, 200, 400, 800];
                cfg.b_exponents = vec![0.5];
                cfg.trials = 1;
            }
            Experiment::KernelCheck => {
                cfg.dims = vec![50];
                cfg.trials = 1;
                cfg.pairs = 10_000;
            }
        }
        cfg
    }

    /// Reads a JSON document; absent keys take the defaults of `experiment`.
    pub fn from_json(experiment: Experiment, text: &str) -> Result<Self> {
        let p: PartialConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(e) = p.experiment {
            if e != experiment {
                return Err(Error::Config(format!(
                    "config is for `{e}`, not `{experiment}`"
                )));
            }
        }
        let mut c = Self::defaults(experiment);
        macro_rules! take {
            ($($f:ident),*) => { $(if let Some(v) = p.$f { c.$f = v; })* };
        }
        take!(
            dims,
            b_exponents,
            b_scale,
            a_coef,
            n_train,
            n_test,
            trials,
            master_seed,
            link,
            lambda_grid,
            mlp_width,
            mlp_epochs,
            mlp_batch,
            lr_grid,
            folds,
            kfold_seed,
            mlp_seed,
            pairs,
            samples
        );
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 2) {
            return bad(format!(
                "dims must be nonempty and at least 2: {:?}",
                self.dims
            ));
        }
        if self.b_exponents.is_empty() || self.b_exponents.iter().any(|e| !e.is_finite()) {
            return bad(format!(
                "b_exponents must be nonempty and finite: {:?}",
                self.b_exponents
            ));
        }
        if !(self.b_scale >= 0.0 && self.b_scale.is_finite()) {
            return bad(format!(
                "b_scale must be finite and nonnegative: {}",
                self.b_scale
            ));
        }
        if !(self.a_coef > 0.0 && self.a_coef.is_finite()) {
            return bad(format!("a_coef must be positive: {}", self.a_coef));
        }
        if self.n_train.is_empty() || self.n_train.contains(&0) {
            return bad(format!(
                "n_train must be nonempty and positive: {:?}",
                self.n_train
            ));
        }
        if self.n_test == 0 {
            return bad("n_test must be positive".into());
        }
        self.link_function()?;
        if self.lambda_grid.is_empty()
            || self
                .lambda_grid
                .iter()
                .any(|l| !(*l >= 0.0 && l.is_finite()))
        {
            return bad(format!(
                "lambda_grid must be nonempty and nonnegative: {:?}",
                self.lambda_grid
            ));
        }
        if self.lr_grid.is_empty() || self.lr_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad(format!(
                "lr_grid must be nonempty and nonnegative: {:?}",
                self.lr_grid
            ));
        }
        self.mlp()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.pairs == 0 {
            return bad("pairs must be positive".into());
        }
        if self.samples < 100 {
            return bad(format!(
                "samples must be at least 100, got {}",
                self.samples
            ));
        }
        Ok(())
    }

    pub fn link_function(&self) -> Result<LinkFunction> {
        self.link.parse()
    }

    pub fn mlp(&self) -> MlpConfig {
        MlpConfig {
            width: self.mlp_width,
            epochs: self.mlp_epochs,
            batch: self.mlp_batch,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.master_seed, trial)
    }
}

/// `base + trial * TRIAL_STRIDE`, wrapping.
pub fn derive_seed(base: u64, trial: usize) -> u64 {
    base.wrapping_add((trial as u64).wrapping_mul(TRIAL_STRIDE))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
            let json = serde_json::to_string(&e).unwrap();
            assert_eq!(json, format!("\"{}\"", e.name()));
        }
        assert!("plot".parse::<Experiment>().is_err());
    }

    #[test]
    fn defaults_follow_the_experimental_protocol() {
        let a = ExperimentConfig::defaults(Experiment::Alignment);
        assert_eq!(a.master_seed, 54_643);
        assert_eq!(a.dims, vec![50, 100, 200, 400, 800, 1600, 3200]);
        let g = ExperimentConfig::defaults(Experiment::Generalization);
        assert_eq!(g.master_seed, 558_812);
        assert_eq!(g.dims, vec![300]);
        assert_eq!(g.n_test, 600);
        assert_eq!(g.lambda_grid.len(), 7);
        assert_eq!(g.lr_grid, vec![1e-3, 1e-2, 1e-1, 1.0]);
        assert_eq!((g.mlp_width, g.mlp_epochs, g.mlp_batch), (400, 1, 64));
        for e in Experiment::ALL {
            ExperimentConfig::defaults(e).validate().unwrap();
        }
    }

    #[test]
    fn partial_documents_and_round_trip() {
        let c = ExperimentConfig::from_json(
            Experiment::Alignment,
            r#"{"dims": [10, 20], "trials": 2}"#,
        )
        .unwrap();
        assert_eq!(c.dims, vec![10, 20]);
        assert_eq!(c.trials, 2);
        assert_eq!(c.b_scale, 5.0);
        let again = ExperimentConfig::from_json(Experiment::Alignment, &c.to_json()).unwrap();
        assert_eq!(again, c);
        assert_eq!(again.to_json(), c.to_json());
        let empty = ExperimentConfig::from_json(Experiment::KernelCheck, "{}").unwrap();
        assert_eq!(empty, ExperimentConfig::defaults(Experiment::KernelCheck));
    }

    #[test]
    fn rejects_bad_documents() {
        let cases = [
            r#"{"dimz": [10]}"#,
            r#"{"trials": 0}"#,
            r#"{"dims": [1]}"#,
            r#"{"dims": []}"#,
            r#"{"link": "sigmoid"}"#,
            r#"{"folds": 1}"#,
            r#"{"lambda_grid": []}"#,
            r#"{"experiment": "generalization"}"#,
            r#"{"a_coef": -1.0}"#,
            "not json",
        ];
        for text in cases {
            let r = ExperimentConfig::from_json(Experiment::Alignment, text);
            assert!(matches!(r, Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn trial_seeds() {
        let c = ExperimentConfig::defaults(Experiment::Alignment);
        assert_eq!(c.trial_seed(0), 54_643);
        assert_eq!(c.trial_seed(3), 54_643 + 3 * 10_007);
        assert_eq!(derive_seed(u64::MAX, 1), 10_006);
    }
}

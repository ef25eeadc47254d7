use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{derive_seed, Experiment, ExperimentConfig};
use super::unit_vector;
use crate::covariance::SpikedCovariance;
use crate::error::{Error, Result};
use crate::krr::{fit, kfold_select_gram, mse, predict, Kernel, ReluKernel};
use crate::link::LinkFunction;
use crate::mlp::train_mlp_baseline;
use crate::rng::SeededStream;
use crate::tabular::{float, CsvTable};

pub const HEADER: [&str; 8] = [
    "d",
    "n",
    "model",
    "b_exponent",
    "trial",
    "seed",
    "lambda_or_lr",
    "test_mse",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    K0Krr,
    K1Krr,
    Mlp,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::K0Krr => "k0-krr",
            Model::K1Krr => "k1-krr",
            Model::Mlp => "mlp",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationRow {
    pub n: usize,
    pub model: Model,
    /// `None` for models that do not depend on the spike.
    pub b_exponent: Option<f64>,
    pub trial: usize,
    pub seed: u64,
    pub lambda_or_lr: f64,
    pub test_mse: f64,
    pub d: usize,
}

fn draw(
    link: &LinkFunction,
    w_star: &[f64],
    count: usize,
    rng: &mut SeededStream,
) -> (DMatrix<f64>, Vec<f64>) {
    let d = w_star.len();
    let x = DMatrix::from_fn(count, d, |_, _| rng.standard_normal());
    let y = (0..count)
        .map(|i| link.eval(x.row(i).iter().zip(w_star).map(|(a, b)| a * b).sum()))
        .collect();
    (x, y)
}

fn krr_test_mse<K: Kernel>(
    kernel: &K,
    x: &DMatrix<f64>,
    y: &[f64],
    xt: &DMatrix<f64>,
    yt: &[f64],
    cfg: &ExperimentConfig,
    fold_rng: &mut SeededStream,
) -> Result<(f64, f64)> {
    let k = kernel.gram(x)?;
    let lambda = kfold_select_gram(&k, y, &cfg.lambda_grid, cfg.folds, fold_rng)?;
    let coefs = fit(&k, y, lambda)?;
    Ok((lambda, mse(&predict(&kernel.cross(xt, x)?, &coefs)?, yt)?))
}

/// All models at one training size in one trial. The fold split is the same
/// for every kernel.
pub fn generalization_cell(
    cfg: &ExperimentConfig,
    d: usize,
    n: usize,
    trial: usize,
) -> Result<Vec<GeneralizationRow>> {
    if n < cfg.folds {
        return Err(Error::InsufficientData(format!(
            "{n} training samples for {} folds",
            cfg.folds
        )));
    }
    let link = cfg.link_function()?;
    let seed = cfg.trial_seed(trial);
    let base = SeededStream::new(seed, d as u64);
    let w_star = unit_vector(d, &mut base.substream(u64::MAX));
    let (xt, yt) = draw(
        &link,
        &w_star,
        cfg.n_test,
        &mut base.substream(u64::MAX - 1),
    );
    let (x, y) = draw(&link, &w_star, n, &mut base.substream(n as u64));
    let fold_seed = derive_seed(cfg.kfold_seed, trial);
    let row = |model, b_exponent, lambda_or_lr, test_mse| GeneralizationRow {
        n,
        model,
        b_exponent,
        trial,
        seed,
        lambda_or_lr,
        test_mse,
        d,
    };
    let mut rows = Vec::new();
    let k0 = ReluKernel(SpikedCovariance::isotropic(1.0, d)?);
    let (lam, err) = krr_test_mse(
        &k0,
        &x,
        &y,
        &xt,
        &yt,
        cfg,
        &mut SeededStream::new(fold_seed, n as u64),
    )?;
    rows.push(row(Model::K0Krr, None, lam, err));
    for &e in &cfg.b_exponents {
        let b = cfg.b_scale * (d as f64).powf(e);
        let k1 = ReluKernel(SpikedCovariance::new(cfg.a_coef, b, &w_star)?);
        let (lam, err) = krr_test_mse(
            &k1,
            &x,
            &y,
            &xt,
            &yt,
            cfg,
            &mut SeededStream::new(fold_seed, n as u64),
        )?;
        rows.push(row(Model::K1Krr, Some(e), lam, err));
    }
    let mut mlp_rng = SeededStream::new(derive_seed(cfg.mlp_seed, trial), n as u64);
    let out = train_mlp_baseline(
        &cfg.mlp(),
        &x,
        &y,
        &xt,
        &yt,
        &cfg.lr_grid,
        cfg.folds,
        &mut mlp_rng,
    )?;
    rows.push(row(Model::Mlp, None, out.lr, out.test_mse));
    Ok(rows)
}

pub fn run_generalization(cfg: &ExperimentConfig) -> Result<Vec<GeneralizationRow>> {
    if cfg.experiment != Experiment::Generalization {
        return Err(Error::Config(format!(
            "`{}` is not the generalization experiment",
            cfg.experiment
        )));
    }
    cfg.validate()?;
    if let Some(&n) = cfg.n_train.iter().find(|&&n| n < cfg.folds) {
        return Err(Error::InsufficientData(format!(
            "{n} training samples for {} folds",
            cfg.folds
        )));
    }
    let per_trial: Vec<Vec<GeneralizationRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rows = Vec::new();
            for &d in &cfg.dims {
                for &n in &cfg.n_train {
                    rows.extend(generalization_cell(cfg, d, n, trial)?);
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn to_csv(rows: &[GeneralizationRow]) -> CsvTable {
    let mut t = CsvTable::new(&HEADER);
    for r in rows {
        t.push(vec![
            r.d.to_string(),
            r.n.to_string(),
            r.model.name().to_string(),
            r.b_exponent.map_or_else(String::new, float),
            r.trial.to_string(),
            r.seed.to_string(),
            float(r.lambda_or_lr),
            float(r.test_mse),
        ]);
    }
    t
}

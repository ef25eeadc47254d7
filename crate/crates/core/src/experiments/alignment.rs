use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig};
use super::unit_vector;
use crate::covariance::SpikedCovariance;
use crate::error::{Error, Result};
use crate::rng::SeededStream;
use crate::spectral::{alignment, leading_eigenpairs, relu_gram, HarmonicFeatures};
use crate::tabular::{float, CsvTable};

pub const HEADER: [&str; 8] = [
    "d",
    "n",
    "b_exponent",
    "b_value",
    "trial",
    "seed",
    "alignment_k0",
    "alignment_k1",
];

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentRow {
    pub d: usize,
    pub n: usize,
    pub b_exponent: f64,
    pub b_value: f64,
    pub trial: usize,
    pub seed: u64,
    pub alignment_k0: f64,
    pub alignment_k1: f64,
}

fn top_alignment(k: &DMatrix<f64>, feature: &[f64]) -> Result<f64> {
    let top = leading_eigenpairs(k, 1)?;
    alignment(&top.vector(0), feature)
}

/// One draw of `N` Gaussian points and a uniform spike; the top eigenvector
/// of the baseline Gram matrix and of the spiked one for every exponent,
/// each scored against the normalized quadratic harmonic.
pub fn alignment_trial(
    d: usize,
    n: usize,
    a_coef: f64,
    b_scale: f64,
    b_exponents: &[f64],
    rng: &mut SeededStream,
) -> Result<Vec<(f64, f64, f64, f64)>> {
    let w_star = unit_vector(d, rng);
    let z = DMatrix::from_fn(n, d, |_, _| rng.standard_normal());
    let y2 = HarmonicFeatures::new(&z, &w_star)?.y2_hat;
    let a0 = top_alignment(&relu_gram(&z, &SpikedCovariance::isotropic(1.0, d)?)?, &y2)?;
    b_exponents
        .iter()
        .map(|&e| {
            let b = b_scale * (d as f64).powf(e);
            let k1 = relu_gram(&z, &SpikedCovariance::new(a_coef, b, &w_star)?)?;
            Ok((e, b, a0, top_alignment(&k1, &y2)?))
        })
        .collect()
}

pub fn run_alignment(cfg: &ExperimentConfig) -> Result<Vec<AlignmentRow>> {
    if cfg.experiment != Experiment::Alignment {
        return Err(Error::Config(format!(
            "`{}` is not the alignment experiment",
            cfg.experiment
        )));
    }
    cfg.validate()?;
    let n = cfg.n_train[0];
    let per_trial: Vec<Vec<AlignmentRow>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.trial_seed(trial);
            let base = SeededStream::new(seed, 0);
            let mut rows = Vec::new();
            for &d in &cfg.dims {
                let mut rng = base.substream(d as u64);
                for (e, b, a0, a1) in
                    alignment_trial(d, n, cfg.a_coef, cfg.b_scale, &cfg.b_exponents, &mut rng)?
                {
                    rows.push(AlignmentRow {
                        d,
                        n,
                        b_exponent: e,
                        b_value: b,
                        trial,
                        seed,
                        alignment_k0: a0,
                        alignment_k1: a1,
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_trial.into_iter().flatten().collect())
}

pub fn to_csv(rows: &[AlignmentRow]) -> CsvTable {
    let mut t = CsvTable::new(&HEADER);
    for r in rows {
        t.push(vec![
            r.d.to_string(),
            r.n.to_string(),
            float(r.b_exponent),
            float(r.b_value),
            r.trial.to_string(),
            r.seed.to_string(),
            float(r.alignment_k0),
            float(r.alignment_k1),
        ]);
    }
    t
}

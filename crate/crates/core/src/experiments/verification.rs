use nalgebra::DMatrix;
use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig};
use super::{median, unit_vector};
use crate::covariance::{dot, SpikedCovariance};
use crate::error::{Error, Result};
use crate::expansion::residual_decay_probe;
use crate::kernels::{k0_relu, k1_relu, k_mc_batch, Activation, KernelSpec};
use crate::link::LinkFunction;
use crate::rng::SeededStream;
use crate::spectral::{
    leading_eigenpairs, predicted_linear_eigenvalues, predicted_top_eigenpair, rayleigh_eigenvalue,
    relu_gram, two_mode_fit, HarmonicFeatures, TopEigenPrediction,
};
use crate::tabular::{float, CsvTable};

/// One named pass/fail outcome with the value it was judged on.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
}

impl Check {
    fn new(name: impl Into<String>, measured: f64, target: impl Into<String>, pass: bool) -> Self {
        Check {
            name: name.into(),
            measured,
            target: target.into(),
            pass,
        }
    }
}

pub fn checks_to_csv(checks: &[Check]) -> CsvTable {
    let mut t = CsvTable::new(&["check", "measured", "target", "pass"]);
    for c in checks {
        t.push(vec![
            c.name.clone(),
            float(c.measured),
            c.target.clone(),
            c.pass.to_string(),
        ]);
    }
    t
}

/// Detail table plus the checks judged from it.
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub detail: CsvTable,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

fn rel_err(measured: f64, predicted: f64) -> f64 {
    ((measured - predicted) / predicted).abs()
}

/// Gaussian statistics of every catalogue link.
pub fn s_table() -> Result<VerificationReport> {
    let mut detail = CsvTable::new(&["link", "mu1", "s", "second_moment"]);
    let mut checks = Vec::new();
    let exact = [
        (LinkFunction::Identity, 1.0),
        (LinkFunction::Quadratic, 6.0),
        (LinkFunction::Relu, 0.5),
        (LinkFunction::GaussBump, -1.0 / (3.0 * 3f64.sqrt())),
    ];
    for link in LinkFunction::catalogue() {
        let s = link.s_coefficient()?;
        detail.push(vec![
            link.name().to_string(),
            float(link.mu1()?),
            float(s),
            float(link.second_moment()?),
        ]);
        if let Some((_, want)) = exact.iter().find(|(l, _)| *l == link) {
            let err = (s - want).abs();
            checks.push(Check::new(
                format!("s({link})"),
                s,
                format!("{} +- 1e-9", float(*want)),
                err < 1e-9,
            ));
        }
        let sign = match link {
            LinkFunction::Identity | LinkFunction::Quadratic | LinkFunction::IndicatorOutside => {
                Some(true)
            }
            LinkFunction::GaussBump | LinkFunction::IndicatorInside => Some(false),
            _ => None,
        };
        if let Some(positive) = sign {
            let ok = if positive { s > 0.0 } else { s < 0.0 };
            checks.push(Check::new(
                format!("sign s({link})"),
                s,
                if positive { "> 0" } else { "< 0" },
                ok,
            ));
        }
    }
    Ok(VerificationReport { detail, checks })
}

/// Random spiked covariance with `A` in `[0.3, 1.3)` and `B` in `[-0.2, 19.8)`.
pub fn random_covariance(d: usize, rng: &mut SeededStream) -> Result<SpikedCovariance> {
    let a = 0.3 + rng.uniform();
    let b = 20.0 * rng.uniform() - 0.2;
    SpikedCovariance::new(a, b, &rng.standard_normal_vec(d))
}

/// Largest `|k1(x, x') - k0(Gamma^{1/2} x, Gamma^{1/2} x')|` over `count`
/// random Gaussian pairs, each with its own random covariance.
pub fn warp_identity_deviation(d: usize, count: usize, rng: &mut SeededStream) -> Result<f64> {
    let base = rng.split();
    let devs: Vec<f64> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut s = base.substream(i as u64);
            let g = random_covariance(d, &mut s)?;
            let x = s.standard_normal_vec(d);
            let xp = s.standard_normal_vec(d);
            let r = g.sqrt();
            let lhs = k1_relu(&x, &xp, &g)?;
            let rhs = k0_relu(&r.matvec(&x)?, &r.matvec(&xp)?)?;
            Ok((lhs - rhs).abs())
        })
        .collect::<Result<_>>()?;
    Ok(devs.into_iter().fold(0.0, f64::max))
}

/// Closed form, Monte Carlo estimate and standard error of the spiked ReLU
/// kernel on `pairs` random pairs under one random covariance.
pub fn mc_consistency(
    d: usize,
    pairs: usize,
    samples: usize,
    rng: &mut SeededStream,
) -> Result<Vec<(f64, f64, f64)>> {
    let g = random_covariance(d, rng)?;
    let pts: Vec<(Vec<f64>, Vec<f64>)> = (0..pairs)
        .map(|_| (rng.standard_normal_vec(d), rng.standard_normal_vec(d)))
        .collect();
    let refs: Vec<(&[f64], &[f64])> = pts
        .iter()
        .map(|(a, b)| (a.as_slice(), b.as_slice()))
        .collect();
    let spec = KernelSpec {
        activation: Activation::Relu,
        covariance: g.clone(),
    };
    let est = k_mc_batch(&refs, &spec, samples, rng)?;
    pts.iter()
        .zip(est)
        .map(|((x, xp), e)| Ok((k1_relu(x, xp, &g)?, e.estimate, e.std_error)))
        .collect()
}

pub const MC_PAIRS: usize = 20;

pub fn kernel_check(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let mut detail = CsvTable::new(&[
        "d",
        "trial",
        "seed",
        "quantity",
        "pair",
        "value",
        "reference",
        "std_error",
    ]);
    let mut warp = Vec::new();
    let mut z_max = Vec::new();
    for trial in 0..cfg.trials {
        let seed = cfg.trial_seed(trial);
        for &d in &cfg.dims {
            let base = SeededStream::new(seed, d as u64);
            let dev = warp_identity_deviation(d, cfg.pairs, &mut base.substream(0))?;
            detail.push(vec![
                d.to_string(),
                trial.to_string(),
                seed.to_string(),
                "warp_max_deviation".into(),
                String::new(),
                float(dev),
                float(0.0),
                String::new(),
            ]);
            warp.push(dev);
            let mut worst: f64 = 0.0;
            for (p, (closed, est, se)) in
                mc_consistency(d, MC_PAIRS, cfg.samples, &mut base.substream(1))?
                    .into_iter()
                    .enumerate()
            {
                worst = worst.max((est - closed).abs() / se);
                detail.push(vec![
                    d.to_string(),
                    trial.to_string(),
                    seed.to_string(),
                    "mc_estimate".into(),
                    p.to_string(),
                    float(est),
                    float(closed),
                    float(se),
                ]);
            }
            z_max.push(worst);
        }
    }
    let warp_max = warp.iter().copied().fold(0.0, f64::max);
    let z = z_max.iter().copied().fold(0.0, f64::max);
    Ok(VerificationReport {
        detail,
        checks: vec![
            Check::new(
                "warp identity max deviation",
                warp_max,
                "< 1e-12",
                warp_max < 1e-12,
            ),
            Check::new("mc max standardized error", z, "<= 4", z <= 4.0),
        ],
    })
}

pub fn expansion_residual(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let mut detail = CsvTable::new(&[
        "trial",
        "seed",
        "b_exponent",
        "d",
        "b_value",
        "max_residual",
        "mean_residual",
        "predicted_scale",
    ]);
    let mut checks = Vec::new();
    for trial in 0..cfg.trials {
        let seed = cfg.trial_seed(trial);
        for &e in &cfg.b_exponents {
            let mut rng = SeededStream::new(seed, 0);
            let probe =
                residual_decay_probe(&cfg.dims, cfg.b_scale, e, cfg.a_coef, cfg.pairs, &mut rng)?;
            for row in probe.to_csv().rows() {
                let mut r = vec![trial.to_string(), seed.to_string(), float(e)];
                r.extend(row.iter().cloned());
                detail.push(r);
            }
            let slope = probe.slope.unwrap_or(f64::NAN);
            checks.push(Check::new(
                format!("residual slope (trial {trial}, exponent {e})"),
                slope,
                "1 +- 0.25",
                (slope - 1.0).abs() <= 0.25,
            ));
        }
    }
    Ok(VerificationReport { detail, checks })
}

/// Rayleigh quotients of the spiked Gram matrix on the two kinds of linear
/// feature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEigenMeasurement {
    /// Along `<x, w*>`.
    pub aligned: f64,
    /// Along `<x, v>` with `v` orthogonal to `w*`.
    pub orthogonal: f64,
    pub predicted_aligned: f64,
    pub predicted_orthogonal: f64,
}

impl LinearEigenMeasurement {
    pub fn ratio(&self) -> f64 {
        self.aligned / self.orthogonal
    }

    pub fn predicted_ratio(&self) -> f64 {
        self.predicted_aligned / self.predicted_orthogonal
    }
}

pub fn linear_eigen_trial(
    d: usize,
    n: usize,
    a_coef: f64,
    b_coef: f64,
    rng: &mut SeededStream,
) -> Result<LinearEigenMeasurement> {
    let w_star = unit_vector(d, rng);
    let mut v = rng.standard_normal_vec(d);
    let c = dot(&v, &w_star);
    v.iter_mut().zip(&w_star).for_each(|(vi, wi)| *vi -= c * wi);
    let z = DMatrix::from_fn(n, d, |_, _| rng.standard_normal());
    let k1 = relu_gram(&z, &SpikedCovariance::new(a_coef, b_coef, &w_star)?)?;
    let f_al: Vec<f64> = z
        .row_iter()
        .map(|r| r.iter().zip(&w_star).map(|(a, b)| a * b).sum())
        .collect();
    let f_or: Vec<f64> = z
        .row_iter()
        .map(|r| r.iter().zip(&v).map(|(a, b)| a * b).sum())
        .collect();
    let (pa, po) = predicted_linear_eigenvalues(a_coef, b_coef, d);
    Ok(LinearEigenMeasurement {
        aligned: rayleigh_eigenvalue(&k1, &f_al)?,
        orthogonal: rayleigh_eigenvalue(&k1, &f_or)?,
        predicted_aligned: pa,
        predicted_orthogonal: po,
    })
}

/// The top eigenvector of the spiked Gram matrix fitted on the radial mode
/// and the radial quadratic harmonic, with the first-order prediction built
/// from baseline Rayleigh quotients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopEigenMeasurement {
    pub lambda_max0: f64,
    pub lambda2: f64,
    pub prediction: TopEigenPrediction,
    /// `lambda_max(K1) / N`.
    pub top_eigenvalue: f64,
    pub measured_tau: f64,
    pub captured: f64,
}

pub fn top_eigen_trial(
    d: usize,
    n: usize,
    a_coef: f64,
    b_coef: f64,
    rng: &mut SeededStream,
) -> Result<TopEigenMeasurement> {
    let w_star = unit_vector(d, rng);
    let z = DMatrix::from_fn(n, d, |_, _| rng.standard_normal());
    let h = HarmonicFeatures::new(&z, &w_star)?;
    let fr = h.radial.clone();
    let f2 = h.radial_y2();
    let k0 = relu_gram(&z, &SpikedCovariance::isotropic(1.0, d)?)?;
    let lambda_max0 = rayleigh_eigenvalue(&k0, &fr)?;
    let lambda2 = rayleigh_eigenvalue(&k0, &f2)?;
    drop(k0);
    let prediction = predicted_top_eigenpair(a_coef, b_coef, d, lambda_max0, lambda2)?;
    let k1 = relu_gram(&z, &SpikedCovariance::new(a_coef, b_coef, &w_star)?)?;
    let top = leading_eigenpairs(&k1, 1)?;
    let fit = two_mode_fit(&top.vector(0), &fr, &f2)?;
    Ok(TopEigenMeasurement {
        lambda_max0,
        lambda2,
        prediction,
        top_eigenvalue: top.eigenvalues()[0] / n as f64,
        measured_tau: fit.coef_second / fit.coef_first,
        captured: fit.captured,
    })
}

fn eigen_rows(
    detail: &mut CsvTable,
    d: usize,
    n: usize,
    e: f64,
    trial: usize,
    seed: u64,
    rows: &[(&str, f64, f64)],
) {
    for (q, m, p) in rows {
        detail.push(vec![
            d.to_string(),
            n.to_string(),
            float(e),
            trial.to_string(),
            seed.to_string(),
            q.to_string(),
            float(*m),
            float(*p),
        ]);
    }
}

/// Linear-eigenspace check at the first entries of `dims`, `n_train` and
/// `b_exponents`; top-eigenpair check at the last entries.
pub fn verify_eigen(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    let (d_lin, n_lin, e_lin) = (cfg.dims[0], cfg.n_train[0], cfg.b_exponents[0]);
    let (d_top, n_top, e_top) = (
        *cfg.dims.last().unwrap(),
        *cfg.n_train.last().unwrap(),
        *cfg.b_exponents.last().unwrap(),
    );
    let b_lin = cfg.b_scale * (d_lin as f64).powf(e_lin);
    let b_top = cfg.b_scale * (d_top as f64).powf(e_top);
    let per_trial: Vec<(LinearEigenMeasurement, TopEigenMeasurement)> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let seed = cfg.trial_seed(trial);
            let lin = linear_eigen_trial(
                d_lin,
                n_lin,
                cfg.a_coef,
                b_lin,
                &mut SeededStream::new(seed, 0),
            )?;
            let top = top_eigen_trial(
                d_top,
                n_top,
                cfg.a_coef,
                b_top,
                &mut SeededStream::new(seed, 1),
            )?;
            Ok((lin, top))
        })
        .collect::<Result<_>>()?;
    let mut detail = CsvTable::new(&[
        "d",
        "n",
        "b_exponent",
        "trial",
        "seed",
        "quantity",
        "measured",
        "predicted",
    ]);
    for (trial, (lin, top)) in per_trial.iter().enumerate() {
        let seed = cfg.trial_seed(trial);
        eigen_rows(
            &mut detail,
            d_lin,
            n_lin,
            e_lin,
            trial,
            seed,
            &[
                ("linear_aligned", lin.aligned, lin.predicted_aligned),
                (
                    "linear_orthogonal",
                    lin.orthogonal,
                    lin.predicted_orthogonal,
                ),
                ("linear_ratio", lin.ratio(), lin.predicted_ratio()),
            ],
        );
        eigen_rows(
            &mut detail,
            d_top,
            n_top,
            e_top,
            trial,
            seed,
            &[
                (
                    "top_eigenvalue",
                    top.top_eigenvalue,
                    top.prediction.lambda_tilde,
                ),
                (
                    "top_eigenvalue_coupled",
                    top.top_eigenvalue,
                    top.prediction.coupled_plus,
                ),
                ("tau", top.measured_tau, top.prediction.tau),
                ("captured_norm", top.captured, 1.0),
            ],
        );
    }
    let lin_tag = format!("d={d_lin} n={n_lin} exponent={e_lin}");
    let top_tag = format!("d={d_top} n={n_top} exponent={e_top}");
    let ratio = median(
        per_trial
            .iter()
            .map(|(l, _)| rel_err(l.ratio(), l.predicted_ratio()))
            .collect(),
    );
    let orth = median(
        per_trial
            .iter()
            .map(|(l, _)| rel_err(l.orthogonal, l.predicted_orthogonal))
            .collect(),
    );
    let captured = median(per_trial.iter().map(|(_, t)| t.captured).collect());
    let tau = median(
        per_trial
            .iter()
            .map(|(_, t)| rel_err(t.measured_tau, t.prediction.tau))
            .collect(),
    );
    let checks = vec![
        Check::new(
            format!("linear ratio rel. error ({lin_tag})"),
            ratio,
            "<= 0.25",
            ratio <= 0.25,
        ),
        Check::new(
            format!("orthogonal eigenvalue rel. error ({lin_tag})"),
            orth,
            "<= 0.15",
            orth <= 0.15,
        ),
        Check::new(
            format!("top eigenvector captured norm ({top_tag})"),
            captured,
            ">= 0.95",
            captured >= 0.95,
        ),
        Check::new(
            format!("tau rel. error ({top_tag})"),
            tau,
            "<= 0.30",
            tau <= 0.30,
        ),
    ];
    Ok(VerificationReport { detail, checks })
}

pub fn run_verification(cfg: &ExperimentConfig) -> Result<VerificationReport> {
    cfg.validate()?;
    match cfg.experiment {
        Experiment::STable => s_table(),
        Experiment::KernelCheck => kernel_check(cfg),
        Experiment::ExpansionResidual => expansion_residual(cfg),
        Experiment::VerifyEigen => verify_eigen(cfg),
        other => Err(Error::Config(format!(
            "`{other}` is not a verification suite"
        ))),
    }
}

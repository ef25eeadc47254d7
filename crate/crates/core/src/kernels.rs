//! Conjugate kernels of a single hidden unit.
//!
//! For `w ~ N(0, Gamma / d)` the ReLU kernel has the arc-cosine form
//!
//! ```text
//! k(x, x') = sqrt(q(x) q(x')) / (2 pi d) * [g (pi - arccos g) + sqrt(1 - g^2)]
//! q(x) = x^T Gamma x,   g = x^T Gamma x' / sqrt(q(x) q(x'))
//! ```
//!
//! With `Gamma = I` this is the baseline `k0`; in general it equals
//! `k0(Gamma^{1/2} x, Gamma^{1/2} x')`.

use rayon::prelude::*;

use crate::covariance::{dot, LearningConfig, SpikedCovariance};
use crate::error::{check_dim, Error, Result};
use crate::link::LinkFunction;
use crate::rng::SeededStream;

/// Monte Carlo draws per parallel chunk; fixes the reduction tree.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Activation::Relu => t.max(0.0),
            Activation::Tanh => t.tanh(),
        }
    }

    /// ReLU uses `sigma'(0) = 1`.
    pub fn derivative(self, t: f64) -> f64 {
        match self {
            Activation::Relu => f64::from(u8::from(t >= 0.0)),
            Activation::Tanh => {
                let c = t.cosh();
                1.0 / (c * c)
            }
        }
    }

    /// First Hermite coefficient `E[sigma'(Z)]`.
    pub fn mu1(self) -> Result<f64> {
        match self {
            Activation::Relu => Ok(0.5),
            Activation::Tanh => {
                crate::quadrature::GaussHermite::standard().expectation(|t| self.derivative(t))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub activation: Activation,
    pub covariance: SpikedCovariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Running count, mean and centered sum of squares; merges are exact
/// (Chan et al.) so chunked reductions match a sequential pass up to rounding.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Moments {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub(crate) fn push(&mut self, v: f64) {
        self.count += 1.0;
        let delta = v - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (v - self.mean);
    }

    pub(crate) fn merge(&mut self, other: &Moments) {
        if other.count == 0.0 {
            return;
        }
        let n = self.count + other.count;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count / n;
        self.m2 += other.m2 + delta * delta * self.count * other.count / n;
        self.count = n;
    }

    pub(crate) fn estimate(&self) -> McEstimate {
        let var = if self.count > 1.0 {
            self.m2 / (self.count - 1.0)
        } else {
            0.0
        };
        McEstimate {
            estimate: self.mean,
            std_error: (var / self.count).sqrt(),
        }
    }
}

/// Arc-cosine bracket scaled by `sqrt(qx qy) / (2 pi d)`.
pub(crate) fn arc_cosine(qx: f64, qy: f64, ip: f64, d: f64) -> f64 {
    let r = (qx * qy).sqrt();
    let g = (ip / r).clamp(-1.0, 1.0);
    r / (2.0 * std::f64::consts::PI * d)
        * (g * (std::f64::consts::PI - g.acos()) + (1.0 - g * g).sqrt())
}

fn norm_sq_nonzero(x: &[f64]) -> Result<f64> {
    let q = dot(x, x);
    if q > 0.0 {
        Ok(q)
    } else {
        Err(Error::ZeroVector)
    }
}

/// Baseline ReLU kernel, `Gamma = I`.
pub fn k0_relu(x: &[f64], xp: &[f64]) -> Result<f64> {
    check_dim(x.len(), xp.len())?;
    let qx = norm_sq_nonzero(x)?;
    let qy = norm_sq_nonzero(xp)?;
    Ok(arc_cosine(qx, qy, dot(x, xp), x.len() as f64))
}

/// Spiked ReLU kernel with weights drawn from `N(0, Gamma / d)`.
pub fn k1_relu(x: &[f64], xp: &[f64], g: &SpikedCovariance) -> Result<f64> {
    check_dim(g.dim(), x.len())?;
    check_dim(g.dim(), xp.len())?;
    norm_sq_nonzero(x)?;
    norm_sq_nonzero(xp)?;
    let qx = g.bilinear(x, x)?;
    let qy = g.bilinear(xp, xp)?;
    Ok(arc_cosine(qx, qy, g.bilinear(x, xp)?, g.dim() as f64))
}

fn check_pairs(pairs: &[(&[f64], &[f64])], d: usize) -> Result<()> {
    for (x, xp) in pairs {
        check_dim(d, x.len())?;
        check_dim(d, xp.len())?;
    }
    Ok(())
}

/// Monte Carlo estimate of `E[sigma(<w, x>) sigma(<w, x'>)]`, `w ~ N(0, Gamma / d)`.
pub fn k_mc(
    x: &[f64],
    xp: &[f64],
    spec: &KernelSpec,
    samples: usize,
    rng: &mut SeededStream,
) -> Result<McEstimate> {
    Ok(k_mc_batch(&[(x, xp)], spec, samples, rng)?[0])
}

/// [`k_mc`] for several pairs sharing the same weight draws. Each pair's
/// estimate and standard error is that of an independent run; only the
/// cross-pair errors are correlated.
pub fn k_mc_batch(
    pairs: &[(&[f64], &[f64])],
    spec: &KernelSpec,
    samples: usize,
    rng: &mut SeededStream,
) -> Result<Vec<McEstimate>> {
    if samples < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 samples, got {samples}"
        )));
    }
    let d = spec.covariance.dim();
    check_pairs(pairs, d)?;
    let base = rng.split();
    let chunks = samples.div_ceil(CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = base.substream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut acc = vec![Moments::default(); pairs.len()];
            let mut xi = vec![0.0; d];
            let mut w = vec![0.0; d];
            for _ in 0..count {
                spec.covariance.sample_into(&mut stream, &mut xi, &mut w);
                for (m, (x, xp)) in acc.iter_mut().zip(pairs) {
                    let act = spec.activation;
                    m.push(act.eval(dot(&w, x)) * act.eval(dot(&w, xp)));
                }
            }
            acc
        })
        .collect();
    Ok(reduce(partial, pairs.len()))
}

fn reduce(partial: Vec<Vec<Moments>>, width: usize) -> Vec<McEstimate> {
    let mut total = vec![Moments::default(); width];
    for chunk in &partial {
        for (t, m) in total.iter_mut().zip(chunk) {
            t.merge(m);
        }
    }
    total.iter().map(Moments::estimate).collect()
}

/// Monte Carlo estimate of the ReLU kernel under the exact law of one
/// neuron after the first-layer step:
///
/// ```text
/// z = w + (mu1 eta / (n sqrt(m))) a S,   S = sum_i y_i x_i
/// ```
///
/// with `w ~ N(0, I/d)`, `a ~ N(0, 1/m)` and a fresh dataset
/// `y_i = link(<w_star, x_i>) + noise` for every repetition.
pub fn k1_star_mc(
    x: &[f64],
    xp: &[f64],
    cfg: &LearningConfig,
    link: &LinkFunction,
    w_star: &[f64],
    reps: usize,
    rng: &mut SeededStream,
) -> Result<McEstimate> {
    Ok(k1_star_mc_batch(&[(x, xp)], cfg, link, w_star, reps, rng)?[0])
}

/// [`k1_star_mc`] for several pairs sharing the same draws of `z`.
pub fn k1_star_mc_batch(
    pairs: &[(&[f64], &[f64])],
    cfg: &LearningConfig,
    link: &LinkFunction,
    w_star: &[f64],
    reps: usize,
    rng: &mut SeededStream,
) -> Result<Vec<McEstimate>> {
    if reps < 100 {
        return Err(Error::InvalidArgument(format!(
            "need at least 100 repetitions, got {reps}"
        )));
    }
    cfg.validate()?;
    let d = cfg.dim;
    check_dim(d, w_star.len())?;
    check_pairs(pairs, d)?;
    let norm = dot(w_star, w_star).sqrt();
    if !(norm > 0.0) {
        return Err(Error::ZeroVector);
    }
    let u: Vec<f64> = w_star.iter().map(|v| v / norm).collect();
    let (n, m) = (cfg.n(), cfg.m());
    let step = if cfg.eta_tilde == 0.0 {
        0.0
    } else {
        link.mu1()? * cfg.eta() / (n as f64 * (m as f64).sqrt())
    };
    let noise_sd = cfg.noise_var.sqrt();
    let w_sd = (d as f64).sqrt().recip();
    let a_sd = (m as f64).sqrt().recip();
    let base = rng.split();
    let chunks = reps.div_ceil(CHUNK);
    let partial: Vec<Vec<Moments>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut stream = base.substream(c as u64);
            let count = CHUNK.min(reps - c * CHUNK);
            let mut acc = vec![Moments::default(); pairs.len()];
            let mut xi = vec![0.0; d];
            let mut sigma = vec![0.0; d];
            let mut z = vec![0.0; d];
            for _ in 0..count {
                sigma.fill(0.0);
                if step != 0.0 {
                    for _ in 0..n {
                        stream.fill_standard_normal(&mut xi);
                        let mut y = link.eval(dot(&u, &xi));
                        if noise_sd > 0.0 {
                            y += noise_sd * stream.standard_normal();
                        }
                        for (s, v) in sigma.iter_mut().zip(&xi) {
                            *s += y * v;
                        }
                    }
                }
                stream.fill_standard_normal(&mut z);
                let a = a_sd * stream.standard_normal();
                for (zj, sj) in z.iter_mut().zip(&sigma) {
                    *zj = w_sd * *zj + step * a * sj;
                }
                for (mo, (x, xp)) in acc.iter_mut().zip(pairs) {
                    mo.push(dot(&z, x).max(0.0) * dot(&z, xp).max(0.0));
                }
            }
            acc
        })
        .collect();
    Ok(reduce(partial, pairs.len()))
}

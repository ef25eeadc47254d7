//! The rank-one spiked second-moment matrix `Gamma = A I + B u u^T`.
//!
//! `Gamma` is held as `(A, B, u)`; nothing here builds the `d x d` matrix.
//! Closed forms used throughout:
//!
//! ```text
//! Gamma^{-1}  = (1/A) I - B / (A (A + B)) u u^T
//! Gamma^{1/2} = sqrt(A) I + (sqrt(A + B) - sqrt(A)) u u^T
//! ln det      = (d - 1) ln A + ln(A + B)
//! ```

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::link::LinkFunction;
use crate::rng::SeededStream;

pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpikedCovariance {
    a: f64,
    b: f64,
    spike: Vec<f64>,
}

impl SpikedCovariance {
    /// Validates `A > 0`, `A + B > 0` and renormalizes `u`. A zero `u` is
    /// accepted only when `B = 0`, in which case the first basis vector is stored.
    pub fn new(a: f64, b: f64, u: &[f64]) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::InvalidArgument(
                "covariance dimension must be positive".into(),
            ));
        }
        if !(a > 0.0 && a + b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::NonPositiveDefinite { a, b });
        }
        let norm = dot(u, u).sqrt();
        let spike = if norm > 0.0 && norm.is_finite() {
            u.iter().map(|v| v / norm).collect()
        } else if b == 0.0 {
            let mut e = vec![0.0; u.len()];
            e[0] = 1.0;
            e
        } else {
            return Err(Error::ZeroSpike);
        };
        Ok(Self { a, b, spike })
    }

    /// `A I` in dimension `d`.
    pub fn isotropic(a: f64, d: usize) -> Result<Self> {
        Self::new(a, 0.0, &vec![0.0; d])
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn spike(&self) -> &[f64] {
        &self.spike
    }

    pub fn dim(&self) -> usize {
        self.spike.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.a.min(self.a + self.b)
    }

    /// `A x + B <u, x> u`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let p = self.b * dot(&self.spike, x);
        Ok(x.iter()
            .zip(&self.spike)
            .map(|(xi, ui)| self.a * xi + p * ui)
            .collect())
    }

    /// `x^T Gamma y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        check_dim(self.dim(), y.len())?;
        Ok(self.a * dot(x, y) + self.b * (dot(&self.spike, x) * dot(&self.spike, y)))
    }

    pub fn inverse(&self) -> SpikedCovariance {
        let a = self.a.recip();
        let b = -self.b / (self.a * (self.a + self.b));
        SpikedCovariance {
            a,
            b,
            spike: self.spike.clone(),
        }
    }

    pub fn sqrt(&self) -> SpikedCovariance {
        let ra = self.a.sqrt();
        SpikedCovariance {
            a: ra,
            b: (self.a + self.b).sqrt() - ra,
            spike: self.spike.clone(),
        }
    }

    pub fn log_det(&self) -> f64 {
        (self.dim() as f64 - 1.0) * self.a.ln() + (self.a + self.b).ln()
    }

    /// `count` i.i.d. rows drawn from `N(0, Gamma / d)`.
    pub fn sample_weights(&self, count: usize, rng: &mut SeededStream) -> Result<DMatrix<f64>> {
        if count == 0 {
            return Err(Error::InvalidArgument(
                "sample count must be at least 1".into(),
            ));
        }
        let d = self.dim();
        let mut out = DMatrix::zeros(count, d);
        let mut xi = vec![0.0; d];
        let mut row = vec![0.0; d];
        for r in 0..count {
            self.sample_into(rng, &mut xi, &mut row);
            for (j, v) in row.iter().enumerate() {
                out[(r, j)] = *v;
            }
        }
        Ok(out)
    }

    /// Draws one weight vector into `out` (length `d`), using `xi` as scratch.
    pub(crate) fn sample_into(&self, rng: &mut SeededStream, xi: &mut [f64], out: &mut [f64]) {
        let scale = (self.dim() as f64).sqrt().recip();
        let ra = self.a.sqrt() * scale;
        let rb = ((self.a + self.b).sqrt() - self.a.sqrt()) * scale;
        rng.fill_standard_normal(xi);
        let p = rb * dot(&self.spike, xi);
        for ((o, x), u) in out.iter_mut().zip(xi.iter()).zip(&self.spike) {
            *o = ra * x + p * u;
        }
    }
}

/// Proportional-regime training configuration: `n = alpha d` samples,
/// `m = beta d` neurons, step size `eta = eta_tilde d^zeta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConfig {
    pub alpha: f64,
    pub beta: f64,
    pub zeta: f64,
    pub eta_tilde: f64,
    pub noise_var: f64,
    pub dim: usize,
}

impl LearningConfig {
    pub fn new(
        alpha: f64,
        beta: f64,
        zeta: f64,
        eta_tilde: f64,
        noise_var: f64,
        dim: usize,
    ) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            zeta,
            eta_tilde,
            noise_var,
            dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `eta_tilde = 0` is allowed and means no update.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(0.5..1.0).contains(&self.zeta) {
            return Err(Error::InvalidArgument(format!(
                "zeta must lie in [1/2, 1), got {}",
                self.zeta
            )));
        }
        if !(self.eta_tilde >= 0.0 && self.eta_tilde.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "eta_tilde must be nonnegative, got {}",
                self.eta_tilde
            )));
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise_var must be nonnegative, got {}",
                self.noise_var
            )));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be positive".into()));
        }
        Ok(())
    }

    pub fn eta(&self) -> f64 {
        self.eta_tilde * (self.dim as f64).powf(self.zeta)
    }

    /// Sample count `n = round(alpha d)`, at least 1.
    pub fn n(&self) -> usize {
        ((self.alpha * self.dim as f64).round() as usize).max(1)
    }

    /// Width `m = round(beta d)`, at least 1.
    pub fn m(&self) -> usize {
        ((self.beta * self.dim as f64).round() as usize).max(1)
    }
}

/// `(A, B)` of the post-step feature law:
///
/// ```text
/// lambda = mu1^2 / (alpha beta^2)
/// A = 1 + (eta^2 lambda / d^2) (E[g^2] + noise_var)
/// B = (eta^2 / d) (mu1^4 / (alpha beta^2)) (alpha - 1/d + 2 s / (mu1^2 d))
/// ```
pub fn coefficients_from_config(cfg: &LearningConfig, link: &LinkFunction) -> Result<(f64, f64)> {
    cfg.validate()?;
    if cfg.eta_tilde == 0.0 {
        return Ok((1.0, 0.0));
    }
    let mu1 = link.mu1()?;
    if mu1.abs() < 1e-12 {
        return Err(Error::DegenerateLink(mu1));
    }
    let d = cfg.dim as f64;
    let eta2 = cfg.eta() * cfg.eta();
    let ab2 = cfg.alpha * cfg.beta * cfg.beta;
    let lambda = mu1 * mu1 / ab2;
    let a = 1.0 + eta2 * lambda / (d * d) * (link.second_moment()? + cfg.noise_var);
    let s = link.s_coefficient()?;
    let b = eta2 / d * mu1.powi(4) / ab2 * (cfg.alpha - 1.0 / d + 2.0 * s / (mu1 * mu1 * d));
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense(g: &SpikedCovariance) -> DMatrix<f64> {
        let d = g.dim();
        DMatrix::from_fn(d, d, |i, j| {
            g.b() * g.spike()[i] * g.spike()[j] + if i == j { g.a() } else { 0.0 }
        })
    }

    fn random_cov(seed: u64, d: usize) -> SpikedCovariance {
        let mut rng = SeededStream::new(seed, 0);
        let u = rng.standard_normal_vec(d);
        let a = 0.2 + 2.0 * rng.uniform();
        let b = -0.9 * a + 10.0 * rng.uniform();
        SpikedCovariance::new(a, b, &u).unwrap()
    }

    #[test]
    fn construction_errors() {
        assert!(matches!(
            SpikedCovariance::new(0.0, 1.0, &[1.0]),
            Err(Error::NonPositiveDefinite { .. })
        ));
        assert!(matches!(
            SpikedCovariance::new(1.0, -1.0, &[1.0]),
            Err(Error::NonPositiveDefinite { .. })
        ));
        assert!(matches!(
            SpikedCovariance::new(1.0, 1.0, &[0.0, 0.0]),
            Err(Error::ZeroSpike)
        ));
        let g = SpikedCovariance::new(1.0, 0.0, &[0.0, 0.0]).unwrap();
        assert_eq!(g.matvec(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
        let g = SpikedCovariance::new(2.0, 1.0, &[0.0, 3.0]).unwrap();
        assert_eq!(g.spike(), &[0.0, 1.0]);
    }

    #[test]
    fn small_examples() {
        let e1 = [1.0, 0.0, 0.0];
        let g = SpikedCovariance::new(2.0, 2.0, &e1).unwrap();
        assert_eq!(g.matvec(&e1).unwrap(), vec![4.0, 0.0, 0.0]);
        assert_eq!(g.matvec(&[0.0, 1.0, 0.0]).unwrap(), vec![0.0, 2.0, 0.0]);
        assert!((g.log_det() - 16f64.ln()).abs() < 1e-15);
        let inv = g.inverse();
        assert_eq!((inv.a(), inv.b()), (0.5, -0.25));
        let s = SpikedCovariance::new(1.0, 3.0, &e1).unwrap().sqrt();
        assert_eq!((s.a(), s.b()), (1.0, 1.0));
        assert_eq!(
            SpikedCovariance::new(4.0, 0.0, &e1).unwrap().sqrt().a(),
            2.0
        );
        let g = SpikedCovariance::new(2.0, 3.0, &[1.0, 0.0]).unwrap();
        assert_eq!(g.matvec(&[1.0, 0.0]).unwrap(), vec![5.0, 0.0]);
        assert!(g.matvec(&[1.0]).is_err());
        assert_eq!(SpikedCovariance::isotropic(1.0, 7).unwrap().log_det(), 0.0);
    }

    #[test]
    fn experiment_covariance() {
        let d = 300;
        let mut u = vec![0.0; d];
        u[5] = 1.0;
        let g = SpikedCovariance::new(1.2, 5.0 * (d as f64).sqrt(), &u).unwrap();
        assert!((g.min_eigenvalue() - 1.2).abs() < 1e-15);
        assert!((g.bilinear(&u, &u).unwrap() - (1.2 + 5.0 * 300f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn dense_oracles() {
        for seed in 0..20 {
            let d = 2 + (seed as usize * 3) % 63;
            let g = random_cov(seed, d);
            let gm = dense(&g);
            let eye = DMatrix::<f64>::identity(d, d);
            let prod = &gm * dense(&g.inverse());
            assert!((prod - &eye).amax() < 1e-12, "inverse, d = {d}");
            let r = dense(&g.sqrt());
            assert!((&r * &r - &gm).amax() < 1e-12 * gm.amax(), "sqrt, d = {d}");
            let ld = gm.clone().lu().determinant().ln();
            assert!(
                (g.log_det() - ld).abs() < 1e-10 * ld.abs().max(1.0),
                "log det, d = {d}"
            );
            let mut rng = SeededStream::new(seed, 1);
            let x = rng.standard_normal_vec(d);
            let want = &gm * nalgebra::DVector::from_vec(x.clone());
            let got = g.matvec(&x).unwrap();
            for i in 0..d {
                assert!((got[i] - want[i]).abs() < 1e-12 * want.amax().max(1.0));
            }
        }
    }

    #[test]
    fn sampling_rejects_zero_count() {
        let g = SpikedCovariance::isotropic(1.0, 3).unwrap();
        assert!(g.sample_weights(0, &mut SeededStream::new(0, 0)).is_err());
    }

    #[test]
    fn coefficient_examples() {
        let cfg = LearningConfig::new(1.0, 1.0, 0.5, 1.0, 0.0, 100).unwrap();
        let (a, b) = coefficients_from_config(&cfg, &LinkFunction::Identity).unwrap();
        assert!(
            (a - 1.01).abs() < 1e-13 && (b - 1.01).abs() < 1e-13,
            "{a} {b}"
        );
        // ReLU: mu1 = 1/2, s = 1/2, E[g^2] = 1/2; eta^2 = d
        let (a, b) = coefficients_from_config(&cfg, &LinkFunction::Relu).unwrap();
        let d = 100.0;
        let want_a = 1.0 + d * 0.25 / (d * d) * 0.5;
        let want_b = 0.0625 * (1.0 - 1.0 / d + 2.0 * 0.5 / (0.25 * d));
        assert!(
            (a - want_a).abs() < 1e-13 && (b - want_b).abs() < 1e-13,
            "{a} {b}"
        );
        let zero = LearningConfig::new(1.0, 1.0, 0.5, 0.0, 0.0, 100).unwrap();
        assert_eq!(
            coefficients_from_config(&zero, &LinkFunction::Quadratic).unwrap(),
            (1.0, 0.0)
        );
        assert!(matches!(
            coefficients_from_config(&cfg, &LinkFunction::Quadratic),
            Err(Error::DegenerateLink(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(LearningConfig::new(1.0, 1.0, 1.0, 1.0, 0.0, 10).is_err());
        assert!(LearningConfig::new(1.0, 1.0, 0.4, 1.0, 0.0, 10).is_err());
        assert!(LearningConfig::new(0.0, 1.0, 0.5, 1.0, 0.0, 10).is_err());
        assert!(LearningConfig::new(1.0, 1.0, 0.5, -1.0, 0.0, 10).is_err());
        let c = LearningConfig::new(2.0, 0.5, 0.5, 1.0, 0.0, 100).unwrap();
        assert_eq!((c.n(), c.m()), (200, 50));
        assert!((c.eta() - 10.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn quadratic_form_bounded_below(seed in 0u64..1000, d in 1usize..40) {
            let g = random_cov(seed, d);
            let mut rng = SeededStream::new(seed, 9);
            let x = rng.standard_normal_vec(d);
            let q = g.bilinear(&x, &x).unwrap();
            prop_assert!(q >= g.min_eigenvalue() * dot(&x, &x) - 1e-10);
        }

        #[test]
        fn inverse_and_sqrt_round_trip(seed in 0u64..1000, d in 1usize..40) {
            let g = random_cov(seed, d);
            let x = SeededStream::new(seed, 5).standard_normal_vec(d);
            let back = g.inverse().matvec(&g.matvec(&x).unwrap()).unwrap();
            let r = g.sqrt();
            let twice = r.matvec(&r.matvec(&x).unwrap()).unwrap();
            let gx = g.matvec(&x).unwrap();
            let scale = dot(&x, &x).sqrt() * (g.a() + g.b().abs());
            for i in 0..d {
                prop_assert!((back[i] - x[i]).abs() <= 1e-12 * dot(&x, &x).sqrt() * (1.0 + g.a().recip() * g.b().abs()));
                prop_assert!((twice[i] - gx[i]).abs() <= 1e-12 * scale);
            }
        }

        #[test]
        fn b_dominates_for_nondegenerate_links(alpha in 1.0f64..8.0, beta in 0.1f64..4.0, zeta in 0.5f64..0.99, eta in 0.01f64..5.0, d in 4usize..5000) {
            for link in [LinkFunction::Identity, LinkFunction::Relu, LinkFunction::PaperTarget] {
                let cfg = LearningConfig::new(alpha, beta, zeta, eta, 0.0, d).unwrap();
                let (_, b) = coefficients_from_config(&cfg, &link).unwrap();
                prop_assert!(b > 0.0);
            }
        }
    }
}

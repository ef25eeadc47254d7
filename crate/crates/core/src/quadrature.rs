//! Gauss–Hermite rules for expectations under the standard normal law.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Node count used for every link statistic.
pub const DEFAULT_NODES: usize = 200;

/// A Gauss–Hermite rule rescaled to the probabilists' weight, so that
/// `sum_i weights[i] * f(nodes[i])` approximates `E[f(Z)]`, `Z ~ N(0, 1)`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Builds an `n`-node rule. Nodes of the physicists' rule (weight
    /// `exp(-x^2)`) start from the eigenvalues of the Jacobi matrix and are
    /// polished by Newton steps on the orthonormal Hermite recurrence, which
    /// also yields the weights; then `x -> sqrt(2) x`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Hermite rule needs at least one node");
        const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
        let jacobi = nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i.abs_diff(j) == 1 {
                (i.max(j) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let mut guesses: Vec<f64> = jacobi.symmetric_eigenvalues().iter().copied().collect();
        guesses.sort_by(|a, b| b.total_cmp(a));
        let nf = n as f64;
        // orthonormal p_n(z) and the derivative scale sqrt(2n) p_{n-1}(z)
        let eval = |z: f64| {
            let mut p1 = PIM4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            (p1, (2.0 * nf).sqrt() * p2)
        };
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = if n % 2 == 1 && i == n / 2 {
                0.0
            } else {
                guesses[i]
            };
            let mut pp = eval(z).1;
            for _ in 0..20 {
                let (p, dp) = eval(z);
                pp = dp;
                let step = p / dp;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    pp = eval(z).1;
                    break;
                }
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        let scale = std::f64::consts::PI.sqrt().recip();
        let nodes = x.iter().map(|v| v * std::f64::consts::SQRT_2).collect();
        let weights = w.iter().map(|v| v * scale).collect();
        Self { nodes, weights }
    }

    /// The shared 200-node rule.
    pub fn standard() -> &'static GaussHermite {
        static RULE: OnceLock<GaussHermite> = OnceLock::new();
        RULE.get_or_init(|| GaussHermite::new(DEFAULT_NODES))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `E[f(Z)]` for `Z ~ N(0, 1)`. Fails if any evaluated term is not finite.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        // Summed from the tails inward so the tiny outer weights are not swamped.
        let mut acc = 0.0;
        let mut comp = 0.0;
        let n = self.nodes.len();
        let order = (0..n.div_ceil(2)).flat_map(|i| {
            let j = n - 1 - i;
            if i == j {
                vec![i]
            } else {
                vec![i, j]
            }
        });
        for i in order {
            let term = self.weights[i] * f(self.nodes[i]);
            if !term.is_finite() {
                return Err(Error::QuadratureFailure);
            }
            // Neumaier compensated sum
            let t = acc + term;
            if acc.abs() >= term.abs() {
                comp += (acc - t) + term;
            } else {
                comp += (term - t) + acc;
            }
            acc = t;
        }
        let total = acc + comp;
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::QuadratureFailure)
        }
    }
}

/// Standard normal density.
pub fn normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal distribution function, accurate in both tails.
pub fn normal_cdf(t: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// `[E[Z^k 1{a < Z < b}]]` for `k = 0..=4`; the endpoints may be infinite.
pub fn truncated_moments(a: f64, b: f64) -> [f64; 5] {
    // t^k phi(t) at an endpoint, vanishing at +-infinity
    let edge = |t: f64, k: i32| -> f64 {
        if t.is_infinite() {
            0.0
        } else {
            t.powi(k) * normal_pdf(t)
        }
    };
    let m0 = normal_cdf(b) - normal_cdf(a);
    let m1 = edge(a, 0) - edge(b, 0);
    let m2 = m0 + edge(a, 1) - edge(b, 1);
    let m3 = 2.0 * m1 + edge(a, 2) - edge(b, 2);
    let m4 = 3.0 * m2 + edge(a, 3) - edge(b, 3);
    [m0, m1, m2, m3, m4]
}

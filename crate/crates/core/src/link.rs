//! Scalar link functions and their Gaussian statistics.
//!
//! For `Z ~ N(0, 1)` every link exposes
//!
//! ```text
//! mu1           = E[g'(Z)]
//! s             = (1/2) E[(Z^2 - 1) g(Z)^2]
//! second_moment = E[g(Z)^2]
//! ```
//!
//! `s` equals `E[g'(Z)^2] + E[g(Z) g''(Z)]` for smooth links; the form above
//! needs no second derivative, so kinked and discontinuous links are handled
//! the same way. Smooth links and ReLU go through the shared Gauss–Hermite
//! rule (ReLU is exact there because the rule is symmetric with no node at
//! zero). Indicator and table links use closed truncated-normal moments.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::quadrature::{normal_cdf, truncated_moments, GaussHermite};

#[derive(Debug, Clone, PartialEq)]
pub enum LinkFunction {
    Identity,
    Quadratic,
    Relu,
    /// `exp(-t^2 / 2)`
    GaussBump,
    /// `1{|t| < 1}`
    IndicatorInside,
    /// `1{|t| >= 1}`
    IndicatorOutside,
    /// `2 t^2 + 3 t + 4 sin(2 t)`
    PaperTarget,
    /// Piecewise linear through `(knots[k], values[k])`, constant outside.
    Table {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl LinkFunction {
    pub fn table(knots: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidArgument(
                "table link needs at least one knot".into(),
            ));
        }
        if knots.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: knots.len(),
                got: values.len(),
            });
        }
        if knots.iter().chain(&values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "table link entries must be finite".into(),
            ));
        }
        if knots.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "table knots must be strictly increasing".into(),
            ));
        }
        Ok(LinkFunction::Table { knots, values })
    }

    /// Every named (non-table) link.
    pub fn catalogue() -> Vec<LinkFunction> {
        vec![
            LinkFunction::Identity,
            LinkFunction::Quadratic,
            LinkFunction::Relu,
            LinkFunction::GaussBump,
            LinkFunction::IndicatorInside,
            LinkFunction::IndicatorOutside,
            LinkFunction::PaperTarget,
        ]
    }

    pub fn name(&self) -> &'static str {
        match self {
            LinkFunction::Identity => "identity",
            LinkFunction::Quadratic => "quadratic",
            LinkFunction::Relu => "relu",
            LinkFunction::GaussBump => "gauss_bump",
            LinkFunction::IndicatorInside => "indicator_inside",
            LinkFunction::IndicatorOutside => "indicator_outside",
            LinkFunction::PaperTarget => "paper_target",
            LinkFunction::Table { .. } => "table",
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            LinkFunction::Identity => t,
            LinkFunction::Quadratic => t * t,
            LinkFunction::Relu => t.max(0.0),
            LinkFunction::GaussBump => (-0.5 * t * t).exp(),
            LinkFunction::IndicatorInside => f64::from(u8::from(t.abs() < 1.0)),
            LinkFunction::IndicatorOutside => f64::from(u8::from(t.abs() >= 1.0)),
            LinkFunction::PaperTarget => 2.0 * t * t + 3.0 * t + 4.0 * (2.0 * t).sin(),
            LinkFunction::Table { knots, values } => {
                let last = knots.len() - 1;
                if t <= knots[0] {
                    return values[0];
                }
                if t >= knots[last] {
                    return values[last];
                }
                let k = knots.partition_point(|&x| x <= t) - 1;
                let slope = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
                values[k] + slope * (t - knots[k])
            }
        }
    }

    /// Almost-everywhere derivative; jumps contribute nothing, and ReLU uses
    /// `g'(0) = 1`.
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            LinkFunction::Identity => 1.0,
            LinkFunction::Quadratic => 2.0 * t,
            LinkFunction::Relu => f64::from(u8::from(t >= 0.0)),
            LinkFunction::GaussBump => -t * (-0.5 * t * t).exp(),
            LinkFunction::IndicatorInside | LinkFunction::IndicatorOutside => 0.0,
            LinkFunction::PaperTarget => 4.0 * t + 3.0 + 8.0 * (2.0 * t).cos(),
            LinkFunction::Table { knots, values } => {
                let last = knots.len() - 1;
                if t < knots[0] || t >= knots[last] {
                    return 0.0;
                }
                let k = knots.partition_point(|&x| x <= t) - 1;
                (values[k + 1] - values[k]) / (knots[k + 1] - knots[k])
            }
        }
    }

    /// First Hermite coefficient `E[g'(Z)]`.
    pub fn mu1(&self) -> Result<f64> {
        match self {
            LinkFunction::IndicatorInside | LinkFunction::IndicatorOutside => Ok(0.0),
            LinkFunction::Table { knots, values } => Ok(knots
                .windows(2)
                .zip(values.windows(2))
                .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]) * (normal_cdf(k[1]) - normal_cdf(k[0])))
                .sum()),
            _ => GaussHermite::standard().expectation(|t| self.derivative(t)),
        }
    }

    /// `(1/2) E[(Z^2 - 1) g(Z)^2]`.
    pub fn s_coefficient(&self) -> Result<f64> {
        match self {
            LinkFunction::IndicatorInside => {
                let m = truncated_moments(-1.0, 1.0);
                Ok(0.5 * (m[2] - m[0]))
            }
            LinkFunction::IndicatorOutside => {
                let lo = truncated_moments(f64::NEG_INFINITY, -1.0);
                let hi = truncated_moments(1.0, f64::INFINITY);
                Ok(0.5 * (lo[2] - lo[0] + hi[2] - hi[0]))
            }
            LinkFunction::Table { .. } => Ok(0.5
                * self.table_moment(|m, c0, c1| {
                    c0 * c0 * (m[2] - m[0])
                        + 2.0 * c0 * c1 * (m[3] - m[1])
                        + c1 * c1 * (m[4] - m[2])
                })),
            _ => Ok(0.5
                * GaussHermite::standard().expectation(|t| {
                    let g = self.eval(t);
                    (t * t - 1.0) * g * g
                })?),
        }
    }

    /// `E[g(Z)^2]`.
    pub fn second_moment(&self) -> Result<f64> {
        match self {
            LinkFunction::IndicatorInside => Ok(truncated_moments(-1.0, 1.0)[0]),
            LinkFunction::IndicatorOutside => Ok(1.0 - truncated_moments(-1.0, 1.0)[0]),
            LinkFunction::Table { .. } => Ok(self
                .table_moment(|m, c0, c1| c0 * c0 * m[0] + 2.0 * c0 * c1 * m[1] + c1 * c1 * m[2])),
            _ => GaussHermite::standard().expectation(|t| {
                let g = self.eval(t);
                g * g
            }),
        }
    }

    /// Sums `piece(moments, c0, c1)` over the pieces `g(t) = c0 + c1 t` of a table link.
    fn table_moment<F: Fn(&[f64; 5], f64, f64) -> f64>(&self, piece: F) -> f64 {
        let LinkFunction::Table { knots, values } = self else {
            unreachable!("table_moment on a non-table link")
        };
        let last = knots.len() - 1;
        let mut total = piece(
            &truncated_moments(f64::NEG_INFINITY, knots[0]),
            values[0],
            0.0,
        );
        for k in 0..last {
            let slope = (values[k + 1] - values[k]) / (knots[k + 1] - knots[k]);
            let c0 = values[k] - slope * knots[k];
            total += piece(&truncated_moments(knots[k], knots[k + 1]), c0, slope);
        }
        total
            + piece(
                &truncated_moments(knots[last], f64::INFINITY),
                values[last],
                0.0,
            )
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LinkFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LinkFunction::catalogue()
            .into_iter()
            .find(|l| l.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown link function `{s}`")))
    }
}

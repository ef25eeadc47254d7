//! First-order expansion of the spiked ReLU kernel in the spike strength:
//!
//! ```text
//! k1(x, x') = A k0(x, x') + (B / 2d) S(x, x') + R(x, x')
//! S = ((pi - t) / pi) <x,u> <x',u>
//!   + (sin t / 2 pi) (|x'|/|x| <x,u>^2 + |x|/|x'| <x',u>^2)
//! ```
//!
//! where `t` is the angle between `x` and `x'`. The residual `R` is only
//! ever measured, never expanded symbolically.

use rayon::prelude::*;

use crate::covariance::{dot, SpikedCovariance};
use crate::error::{check_dim, Error, Result};
use crate::kernels::{k0_relu, k1_relu};
use crate::rng::SeededStream;
use crate::tabular::{float, CsvTable};

/// Angle between two nonzero vectors, `2 atan2(|x^ - y^|, |x^ + y^|)`,
/// accurate for nearly parallel and nearly opposite pairs.
pub fn angle(x: &[f64], xp: &[f64]) -> Result<f64> {
    check_dim(x.len(), xp.len())?;
    let nx = dot(x, x).sqrt();
    let ny = dot(xp, xp).sqrt();
    if !(nx > 0.0 && ny > 0.0) {
        return Err(Error::ZeroVector);
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(xp) {
        let (p, q) = (a / nx, b / ny);
        diff += (p - q) * (p - q);
        sum += (p + q) * (p + q);
    }
    Ok(2.0 * diff.sqrt().atan2(sum.sqrt()))
}

/// The first-order term `S` for ReLU.
pub fn s_term_relu(x: &[f64], xp: &[f64], w_star: &[f64]) -> Result<f64> {
    check_dim(x.len(), w_star.len())?;
    let theta = angle(x, xp)?;
    let (nx, ny) = (dot(x, x).sqrt(), dot(xp, xp).sqrt());
    let (px, py) = (dot(x, w_star), dot(xp, w_star));
    let pi = std::f64::consts::PI;
    Ok((pi - theta) / pi * (px * py)
        + theta.sin() / (2.0 * pi) * (ny / nx * px * px + nx / ny * py * py))
}

/// `A k0(x, x') + (B / 2d) S(x, x')`.
pub fn first_order_prediction(
    x: &[f64],
    xp: &[f64],
    a_coef: f64,
    b_coef: f64,
    w_star: &[f64],
) -> Result<f64> {
    let d = x.len() as f64;
    Ok(a_coef * k0_relu(x, xp)? + b_coef / (2.0 * d) * s_term_relu(x, xp, w_star)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpansionTerm {
    pub order: usize,
    /// `(B / 2d)^j / j!`
    pub coefficient: f64,
    pub value: f64,
}

/// The order-0 and order-1 terms for ReLU: `(1, A k0)` and `(B / 2d, S)`.
pub fn relu_expansion_terms(
    x: &[f64],
    xp: &[f64],
    g: &SpikedCovariance,
) -> Result<[ExpansionTerm; 2]> {
    check_dim(g.dim(), x.len())?;
    let d = g.dim() as f64;
    Ok([
        ExpansionTerm {
            order: 0,
            coefficient: 1.0,
            value: g.a() * k0_relu(x, xp)?,
        },
        ExpansionTerm {
            order: 1,
            coefficient: g.b() / (2.0 * d),
            value: s_term_relu(x, xp, g.spike())?,
        },
    ])
}

/// `k1 - A k0 - (B / 2d) S`.
pub fn residual(x: &[f64], xp: &[f64], g: &SpikedCovariance) -> Result<f64> {
    let [t0, t1] = relu_expansion_terms(x, xp, g)?;
    Ok(k1_relu(x, xp, g)? - t0.value - t1.coefficient * t1.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualRow {
    pub d: usize,
    pub b_value: f64,
    pub max_residual: f64,
    pub mean_residual: f64,
    /// `B^2 / d^2`
    pub predicted_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProbe {
    pub rows: Vec<ResidualRow>,
    /// Log-log slope of `max_residual` against `predicted_scale`; `None`
    /// when a scale or residual is zero.
    pub slope: Option<f64>,
}

impl ResidualProbe {
    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&[
            "d",
            "b_value",
            "max_residual",
            "mean_residual",
            "predicted_scale",
        ]);
        for r in &self.rows {
            t.push(vec![
                r.d.to_string(),
                float(r.b_value),
                float(r.max_residual),
                float(r.mean_residual),
                float(r.predicted_scale),
            ]);
        }
        t
    }
}

/// Least-squares slope of `ys` on `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// For each `d`, sets `B = b_scale d^b_exponent`, draws `pairs_per_d`
/// standard Gaussian pairs and a uniform spike direction, and records
/// `|k1 - A k0 - (B/2d) S|`. Pair `p` at dimension index `i` always uses
/// substream `(i, p)` of the stream split off `rng`.
pub fn residual_decay_probe(
    d_list: &[usize],
    b_scale: f64,
    b_exponent: f64,
    a_coef: f64,
    pairs_per_d: usize,
    rng: &mut SeededStream,
) -> Result<ResidualProbe> {
    if d_list.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "residual fit needs at least 3 dimensions, got {}",
            d_list.len()
        )));
    }
    if d_list.windows(2).any(|w| w[0] >= w[1]) || d_list[0] < 2 {
        return Err(Error::InvalidArgument(
            "dimensions must be increasing and at least 2".into(),
        ));
    }
    if pairs_per_d == 0 {
        return Err(Error::InvalidArgument(
            "pairs_per_d must be positive".into(),
        ));
    }
    let base = rng.split();
    let mut rows = Vec::with_capacity(d_list.len());
    for (i, &d) in d_list.iter().enumerate() {
        let df = d as f64;
        let b = b_scale * df.powf(b_exponent);
        let dim_stream = base.substream(i as u64);
        let u = dim_stream.substream(u64::MAX).standard_normal_vec(d);
        let g = SpikedCovariance::new(a_coef, b, &u)?;
        let res: Vec<f64> = (0..pairs_per_d)
            .into_par_iter()
            .map(|p| {
                let mut s = dim_stream.substream(p as u64);
                let x = s.standard_normal_vec(d);
                let xp = s.standard_normal_vec(d);
                residual(&x, &xp, &g).map(f64::abs)
            })
            .collect::<Result<_>>()?;
        rows.push(ResidualRow {
            d,
            b_value: b,
            max_residual: res.iter().copied().fold(0.0, f64::max),
            mean_residual: res.iter().sum::<f64>() / res.len() as f64,
            predicted_scale: b * b / (df * df),
        });
    }
    let usable = rows
        .iter()
        .all(|r| r.max_residual > 0.0 && r.predicted_scale > 0.0);
    let slope = usable.then(|| {
        let xs: Vec<f64> = rows.iter().map(|r| r.predicted_scale.ln()).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.max_residual.ln()).collect();
        ols_slope(&xs, &ys)
    });
    Ok(ResidualProbe { rows, slope })
}

/// Partial sum and closed form of
///
/// ```text
/// sum_{k >= i} C(2k, 2i) (2k - 2i - 1)!! / k! y^k = y^i / i! (1 - 2y)^{-(i + 1/2)}
/// ```
///
/// using `terms` terms (`k = i, ..., i + terms - 1`). Terms follow the ratio
/// `t_{k+1} / t_k = (2k + 1) y / (k + 1 - i)` from `t_i = y^i / i!` and are
/// summed with Neumaier compensation.
pub fn series_identity(i: u32, y: f64, terms: usize) -> Result<(f64, f64)> {
    if !(y.abs() < 0.5) {
        return Err(Error::Domain(format!("series needs |y| < 1/2, got {y}")));
    }
    if terms == 0 {
        return Err(Error::InvalidArgument("terms must be at least 1".into()));
    }
    let fi = f64::from(i);
    let mut lead = 1.0;
    for j in 1..=i {
        lead *= y / f64::from(j);
    }
    let closed = lead * (1.0 - 2.0 * y).powf(-(fi + 0.5));
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    let mut t = lead;
    for step in 0..terms {
        let s = sum + t;
        comp += if sum.abs() >= t.abs() {
            (sum - s) + t
        } else {
            (t - s) + sum
        };
        sum = s;
        let k = fi + step as f64;
        t *= (2.0 * k + 1.0) * y / (k + 1.0 - fi);
    }
    Ok((sum + comp, closed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(d: usize, k: usize) -> Vec<f64> {
        let mut e = vec![0.0; d];
        e[k] = 1.0;
        e
    }

    #[test]
    fn s_term_examples() {
        let u = unit(4, 0);
        assert_eq!(
            s_term_relu(&[0.0, 1.0, 2.0, 0.0], &[0.0, -1.0, 0.5, 3.0], &u).unwrap(),
            0.0
        );
        assert!((s_term_relu(&u, &u, &u).unwrap() - 1.0).abs() < 1e-15);
        let x = [3.0, 1.0, -2.0, 0.5];
        assert!((s_term_relu(&x, &x, &u).unwrap() - 9.0).abs() < 1e-13);
        assert!(matches!(
            s_term_relu(&[0.0; 4], &x, &u),
            Err(Error::ZeroVector)
        ));
    }

    #[test]
    fn angle_is_stable_near_endpoints() {
        let x = [1.0, 1e-9, 0.0];
        let y = [1.0, 0.0, 0.0];
        assert!((angle(&x, &y).unwrap() - 1e-9).abs() < 1e-20);
        let z = [-1.0, 1e-9, 0.0];
        assert!((angle(&z, &y).unwrap() - (std::f64::consts::PI - 1e-9)).abs() < 1e-15);
    }

    #[test]
    fn first_order_examples() {
        let mut rng = SeededStream::new(4, 0);
        let x = rng.standard_normal_vec(5);
        let xp = rng.standard_normal_vec(5);
        let u = unit(5, 2);
        let k0 = k0_relu(&x, &xp).unwrap();
        assert_eq!(
            first_order_prediction(&x, &xp, 1.3, 0.0, &u).unwrap(),
            1.3 * k0
        );
        let mut xo = x.clone();
        let mut xpo = xp.clone();
        xo[2] = 0.0;
        xpo[2] = 0.0;
        let k0o = k0_relu(&xo, &xpo).unwrap();
        assert_eq!(
            first_order_prediction(&xo, &xpo, 1.3, 7.0, &u).unwrap(),
            1.3 * k0o
        );
    }

    #[test]
    fn s_matches_derivative_of_k1() {
        // S = 2d dk1/dB at B = 0 with A = 1; central difference oracle
        for seed in 0..20 {
            let d = 10;
            let mut rng = SeededStream::new(seed, 3);
            let x = rng.standard_normal_vec(d);
            let xp = rng.standard_normal_vec(d);
            let u = rng.standard_normal_vec(d);
            let g = SpikedCovariance::new(1.0, 1.0, &u).unwrap();
            let h = 1e-5;
            let kp = k1_relu(&x, &xp, &SpikedCovariance::new(1.0, h, &u).unwrap()).unwrap();
            let km = k1_relu(&x, &xp, &SpikedCovariance::new(1.0, -h, &u).unwrap()).unwrap();
            let fd = (kp - km) / (2.0 * h) * 2.0 * d as f64;
            let s = s_term_relu(&x, &xp, g.spike()).unwrap();
            assert!((fd - s).abs() < 1e-7 * s.abs().max(1.0), "{fd} vs {s}");
        }
    }

    #[test]
    fn s_matches_monte_carlo_of_hermite_identities() {
        // 2 E[s'(<w,x>) s'(<w,x'>)] <x,u><x',u> by MC, delta terms in closed form
        let d = 10;
        let mut rng = SeededStream::new(11, 0);
        let x = rng.standard_normal_vec(d);
        let xp = rng.standard_normal_vec(d);
        let mut u = rng.standard_normal_vec(d);
        let nu = dot(&u, &u).sqrt();
        u.iter_mut().for_each(|v| *v /= nu);
        let n = 400_000;
        let mut hits = 0.0;
        let mut w = vec![0.0; d];
        for _ in 0..n {
            rng.fill_standard_normal(&mut w);
            if dot(&w, &x) >= 0.0 && dot(&w, &xp) >= 0.0 {
                hits += 1.0;
            }
        }
        let p = hits / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        let (px, py) = (dot(&x, &u), dot(&xp, &u));
        let theta = angle(&x, &xp).unwrap();
        let (nx, ny) = (dot(&x, &x).sqrt(), dot(&xp, &xp).sqrt());
        let delta_part =
            theta.sin() / (2.0 * std::f64::consts::PI) * (ny / nx * px * px + nx / ny * py * py);
        let mc = 2.0 * p * px * py + delta_part;
        let exact = s_term_relu(&x, &xp, &u).unwrap();
        assert!(
            (mc - exact).abs() < 4.0 * 2.0 * se * (px * py).abs() + 1e-12,
            "{mc} vs {exact}"
        );
    }

    #[test]
    fn first_order_error_is_quadratic_in_b() {
        let d = 200;
        let b = 5.0 * (d as f64).powf(0.3);
        let mut rng = SeededStream::new(21, 0);
        let u = rng.standard_normal_vec(d);
        let g = SpikedCovariance::new(1.0, b, &u).unwrap();
        for _ in 0..50 {
            let x = rng.standard_normal_vec(d);
            let xp = rng.standard_normal_vec(d);
            let r = residual(&x, &xp, &g).unwrap();
            assert!(r.abs() <= 10.0 * b * b / (d * d) as f64, "{r}");
        }
    }

    #[test]
    fn expansion_terms_layout() {
        let u = unit(3, 0);
        let g = SpikedCovariance::new(1.2, 6.0, &u).unwrap();
        let x = [1.0, 2.0, 0.0];
        let xp = [0.5, -1.0, 1.0];
        let [t0, t1] = relu_expansion_terms(&x, &xp, &g).unwrap();
        assert_eq!((t0.order, t1.order), (0, 1));
        assert_eq!(t0.value, 1.2 * k0_relu(&x, &xp).unwrap());
        assert_eq!(t1.coefficient, 1.0);
    }

    #[test]
    fn probe_contracts() {
        let mut rng = SeededStream::new(0, 0);
        assert!(matches!(
            residual_decay_probe(&[100], 5.0, 0.5, 1.2, 10, &mut rng),
            Err(Error::InsufficientData(_))
        ));
        let zero = residual_decay_probe(&[10, 20, 40], 0.0, 0.5, 1.2, 20, &mut rng).unwrap();
        assert!(zero.rows.iter().all(|r| r.max_residual < 1e-12));
        assert!(zero.slope.is_none());
        let csv = zero.to_csv().render();
        assert!(csv.starts_with("d,b_value,max_residual,mean_residual,predicted_scale\n10,"));
    }

    #[test]
    fn series_examples() {
        let (p, c) = series_identity(0, 0.25, 60).unwrap();
        assert!((c - 2f64.sqrt()).abs() < 1e-15);
        assert!((p - c).abs() < 1e-10);
        let (p, c) = series_identity(2, 0.1, 60).unwrap();
        assert!((c - 0.005 * 0.8f64.powf(-2.5)).abs() < 1e-17);
        assert!((p - c).abs() < 1e-10);
        assert!(matches!(series_identity(1, 0.6, 10), Err(Error::Domain(_))));
        assert!(matches!(
            series_identity(1, -0.5, 10),
            Err(Error::Domain(_))
        ));
        assert!(series_identity(1, 0.1, 0).is_err());
    }

    #[test]
    fn series_against_direct_binomial_sum() {
        // direct evaluation of C(2k,2i) (2k-2i-1)!! / k! for small k
        fn direct(i: u64, y: f64, kmax: u64) -> f64 {
            let fact = |n: u64| (1..=n).map(|v| v as f64).product::<f64>();
            let dfact = |n: i64| {
                let mut p = 1.0;
                let mut v = n;
                while v > 1 {
                    p *= v as f64;
                    v -= 2;
                }
                p
            };
            (i..=kmax)
                .map(|k| {
                    let binom = fact(2 * k) / (fact(2 * i) * fact(2 * k - 2 * i));
                    binom * dfact(2 * k as i64 - 2 * i as i64 - 1) / fact(k) * y.powi(k as i32)
                })
                .sum()
        }
        for i in 0..4u32 {
            for y in [-0.3, 0.1, 0.2] {
                let (p, _) = series_identity(i, y, 40).unwrap();
                let q = direct(u64::from(i), y, u64::from(i) + 39);
                assert!(
                    (p - q).abs() < 1e-12 * q.abs().max(1e-300),
                    "i={i} y={y}: {p} {q}"
                );
            }
        }
    }

    proptest! {
        #[test]
        fn s_is_symmetric_and_nonnegative_on_diagonal(seed in 0u64..5000, d in 2usize..20) {
            let mut rng = SeededStream::new(seed, 1);
            let x = rng.standard_normal_vec(d);
            let xp = rng.standard_normal_vec(d);
            let mut u = rng.standard_normal_vec(d);
            let nu = dot(&u, &u).sqrt();
            u.iter_mut().for_each(|v| *v /= nu);
            prop_assert_eq!(s_term_relu(&x, &xp, &u).unwrap(), s_term_relu(&xp, &x, &u).unwrap());
            let sxx = s_term_relu(&x, &x, &u).unwrap();
            prop_assert!((sxx - dot(&x, &u).powi(2)).abs() <= 1e-12 * sxx.max(1.0));
        }
    }
}

//! Gram matrices, eigendecompositions, harmonic features and the closed-form
//! eigenvalue predictions for the spiked ReLU kernel.
//!
//! Integral-operator eigenvalues are estimated by Nystrom scaling: an
//! eigenpair `(l, v)` of the `N x N` Gram matrix `K` stands for the operator
//! eigenvalue `l / N`, and `f^T K f / (N f^T f)` estimates the eigenvalue of
//! an eigenfunction sampled as `f`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::{dot, SpikedCovariance};
use crate::error::{check_dim, Error, Result};
use crate::kernels::arc_cosine;
use crate::tabular::{float, CsvTable};

const MAGIC: &[u8; 4] = b"SPEC";

/// Rows of an `N x d` point matrix as owned vectors.
pub fn point_rows(points: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..points.nrows())
        .map(|i| points.row(i).iter().copied().collect())
        .collect()
}

/// `K[k][l] = kernel(z_k, z_l)`, evaluated on the upper triangle and mirrored.
pub fn gram_matrix<F>(kernel: F, points: &DMatrix<f64>) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "Gram matrix needs at least 2 points, got {n}"
        )));
    }
    let rows = point_rows(points);
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            (k..n)
                .map(|l| kernel(&rows[k], &rows[l]))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut out = DMatrix::zeros(n, n);
    for (k, row) in upper.iter().enumerate() {
        for (off, v) in row.iter().enumerate() {
            out[(k, k + off)] = *v;
            out[(k + off, k)] = *v;
        }
    }
    Ok(out)
}

/// `x^T Gamma z` for every row pair, via one matrix product.
fn warped_inner(left: &DMatrix<f64>, right: &DMatrix<f64>, g: &SpikedCovariance) -> DMatrix<f64> {
    let mut ip = left * right.transpose();
    ip *= g.a();
    if g.b() != 0.0 {
        let u = DVector::from_column_slice(g.spike());
        let pl = left * &u;
        let pr = right * &u;
        ip.ger(g.b(), &pl, &pr, 1.0);
    }
    ip
}

fn nonzero_rows(points: &DMatrix<f64>) -> Result<()> {
    for i in 0..points.nrows() {
        if points.row(i).norm_squared() == 0.0 {
            return Err(Error::ZeroVector);
        }
    }
    Ok(())
}

/// ReLU Gram matrix of the spiked kernel (the baseline when `g` is the
/// identity), built from `X Gamma X^T`. Exactly symmetric.
pub fn relu_gram(points: &DMatrix<f64>, g: &SpikedCovariance) -> Result<DMatrix<f64>> {
    check_dim(g.dim(), points.ncols())?;
    nonzero_rows(points)?;
    let n = points.nrows();
    let ip = warped_inner(points, points, g);
    let d = g.dim() as f64;
    let mut out = DMatrix::zeros(n, n);
    for l in 0..n {
        for k in 0..=l {
            let v = arc_cosine(ip[(k, k)], ip[(l, l)], ip[(k, l)], d);
            out[(k, l)] = v;
            out[(l, k)] = v;
        }
    }
    Ok(out)
}

/// `M x N` ReLU cross-kernel between `test` rows and `train` rows.
pub fn relu_cross_gram(
    test: &DMatrix<f64>,
    train: &DMatrix<f64>,
    g: &SpikedCovariance,
) -> Result<DMatrix<f64>> {
    check_dim(g.dim(), test.ncols())?;
    check_dim(g.dim(), train.ncols())?;
    nonzero_rows(test)?;
    nonzero_rows(train)?;
    let ip = warped_inner(test, train, g);
    let qt: Vec<f64> = (0..test.nrows())
        .map(|i| quad(g, &test.row(i).transpose()))
        .collect();
    let qr: Vec<f64> = (0..train.nrows())
        .map(|i| quad(g, &train.row(i).transpose()))
        .collect();
    let d = g.dim() as f64;
    Ok(DMatrix::from_fn(test.nrows(), train.nrows(), |i, j| {
        arc_cosine(qt[i], qr[j], ip[(i, j)], d)
    }))
}

fn quad(g: &SpikedCovariance, x: &DVector<f64>) -> f64 {
    let p = dot(g.spike(), x.as_slice());
    g.a() * x.norm_squared() + g.b() * (p * p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    eigenvalues: Vec<f64>,
    eigenvectors: DMatrix<f64>,
}

impl SpectralReport {
    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// `N x count` matrix of orthonormal eigenvectors, column `i` pairing with eigenvalue `i`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.eigenvectors.column(i).iter().copied().collect()
    }

    pub fn matrix_dim(&self) -> usize {
        self.eigenvectors.nrows()
    }

    pub fn count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn to_csv(&self) -> CsvTable {
        let mut t = CsvTable::new(&["index", "eigenvalue"]);
        for (i, v) in self.eigenvalues.iter().enumerate() {
            t.push(vec![i.to_string(), float(*v)]);
        }
        t
    }

    /// `"SPEC"`, `u32` N, `u32` count, `u32` zero, then the eigenvectors as
    /// little-endian `f64`, column-major.
    pub fn write_vectors<W: Write>(&self, mut out: W) -> Result<()> {
        let n = u32::try_from(self.matrix_dim())
            .map_err(|_| Error::InvalidArgument("matrix too large".into()))?;
        let c = u32::try_from(self.count())
            .map_err(|_| Error::InvalidArgument("too many vectors".into()))?;
        out.write_all(MAGIC)?;
        out.write_all(&n.to_le_bytes())?;
        out.write_all(&c.to_le_bytes())?;
        out.write_all(&0u32.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.eigenvectors.len() * 8);
        for v in self.eigenvectors.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn save_vectors(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_vectors(std::io::BufWriter::new(file))
    }

    /// Reads a file written by [`SpectralReport::write_vectors`]; returns the
    /// `N x count` eigenvector matrix.
    pub fn read_vectors<R: Read>(mut input: R) -> Result<DMatrix<f64>> {
        let mut head = [0u8; 16];
        input.read_exact(&mut head)?;
        if &head[..4] != MAGIC {
            return Err(Error::InvalidArgument("not an eigenvector file".into()));
        }
        let word = |i: usize| {
            u32::from_le_bytes([head[i], head[i + 1], head[i + 2], head[i + 3]]) as usize
        };
        let (n, c) = (word(4), word(8));
        let mut body = Vec::new();
        input.read_to_end(&mut body)?;
        if body.len() != n * c * 8 {
            return Err(Error::InvalidArgument(format!(
                "eigenvector payload has {} bytes, expected {}",
                body.len(),
                n * c * 8
            )));
        }
        let vals: Vec<f64> = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        Ok(DMatrix::from_vec(n, c, vals))
    }
}

/// Full eigendecomposition with eigenvalues sorted in descending order.
pub fn eigh_descending(k: &DMatrix<f64>) -> Result<SpectralReport> {
    let n = k.nrows();
    check_dim(n, k.ncols())?;
    let eig = nalgebra::SymmetricEigen::try_new(k.clone(), f64::EPSILON, 0)
        .ok_or(Error::ConvergenceFailure)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(SpectralReport {
        eigenvalues,
        eigenvectors,
    })
}

/// The `count` largest eigenpairs of a symmetric positive semi-definite
/// matrix by block subspace iteration with Rayleigh–Ritz extraction.
/// Converged when every wanted residual `|K v - l v|` is below
/// `1e-10 |K|`; gives up with `ConvergenceFailure` after 500 sweeps.
pub fn leading_eigenpairs(k: &DMatrix<f64>, count: usize) -> Result<SpectralReport> {
    let n = k.nrows();
    check_dim(n, k.ncols())?;
    if count == 0 || count > n {
        return Err(Error::InvalidArgument(format!(
            "cannot extract {count} eigenpairs from a {n} x {n} matrix"
        )));
    }
    let block = (count + 8).min(n);
    if 4 * block >= n {
        let full = eigh_descending(k)?;
        return Ok(SpectralReport {
            eigenvalues: full.eigenvalues[..count].to_vec(),
            eigenvectors: full.eigenvectors.columns(0, count).into_owned(),
        });
    }
    // deterministic, generic start block
    let mut q = DMatrix::from_fn(n, block, |i, j| {
        let t =
            (i as f64 + 1.0) * 0.754_877_666_246_692_7 + (j as f64 + 1.0) * 0.569_840_290_998_053_3;
        t.fract() - 0.5
    });
    for _ in 0..500 {
        q = k * q;
        q = q.qr().q();
        let kq = k * &q;
        let h = q.transpose() * &kq;
        let h = (&h + h.transpose()) * 0.5;
        let eig = nalgebra::SymmetricEigen::try_new(h, f64::EPSILON, 0)
            .ok_or(Error::ConvergenceFailure)?;
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let s = DMatrix::from_fn(block, block, |r, c| eig.eigenvectors[(r, order[c])]);
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        q = &q * &s;
        let kv = &kq * &s;
        let scale = vals[0].abs().max(f64::MIN_POSITIVE);
        let converged =
            (0..count).all(|c| (kv.column(c) - q.column(c) * vals[c]).norm() <= 1e-10 * scale);
        if converged {
            return Ok(SpectralReport {
                eigenvalues: vals[..count].to_vec(),
                eigenvectors: q.columns(0, count).into_owned(),
            });
        }
    }
    Err(Error::ConvergenceFailure)
}

/// `|<v, f / |f|>|`.
pub fn alignment(v: &[f64], feature: &[f64]) -> Result<f64> {
    check_dim(v.len(), feature.len())?;
    let nf = dot(feature, feature).sqrt();
    if !(nf > 0.0) {
        return Err(Error::ZeroFeature);
    }
    Ok((dot(v, feature) / nf).abs().min(1.0))
}

/// `f^T K f / (N f^T f)`.
pub fn rayleigh_eigenvalue(k: &DMatrix<f64>, f: &[f64]) -> Result<f64> {
    let n = k.nrows();
    check_dim(n, f.len())?;
    let ff = dot(f, f);
    if !(ff > 0.0) {
        return Err(Error::ZeroVector);
    }
    let fv = DVector::from_column_slice(f);
    Ok(fv.dot(&(k * &fv)) / (n as f64 * ff))
}

/// Operator eigenvalues of the linear eigenfunctions: `(A + B) / 4d` along
/// the spike and `A / 4d` orthogonal to it.
pub fn predicted_linear_eigenvalues(a_coef: f64, b_coef: f64, d: usize) -> (f64, f64) {
    let d = d as f64;
    ((a_coef + b_coef) / (4.0 * d), a_coef / (4.0 * d))
}

/// `|Y2_hat|` in `L^2` of the uniform sphere: `(1/d) sqrt((2d - 2) / (d + 2))`.
pub fn y2_norm(d: usize) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "y2_norm needs d >= 2, got {d}"
        )));
    }
    let d = d as f64;
    Ok(((2.0 * d - 2.0) / (d + 2.0)).sqrt() / d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopEigenPrediction {
    /// First-order top eigenvalue `A l_max0 + B / (2 pi d)`.
    pub lambda_tilde: f64,
    /// Weight of the normalized quadratic harmonic in the top eigenfunction.
    pub tau: f64,
    /// Larger eigenvalue of the exact 2 x 2 coupling between the top mode and the quadratic mode.
    pub coupled_plus: f64,
    pub coupled_minus: f64,
}

/// First-order prediction for the top eigenpair of the spiked operator from
/// the baseline's top eigenvalue `l_max0` and quadratic-mode eigenvalue `l2`:
///
/// ```text
/// lambda_tilde = A l_max0 + B / (2 pi d)
/// tau = |Y2_hat| B / (4 pi (lambda_tilde - A l2))
/// ```
///
/// together with the eigenvalues of
/// `[[A l_max0 + B/(2 pi d), B (d-1) / (2 pi d^2 (d+2))], [B / (4 pi), A l2]]`.
pub fn predicted_top_eigenpair(
    a_coef: f64,
    b_coef: f64,
    d: usize,
    lambda_max0: f64,
    lambda2_0: f64,
) -> Result<TopEigenPrediction> {
    if !(lambda_max0 > lambda2_0 && lambda2_0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need lambda_max0 > lambda2 > 0, got {lambda_max0} and {lambda2_0}"
        )));
    }
    let norm = y2_norm(d)?;
    let df = d as f64;
    let pi = std::f64::consts::PI;
    let lambda_tilde = a_coef * lambda_max0 + b_coef / (2.0 * pi * df);
    let floor = a_coef * lambda2_0;
    if lambda_tilde <= floor {
        return Err(Error::GapCollapse {
            lambda_tilde,
            floor,
        });
    }
    let tau = norm * b_coef / (4.0 * pi * (lambda_tilde - floor));
    let m11 = lambda_tilde;
    let m12 = b_coef * (df - 1.0) / (2.0 * pi * df * df * (df + 2.0));
    let m21 = b_coef / (4.0 * pi);
    let m22 = floor;
    let half_tr = 0.5 * (m11 + m22);
    let disc = (0.25 * (m11 - m22) * (m11 - m22) + m12 * m21)
        .max(0.0)
        .sqrt();
    Ok(TopEigenPrediction {
        lambda_tilde,
        tau,
        coupled_plus: half_tr + disc,
        coupled_minus: half_tr - disc,
    })
}

/// Per-point harmonic features of a sample, with `omega = x / |x|`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicFeatures {
    /// Constant 1.
    pub y0: Vec<f64>,
    /// `<omega, w*>^2 - 1/d`.
    pub y2_hat: Vec<f64>,
    /// `<x, w*>`.
    pub psi_star: Vec<f64>,
    /// `|x| / sqrt(d)`.
    pub radial: Vec<f64>,
    dim: usize,
}

impl HarmonicFeatures {
    pub fn new(points: &DMatrix<f64>, w_star: &[f64]) -> Result<Self> {
        let d = points.ncols();
        check_dim(d, w_star.len())?;
        let nu = dot(w_star, w_star).sqrt();
        if !(nu > 0.0) {
            return Err(Error::ZeroVector);
        }
        let u = DVector::from_iterator(d, w_star.iter().map(|v| v / nu));
        let n = points.nrows();
        let proj = points * &u;
        let mut y2_hat = Vec::with_capacity(n);
        let mut radial = Vec::with_capacity(n);
        for i in 0..n {
            let r = points.row(i).norm();
            if r == 0.0 {
                return Err(Error::ZeroVector);
            }
            let c = proj[i] / r;
            y2_hat.push(c * c - 1.0 / d as f64);
            radial.push(r / (d as f64).sqrt());
        }
        Ok(Self {
            y0: vec![1.0; n],
            y2_hat,
            psi_star: proj.as_slice().to_vec(),
            radial,
            dim: d,
        })
    }

    /// `Y2 = Y2_hat / |Y2_hat|`, unit norm in `L^2` of the sphere.
    pub fn y2(&self) -> Vec<f64> {
        let norm = y2_norm(self.dim).expect("dimension checked at construction");
        self.y2_hat.iter().map(|v| v / norm).collect()
    }

    /// `radial * Y2`, the quadratic mode of the baseline kernel.
    pub fn radial_y2(&self) -> Vec<f64> {
        self.y2()
            .iter()
            .zip(&self.radial)
            .map(|(y, r)| y * r)
            .collect()
    }
}

/// Least-squares fit of a unit vector `v` on two features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeFit {
    pub coef_first: f64,
    pub coef_second: f64,
    /// Norm of the projection of `v` onto the span of both features.
    pub captured: f64,
}

pub fn two_mode_fit(v: &[f64], first: &[f64], second: &[f64]) -> Result<TwoModeFit> {
    check_dim(v.len(), first.len())?;
    check_dim(v.len(), second.len())?;
    let (a11, a12, a22) = (dot(first, first), dot(first, second), dot(second, second));
    let (b1, b2) = (dot(first, v), dot(second, v));
    let det = a11 * a22 - a12 * a12;
    if !(det > 1e-14 * a11 * a22) {
        return Err(Error::SingularSystem);
    }
    let c1 = (a22 * b1 - a12 * b2) / det;
    let c2 = (a11 * b2 - a12 * b1) / det;
    let captured = (c1 * c1 * a11 + 2.0 * c1 * c2 * a12 + c2 * c2 * a22)
        .max(0.0)
        .sqrt();
    Ok(TwoModeFit {
        coef_first: c1,
        coef_second: c2,
        captured,
    })
}

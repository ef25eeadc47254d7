//! Kernel ridge regression in dual form with K-fold selection of the ridge.
//!
//! The dual system `(K + lambda I) c = y` with `K = Phi Phi^T / m` gives the
//! same predictions as the primal second-layer fit in
//! [`crate::network::fit_second_layer`] at the same `lambda`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::covariance::SpikedCovariance;
use crate::error::{check_dim, Error, Result};
use crate::linalg::spd_solve;
use crate::rng::SeededStream;
use crate::spectral::{gram_matrix, point_rows, relu_cross_gram, relu_gram};

/// A kernel that can fill training and cross Gram matrices.
pub trait Kernel: Sync {
    fn gram(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>>;
    fn cross(&self, test: &DMatrix<f64>, train: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Closed-form ReLU kernel with weights `w ~ N(0, Gamma / d)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluKernel(pub SpikedCovariance);

impl Kernel for ReluKernel {
    fn gram(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        relu_gram(points, &self.0)
    }

    fn cross(&self, test: &DMatrix<f64>, train: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        relu_cross_gram(test, train, &self.0)
    }
}

/// Any pointwise kernel.
pub struct FnKernel<F>(pub F);

impl<F> Kernel for FnKernel<F>
where
    F: Fn(&[f64], &[f64]) -> Result<f64> + Sync,
{
    fn gram(&self, points: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        gram_matrix(&self.0, points)
    }

    fn cross(&self, test: &DMatrix<f64>, train: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(train.ncols(), test.ncols())?;
        let tr = point_rows(train);
        let te = point_rows(test);
        let rows: Vec<Vec<f64>> = te
            .par_iter()
            .map(|x| {
                tr.iter()
                    .map(|z| (self.0)(x, z))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        Ok(DMatrix::from_fn(te.len(), tr.len(), |i, j| rows[i][j]))
    }
}

/// Dual coefficients `(K + lambda I)^{-1} y`.
pub fn fit(k: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "ridge {lambda} must be finite and nonnegative"
        )));
    }
    if k.nrows() != k.ncols() {
        return Err(Error::DimensionMismatch {
            expected: k.nrows(),
            got: k.ncols(),
        });
    }
    spd_solve(k, lambda, y)
}

/// `K_cross c`, one prediction per row of `K_cross`.
pub fn predict(k_cross: &DMatrix<f64>, coefs: &[f64]) -> Result<Vec<f64>> {
    check_dim(k_cross.ncols(), coefs.len())?;
    Ok((k_cross * DVector::from_column_slice(coefs))
        .as_slice()
        .to_vec())
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_dim(truth.len(), pred.len())?;
    if pred.is_empty() {
        return Err(Error::InsufficientData(
            "mean squared error of nothing".into(),
        ));
    }
    Ok(pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrrModel<K> {
    pub train_points: DMatrix<f64>,
    pub dual_coefs: Vec<f64>,
    pub kernel: K,
    pub ridge: f64,
}

impl<K: Kernel> KrrModel<K> {
    pub fn train(kernel: K, points: DMatrix<f64>, y: &[f64], ridge: f64) -> Result<Self> {
        let k = kernel.gram(&points)?;
        let dual_coefs = fit(&k, y, ridge)?;
        Ok(Self {
            train_points: points,
            dual_coefs,
            kernel,
            ridge,
        })
    }

    pub fn predict(&self, test: &DMatrix<f64>) -> Result<Vec<f64>> {
        predict(
            &self.kernel.cross(test, &self.train_points)?,
            &self.dual_coefs,
        )
    }
}

/// Seeded shuffle cut into contiguous blocks; the first `n % folds` blocks
/// carry one extra index.
pub fn fold_assignment(n: usize, folds: usize, rng: &mut SeededStream) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if n < folds {
        return Err(Error::InsufficientData(format!(
            "{n} samples for {folds} folds"
        )));
    }
    let perm = rng.permutation(n);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn submatrix(k: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| k[(rows[i], cols[j])])
}

/// Mean validation error of every grid value over the given folds of a
/// precomputed Gram matrix. A failed solve scores `+inf`.
pub fn cv_errors(
    k: &DMatrix<f64>,
    y: &[f64],
    lambda_grid: &[f64],
    folds: &[Vec<usize>],
) -> Result<Vec<f64>> {
    check_dim(k.nrows(), y.len())?;
    let n = y.len();
    let per_fold: Vec<Vec<f64>> = folds
        .par_iter()
        .map(|held| {
            let mut is_held = vec![false; n];
            held.iter().for_each(|&i| is_held[i] = true);
            let train: Vec<usize> = (0..n).filter(|&i| !is_held[i]).collect();
            let k_tr = submatrix(k, &train, &train);
            let k_va = submatrix(k, held, &train);
            let y_tr: Vec<f64> = train.iter().map(|&i| y[i]).collect();
            let y_va: Vec<f64> = held.iter().map(|&i| y[i]).collect();
            lambda_grid
                .iter()
                .map(|&lam| match fit(&k_tr, &y_tr, lam) {
                    Ok(c) => predict(&k_va, &c).and_then(|p| mse(&p, &y_va)),
                    Err(Error::SingularSystem) => Ok(f64::INFINITY),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok((0..lambda_grid.len())
        .map(|g| per_fold.iter().map(|f| f[g]).sum::<f64>() / folds.len() as f64)
        .collect())
}

/// Index of the smallest score; exact ties go to the larger grid value.
pub(crate) fn select_min(grid: &[f64], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..grid.len() {
        let better =
            scores[i] < scores[best] || (scores[i] == scores[best] && grid[i] > grid[best]);
        if better {
            best = i;
        }
    }
    best
}

/// [`kfold_select`] on a precomputed Gram matrix.
pub fn kfold_select_gram(
    k: &DMatrix<f64>,
    y: &[f64],
    lambda_grid: &[f64],
    folds: usize,
    rng: &mut SeededStream,
) -> Result<f64> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidArgument("empty ridge grid".into()));
    }
    let assignment = fold_assignment(y.len(), folds, rng)?;
    let scores = cv_errors(k, y, lambda_grid, &assignment)?;
    Ok(lambda_grid[select_min(lambda_grid, &scores)])
}

/// Ridge from `lambda_grid` minimizing the mean K-fold validation MSE.
pub fn kfold_select<K: Kernel>(
    kernel: &K,
    points: &DMatrix<f64>,
    y: &[f64],
    lambda_grid: &[f64],
    folds: usize,
    rng: &mut SeededStream,
) -> Result<f64> {
    check_dim(points.nrows(), y.len())?;
    if y.len() < folds {
        return Err(Error::InsufficientData(format!(
            "{} samples for {folds} folds",
            y.len()
        )));
    }
    kfold_select_gram(&kernel.gram(points)?, y, lambda_grid, folds, rng)
}

//! Dense symmetric positive-definite solves and norm helpers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Block width of the right-looking Cholesky factorization.
const NB: usize = 96;

/// In-place lower Cholesky factor of a symmetric positive-definite matrix;
/// only the lower triangle of `a` is read, the strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let mut k = 0;
    while k < n {
        let kb = NB.min(n - k);
        // diagonal block, unblocked
        for j in k..k + kb {
            let mut djj = a[(j, j)];
            for p in k..j {
                djj -= a[(j, p)] * a[(j, p)];
            }
            if !(djj > 0.0) || !djj.is_finite() {
                return Err(Error::SingularSystem);
            }
            let ljj = djj.sqrt();
            a[(j, j)] = ljj;
            for i in j + 1..k + kb {
                let mut v = a[(i, j)];
                for p in k..j {
                    v -= a[(i, p)] * a[(j, p)];
                }
                a[(i, j)] = v / ljj;
            }
        }
        let rest = n - k - kb;
        if rest > 0 {
            // panel: L21 = A21 L11^{-T}
            let l11 = a.view((k, k), (kb, kb)).into_owned();
            {
                let mut panel = a.view_mut((k + kb, k), (rest, kb));
                for j in 0..kb {
                    let ljj = l11[(j, j)];
                    for p in 0..j {
                        let ljp = l11[(j, p)];
                        if ljp != 0.0 {
                            let (src, mut dst) = panel.columns_range_pair_mut(p, j);
                            dst.axpy(-ljp, &src, 1.0);
                        }
                    }
                    panel.column_mut(j).scale_mut(ljj.recip());
                }
            }
            // trailing lower update, one block column at a time
            let panel = a.view((k + kb, k), (rest, kb)).into_owned();
            let mut j = 0;
            while j < rest {
                let jb = NB.min(rest - j);
                let rows = rest - j;
                let lhs = panel.rows(j, rows);
                let rhs = panel.rows(j, jb);
                let mut target = a.view_mut((k + kb + j, k + kb + j), (rows, jb));
                target.gemm(-1.0, &lhs, &rhs.transpose(), 1.0);
                j += jb;
            }
        }
        k += kb;
    }
    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L L^T x = b` in place for every column of `b`.
pub fn cholesky_solve_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let ok = l.solve_lower_triangular_mut(b) && l.tr_solve_lower_triangular_mut(b);
    debug_assert!(ok, "Cholesky factor has a zero pivot");
}

/// Solves `(K + ridge I) x = y` for symmetric positive-definite `K + ridge I`.
pub fn spd_solve(k: &DMatrix<f64>, ridge: f64, y: &[f64]) -> Result<Vec<f64>> {
    let n = k.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: y.len(),
        });
    }
    let mut a = k.clone();
    for i in 0..n {
        a[(i, i)] += ridge;
    }
    cholesky_in_place(&mut a)?;
    let mut b = DMatrix::from_column_slice(n, 1, y);
    cholesky_solve_in_place(&a, &mut b);
    Ok(b.as_slice().to_vec())
}

/// Largest singular value, from the extreme eigenvalue of the smaller Gram matrix.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    let g = if m.nrows() <= m.ncols() {
        m * m.transpose()
    } else {
        m.transpose() * m
    };
    g.symmetric_eigenvalues().max().max(0.0).sqrt()
}

/// Largest singular value by power iteration on `M^T M`, stopping once the
/// estimate changes by less than `tol` relative.
pub fn op_norm_power(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let mut v = DVector::from_fn(m.ncols(), |i, _| {
        1.0 + (i as f64 * 0.618_033_988_749_895).fract()
    });
    let mut est = 0.0;
    for _ in 0..max_iter {
        let nv = v.norm();
        if nv == 0.0 {
            return Ok(0.0);
        }
        v /= nv;
        let mv = m * &v;
        let next = mv.norm();
        v = m.transpose() * mv;
        if (next - est).abs() <= tol * next {
            return Ok(next);
        }
        est = next;
    }
    Err(Error::ConvergenceFailure)
}

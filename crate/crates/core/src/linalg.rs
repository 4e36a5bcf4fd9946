//! Dense kernels shared by the reduction and chain-solving code: Householder
//! QR with a simultaneous right-hand-side transform, triangular solves on
//! leading blocks, and an upper-triangular Cholesky factorization with a
//! relative pivot check.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Householder QR of a tall matrix `a` (n x p, n >= p), applying every
/// reflection to `rhs` as well. On return the upper triangle of the leading
/// p x p block of `a` holds R, the entries below it are garbage, and `rhs`
/// holds Q^T applied to the original right-hand side (all n entries).
pub(crate) fn qr_with_rhs(a: &mut DMatrix<f64>, rhs: &mut DVector<f64>) {
    let n = a.nrows();
    let p = a.ncols();
    debug_assert!(n >= p, "qr_with_rhs requires a square or tall matrix");
    debug_assert_eq!(rhs.len(), n);

    let mut v = vec![0.0; n];
    for k in 0..p {
        let mut norm_sq = 0.0;
        for i in k..n {
            let x = a[(i, k)];
            v[i] = x;
            norm_sq += x * x;
        }
        let norm = norm_sq.sqrt();
        if norm == 0.0 {
            // Zero column tail: R[k][k] = 0, caught by the caller's rank check.
            continue;
        }
        let alpha = if v[k] >= 0.0 { -norm } else { norm };
        v[k] -= alpha;
        let v_sq = norm_sq - 2.0 * alpha * a[(k, k)] + alpha * alpha;
        a[(k, k)] = alpha;
        if v_sq == 0.0 {
            continue;
        }
        let scale = 2.0 / v_sq;
        for j in (k + 1)..p {
            let mut dot = 0.0;
            for i in k..n {
                dot += v[i] * a[(i, j)];
            }
            let t = scale * dot;
            for i in k..n {
                a[(i, j)] -= t * v[i];
            }
        }
        let mut dot = 0.0;
        for i in k..n {
            dot += v[i] * rhs[i];
        }
        let t = scale * dot;
        for i in k..n {
            rhs[i] -= t * v[i];
        }
    }
}

/// Flips the sign of every row of the leading p x p upper triangle of `a`
/// whose diagonal entry is negative, together with the matching entry of
/// `rhs`. This fixes the sign ambiguity of QR so that factorizations from
/// different routes are directly comparable.
pub(crate) fn make_diag_nonneg(a: &mut DMatrix<f64>, rhs: &mut DVector<f64>) {
    let p = a.ncols();
    for k in 0..p {
        if a[(k, k)] < 0.0 {
            for j in k..p {
                a[(k, j)] = -a[(k, j)];
            }
            rhs[k] = -rhs[k];
        }
    }
}

/// Copies the leading p x p upper triangle of `a` into a fresh matrix with
/// an explicitly zeroed strict lower triangle.
pub(crate) fn upper_triangle(a: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(p, p);
    for j in 0..p {
        for i in 0..=j {
            r[(i, j)] = a[(i, j)];
        }
    }
    r
}

/// Back-substitution on the leading k x k block of the upper-triangular
/// matrix `r`: solves r[0..k, 0..k] x = b[0..k], writing x into out[0..k].
pub(crate) fn solve_upper_prefix(r: &DMatrix<f64>, b: &[f64], k: usize, out: &mut [f64]) {
    for i in (0..k).rev() {
        let mut s = b[i];
        for j in (i + 1)..k {
            s -= r[(i, j)] * out[j];
        }
        out[i] = s / r[(i, i)];
    }
}

/// Forward substitution with the transpose of the upper-triangular `r`:
/// solves r^T x = b for all of b.
pub(crate) fn solve_upper_transpose(r: &DMatrix<f64>, b: &[f64], out: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= r[(k, i)] * out[k];
        }
        out[i] = s / r[(i, i)];
    }
}

/// Upper-triangular Cholesky factor U of a symmetric positive definite
/// matrix, G = U^T U. Pivots are checked against the original diagonal
/// so a numerically semidefinite Gram matrix is rejected rather than
/// silently factored into garbage.
pub(crate) fn cholesky_upper(g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    debug_assert_eq!(n, g.ncols());
    const PIVOT_RTOL: f64 = 1e-12;

    let mut u = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let mut s = g[(i, j)];
            for k in 0..i {
                s -= u[(k, i)] * u[(k, j)];
            }
            if j == i {
                if s <= PIVOT_RTOL * g[(i, i)].abs() || !s.is_finite() {
                    return Err(Error::IllConditionedGram { pivot: i });
                }
                u[(i, i)] = s.sqrt();
            } else {
                u[(i, j)] = s / u[(i, i)];
            }
        }
    }
    Ok(u)
}

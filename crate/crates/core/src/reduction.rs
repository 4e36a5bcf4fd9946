//! Reduction of a regression problem to a compact triangular form.
//!
//! For a tall matrix X (N x p) with labels y, the thin QR factorization
//! X = QR satisfies
//!
//! ```text
//! ||X theta - y||^2 = ||R theta - Q^T y||^2 + ||y - Q Q^T y||^2
//! ```
//!
//! so every least-squares subproblem over subsets of columns can be solved
//! on the p x p triangle R and the length-p vector Q^T y instead of the raw
//! data. The same triple (R, Q^T y, residual) can be recovered from an upper
//! Cholesky factor of the Gram matrix [X y]^T [X y], which only needs one
//! streaming pass over the rows and never stores an N x p factor; that path
//! is cheaper for very tall data but less robust when X is ill-conditioned.
//!
//! All reductions here normalize R to a nonnegative diagonal, which removes
//! the sign ambiguity of the factorization and makes the two paths agree to
//! rounding error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Diagonal entries of R below this fraction of the largest one are treated
/// as a rank deficiency.
const RANK_RTOL: f64 = 1e-10;

/// Default number of rows per block when a dataset is reduced through the
/// Gram-matrix path.
pub const DEFAULT_BLOCK_ROWS: usize = 65_536;

/// A feature matrix with its labels. Rows are samples, columns are features.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
}

impl Dataset {
    /// Wraps a feature matrix and label vector, requiring at least one
    /// feature and at least as many rows as features.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.ncols() == 0 {
            return Err(Error::InvalidInput("dataset has no feature columns".into()));
        }
        if x.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "feature matrix has {} rows but the label vector has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.nrows() < x.ncols() {
            return Err(Error::InvalidInput(format!(
                "dataset has {} rows for {} features; underdetermined problems are not supported",
                x.nrows(),
                x.ncols()
            )));
        }
        Ok(Self { x, y })
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }
}

/// Column means removed from a pair of datasets, kept so an intercept can be
/// reconstructed after a fit on centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteringInfo {
    pub feature_means: DVector<f64>,
    pub label_mean: f64,
}

/// The compact form a reduction produces: everything downstream solves and
/// scores against these p x p / length-p quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedData {
    /// Upper-triangular factor with nonnegative diagonal.
    r: DMatrix<f64>,
    /// The labels projected onto the column space basis, Q^T y.
    y_proj: DVector<f64>,
    /// Squared norm of the label component orthogonal to the column space.
    residual_sq: f64,
    /// Squared norm of the original labels.
    label_sq_norm: f64,
}

impl ReducedData {
    pub fn n_features(&self) -> usize {
        self.r.ncols()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }

    pub fn y_proj(&self) -> &DVector<f64> {
        &self.y_proj
    }

    pub fn residual_sq(&self) -> f64 {
        self.residual_sq
    }

    pub fn label_sq_norm(&self) -> f64 {
        self.label_sq_norm
    }
}

/// Subtracts the training column means (features and labels) from both
/// splits. Centering by training statistics keeps the test split honest:
/// nothing about the test data leaks into the preprocessing.
pub fn center(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, CenteringInfo)> {
    let p = train.n_features();
    if test.n_features() != p {
        return Err(Error::InvalidInput(format!(
            "train has {} features but test has {}",
            p,
            test.n_features()
        )));
    }
    let n = train.n_rows() as f64;
    let feature_means = DVector::from_fn(p, |j, _| train.x.column(j).sum() / n);
    let label_mean = train.y.sum() / n;

    let shift = |d: &Dataset| {
        let mut x = d.x.clone();
        for j in 0..p {
            x.column_mut(j).add_scalar_mut(-feature_means[j]);
        }
        let y = d.y.add_scalar(-label_mean);
        Dataset { x, y }
    };

    let shifted = (shift(train), shift(test));
    let info = CenteringInfo {
        feature_means,
        label_mean,
    };
    Ok((shifted.0, shifted.1, info))
}

fn check_rank(r: &DMatrix<f64>) -> Result<()> {
    let p = r.ncols();
    let max_diag = (0..p).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    let threshold = RANK_RTOL * max_diag;
    for k in 0..p {
        let diag = r[(k, k)].abs();
        if diag <= threshold || max_diag == 0.0 {
            return Err(Error::RankDeficient {
                column: k,
                diag,
                threshold,
            });
        }
    }
    Ok(())
}

/// Reduces a dataset by Householder QR. The orthogonal factor is applied to
/// the labels on the fly and never stored. The leftover label energy is
/// computed as `||y||^2 - ||Q^T y||^2`, clamped at zero since rounding can
/// push a perfect fit slightly negative.
pub fn qr_reduce(data: &Dataset) -> Result<ReducedData> {
    let p = data.n_features();
    let mut a = data.x.clone();
    let mut rhs = data.y.clone();
    linalg::qr_with_rhs(&mut a, &mut rhs);
    linalg::make_diag_nonneg(&mut a, &mut rhs);
    let r = linalg::upper_triangle(&a, p);
    check_rank(&r)?;

    let label_sq_norm = data.y.norm_squared();
    let y_proj = DVector::from_fn(p, |i, _| rhs[i]);
    let residual_sq = (label_sq_norm - y_proj.norm_squared()).max(0.0);
    Ok(ReducedData {
        r,
        y_proj,
        residual_sq,
        label_sq_norm,
    })
}

/// Reduces data presented as a sequence of row blocks by accumulating the
/// Gram matrix of [X y] and taking its upper Cholesky factor. The blocks
/// never need to fit in memory at once.
pub fn cholesky_reduce<I>(blocks: I) -> Result<ReducedData>
where
    I: IntoIterator<Item = (DMatrix<f64>, DVector<f64>)>,
{
    let mut gram: Option<DMatrix<f64>> = None;
    let mut rows = 0usize;
    for (x, y) in blocks {
        if x.nrows() != y.len() {
            return Err(Error::InvalidInput(format!(
                "block has {} feature rows but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        let p = x.ncols();
        let g = gram.get_or_insert_with(|| DMatrix::zeros(p + 1, p + 1));
        if g.ncols() != p + 1 {
            return Err(Error::InvalidInput(format!(
                "block has {} features, expected {}",
                p,
                g.ncols() - 1
            )));
        }
        rows += x.nrows();
        let mut aug = DMatrix::zeros(x.nrows(), p + 1);
        aug.view_mut((0, 0), (x.nrows(), p)).copy_from(&x);
        aug.column_mut(p).copy_from(&y);
        // Serial accumulation keeps the summation order fixed, so repeated
        // runs are bit-identical.
        *g += aug.transpose() * aug;
    }
    let gram = gram.ok_or_else(|| Error::InvalidInput("no data blocks provided".into()))?;
    let p = gram.ncols() - 1;
    if rows < p {
        return Err(Error::InvalidInput(format!(
            "{rows} rows for {p} features; underdetermined problems are not supported"
        )));
    }

    // Factor only the feature block. Extending the factorization to the
    // label column is a forward solve, and doing it separately means a
    // perfectly fit label vector (zero residual) cannot fail the pivot
    // check; only degenerate features can.
    let r = linalg::cholesky_upper(&gram.view((0, 0), (p, p)).into_owned())?;
    check_rank(&r)?;
    let xty: Vec<f64> = (0..p).map(|i| gram[(i, p)]).collect();
    let mut w = vec![0.0; p];
    linalg::solve_upper_transpose(&r, &xty, &mut w);
    let y_proj = DVector::from_vec(w);
    let label_sq_norm = gram[(p, p)];
    let residual_sq = (label_sq_norm - y_proj.norm_squared()).max(0.0);
    Ok(ReducedData {
        r,
        y_proj,
        residual_sq,
        label_sq_norm,
    })
}

/// Convenience wrapper that feeds an in-memory dataset through the
/// Gram-matrix path in blocks of `block_rows` rows.
pub fn cholesky_reduce_dataset(data: &Dataset, block_rows: usize) -> Result<ReducedData> {
    if block_rows == 0 {
        return Err(Error::InvalidInput("block_rows must be positive".into()));
    }
    let n = data.n_rows();
    let p = data.n_features();
    let blocks = (0..n).step_by(block_rows).map(move |start| {
        let len = block_rows.min(n - start);
        (
            data.x.view((start, 0), (len, p)).into_owned(),
            data.y.rows(start, len).into_owned(),
        )
    });
    cholesky_reduce(blocks)
}

/// Builds the stacked data whose ordinary least-squares solution equals the
/// ridge solution with penalty `lambda`:
///
/// ```text
/// X~ = [ X / sqrt(N) ]      y~ = [ y / sqrt(N) ]
///      [ sqrt(lambda) I ]        [ 0 ]
/// ```
///
/// Minimizing `||X~ theta - y~||^2` is the same as minimizing
/// `(1/N) ||X theta - y||^2 + lambda ||theta||^2`.
pub fn ridge_stack(data: &Dataset, lambda: f64) -> Result<Dataset> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "ridge penalty must be positive and finite, got {lambda}"
        )));
    }
    let n = data.n_rows();
    let p = data.n_features();
    let inv_sqrt_n = 1.0 / (n as f64).sqrt();
    let sqrt_lambda = lambda.sqrt();

    let mut x = DMatrix::zeros(n + p, p);
    x.view_mut((0, 0), (n, p)).copy_from(&(&data.x * inv_sqrt_n));
    for j in 0..p {
        x[(n + j, j)] = sqrt_lambda;
    }
    let mut y = DVector::zeros(n + p);
    y.rows_mut(0, n).copy_from(&(&data.y * inv_sqrt_n));
    Dataset::new(x, y)
}

//! Solving and scoring a chain of nested least-squares problems.
//!
//! A permutation pi of the features defines a chain of subsets
//! {pi_1}, {pi_1, pi_2}, ..., {pi_1..pi_p}. Instead of solving p separate
//! least-squares problems, one QR factorization of the column-permuted
//! triangle R P^T yields all p solutions at once:
//!
//! ```text
//! Q~ R~ = R P^T,   q~ = Q~^T y~,   Theta[0..k, k] = R~[0..k, 0..k]^{-1} q~[0..k]
//! ```
//!
//! Column k of Theta solves the subproblem on the first k+1 features of the
//! chain, expressed in chain order. Scoring a chain against a reduced test
//! split walks the columns and turns each squared error into an
//! out-of-sample R^2; consecutive differences of those R^2 values are the
//! lifts attributed to the features.
//!
//! Everything here is O(p^3) per chain and touches nothing of size N.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::reduction::ReducedData;

/// A permutation of `0..len`, stored together with its inverse.
///
/// `order[k]` is the feature placed at position `k` of the chain, and
/// `inverse[j]` is the position feature `j` occupies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    order: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    /// Builds a permutation from the chain order, rejecting anything that is
    /// not a bijection on `0..order.len()`.
    pub fn from_order(order: Vec<usize>) -> Result<Self> {
        let p = order.len();
        let mut inverse = vec![usize::MAX; p];
        for (pos, &feature) in order.iter().enumerate() {
            if feature >= p || inverse[feature] != usize::MAX {
                return Err(Error::InvalidInput(format!(
                    "order is not a permutation of 0..{p}: entry {pos} is {feature}"
                )));
            }
            inverse[feature] = pos;
        }
        Ok(Self { order, inverse })
    }

    /// Builds a permutation that is known to be valid, checking only in
    /// debug builds. Samplers use this on their own output.
    pub(crate) fn from_order_unchecked(order: Vec<usize>) -> Self {
        debug_assert!(Self::from_order(order.clone()).is_ok());
        let mut inverse = vec![0; order.len()];
        for (pos, &feature) in order.iter().enumerate() {
            inverse[feature] = pos;
        }
        Self { order, inverse }
    }

    pub fn identity(p: usize) -> Self {
        Self {
            order: (0..p).collect(),
            inverse: (0..p).collect(),
        }
    }

    /// The reversed chain: feature at position k moves to position p-1-k.
    /// Averaging a chain with its reversal cancels the leading term of the
    /// sampling error, which is the antithetical trick.
    pub fn reverse(&self) -> Self {
        let mut order = self.order.clone();
        order.reverse();
        Self::from_order_unchecked(order)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }
}

/// All p nested solutions for one chain, in chain coordinates: column k
/// (with nonzeros in rows 0..=k) solves the least-squares problem on the
/// first k+1 features of the chain.
#[derive(Debug, Clone)]
pub struct ChainSolution {
    theta: DMatrix<f64>,
    perm: Permutation,
}

impl ChainSolution {
    /// The p x p upper-triangular matrix of nested solutions, in chain order.
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    pub fn perm(&self) -> &Permutation {
        &self.perm
    }

    /// The full-model solution mapped back to original feature coordinates.
    pub fn full_solution(&self) -> DVector<f64> {
        let p = self.perm.len();
        DVector::from_fn(p, |j, _| self.theta[(self.perm.inverse[j], p - 1)])
    }
}

/// The per-feature R^2 increments of one scored chain. `lifts[j]` is the
/// change in out-of-sample R^2 when feature `j` joins the chain; the entries
/// telescope to the full-model R^2.
#[derive(Debug, Clone)]
pub struct LiftVector {
    pub lifts: DVector<f64>,
    pub r2_full: f64,
}

/// Solves every nested problem of one chain with a single QR factorization
/// of the column-permuted triangle.
pub fn solve_chain(train: &ReducedData, perm: &Permutation) -> Result<ChainSolution> {
    let p = train.n_features();
    if perm.len() != p {
        return Err(Error::InvalidInput(format!(
            "permutation has length {} but the data has {} features",
            perm.len(),
            p
        )));
    }

    let mut a = DMatrix::zeros(p, p);
    for k in 0..p {
        a.column_mut(k).copy_from(&train.r().column(perm.order[k]));
    }
    let mut q = train.y_proj().clone();
    linalg::qr_with_rhs(&mut a, &mut q);
    linalg::make_diag_nonneg(&mut a, &mut q);
    for k in 0..p {
        if a[(k, k)] == 0.0 || !a[(k, k)].is_finite() {
            return Err(Error::Numerical(format!(
                "chain refactorization produced an unusable pivot at position {k}"
            )));
        }
    }

    let mut theta = DMatrix::zeros(p, p);
    let qs = q.as_slice();
    for k in 0..p {
        let mut col = theta.column_mut(k);
        linalg::solve_upper_prefix(&a, qs, k + 1, col.as_mut_slice());
    }
    Ok(ChainSolution {
        theta,
        perm: perm.clone(),
    })
}

/// Scores one solved chain against a reduced test split. Returns the p+1
/// out-of-sample R^2 values along the chain, starting from the empty model,
/// whose R^2 is zero by definition.
pub fn evaluate_chain(sol: &ChainSolution, test: &ReducedData) -> Result<Vec<f64>> {
    let p = test.n_features();
    if sol.perm.len() != p {
        return Err(Error::InvalidInput(format!(
            "chain solution covers {} features but the test data has {}",
            sol.perm.len(),
            p
        )));
    }
    if test.label_sq_norm() <= 0.0 {
        return Err(Error::UndefinedMetric);
    }

    let mut t = DMatrix::zeros(p, p);
    for k in 0..p {
        t.column_mut(k).copy_from(&test.r().column(sol.perm.order[k]));
    }

    let denom = test.label_sq_norm();
    let base = test.residual_sq();
    let mut r2 = Vec::with_capacity(p + 1);
    r2.push(0.0);
    let mut pred = DVector::zeros(p);
    for k in 1..=p {
        pred.fill(0.0);
        // Column k-1 of theta has nonzeros only in rows 0..k, so the
        // prediction is a truncated product: p*k work instead of p^2.
        for j in 0..k {
            pred.axpy(sol.theta[(j, k - 1)], &t.column(j), 1.0);
        }
        pred -= test.y_proj();
        let err = pred.norm_squared() + base;
        r2.push((denom - err) / denom);
    }
    Ok(r2)
}

/// Converts the R^2 values along a chain into per-feature lifts.
pub fn lift_vector(r2_seq: &[f64], perm: &Permutation) -> Result<LiftVector> {
    let p = perm.len();
    if r2_seq.len() != p + 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} R^2 values for {} features, got {}",
            p + 1,
            p,
            r2_seq.len()
        )));
    }
    if r2_seq[0] != 0.0 {
        return Err(Error::InvalidInput(
            "an R^2 chain must start at zero for the empty model".into(),
        ));
    }
    let mut lifts = DVector::zeros(p);
    for k in 0..p {
        lifts[perm.order[k]] = r2_seq[k + 1] - r2_seq[k];
    }
    Ok(LiftVector {
        lifts,
        r2_full: r2_seq[p],
    })
}

/// Solves and scores one chain end to end.
pub fn lift_for_permutation(
    train: &ReducedData,
    test: &ReducedData,
    perm: &Permutation,
) -> Result<LiftVector> {
    let sol = solve_chain(train, perm)?;
    let r2 = evaluate_chain(&sol, test)?;
    lift_vector(&r2, perm)
}

/// Out-of-sample R^2 of the least-squares fit on one subset of features,
/// solved directly on the reduced data. Mostly useful as a slow reference
/// for the chain evaluation and for exact enumeration at small p.
pub fn subset_r_squared(train: &ReducedData, test: &ReducedData, subset: &[usize]) -> Result<f64> {
    let p = train.n_features();
    if test.n_features() != p {
        return Err(Error::InvalidInput(format!(
            "train has {} features but test has {}",
            p,
            test.n_features()
        )));
    }
    if test.label_sq_norm() <= 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let mut seen = vec![false; p];
    for &j in subset {
        if j >= p {
            return Err(Error::InvalidInput(format!(
                "subset contains feature {j} but the data has {p} features"
            )));
        }
        if seen[j] {
            return Err(Error::InvalidInput(format!(
                "subset lists feature {j} twice"
            )));
        }
        seen[j] = true;
    }
    if subset.is_empty() {
        return Ok(0.0);
    }

    let k = subset.len();
    let mut a = DMatrix::zeros(p, k);
    for (c, &j) in subset.iter().enumerate() {
        a.column_mut(c).copy_from(&train.r().column(j));
    }
    let mut q = train.y_proj().clone();
    linalg::qr_with_rhs(&mut a, &mut q);
    let mut theta = vec![0.0; k];
    linalg::solve_upper_prefix(&a, q.as_slice(), k, &mut theta);

    let mut pred = -test.y_proj().clone();
    for (c, &j) in subset.iter().enumerate() {
        pred.axpy(theta[c], &test.r().column(j), 1.0);
    }
    let err = pred.norm_squared() + test.residual_sq();
    let denom = test.label_sq_norm();
    Ok((denom - err) / denom)
}

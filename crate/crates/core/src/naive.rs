//! Slow reference implementations that work directly on the raw data.
//!
//! Every subset fit here is an independent least-squares solve on the full
//! N x p matrix, so one chain costs p solves of O(N p^2) instead of one
//! O(p^3) refactorization. These exist to validate the reduced pipeline
//! and to measure what the reduction buys; they share no code with it.

use nalgebra::{DMatrix, DVector};

use crate::chains::{LiftVector, Permutation};
use crate::error::{Error, Result};
use crate::reduction::Dataset;

/// Least-squares coefficients for one subset of columns, solved on raw data.
fn subset_solution(train: &Dataset, subset: &[usize]) -> Result<DVector<f64>> {
    let k = subset.len();
    let mut a = DMatrix::zeros(train.n_rows(), k);
    for (c, &j) in subset.iter().enumerate() {
        a.column_mut(c).copy_from(&train.x.column(j));
    }
    let qr = a.qr();
    let mut rhs = train.y.clone();
    qr.q_tr_mul(&mut rhs);
    let r = qr.r();
    r.view((0, 0), (k, k))
        .solve_upper_triangular(&rhs.rows(0, k).into_owned())
        .ok_or_else(|| Error::Numerical("naive subset solve hit a singular factor".into()))
}

/// Out-of-sample R^2 for one subset of features, fit and scored on raw data.
pub fn subset_r_squared_naive(train: &Dataset, test: &Dataset, subset: &[usize]) -> Result<f64> {
    let p = train.n_features();
    if test.n_features() != p {
        return Err(Error::InvalidInput(format!(
            "train has {p} features but test has {}",
            test.n_features()
        )));
    }
    let denom = test.y.norm_squared();
    if denom <= 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let mut seen = vec![false; p];
    for &j in subset {
        if j >= p || seen[j] {
            return Err(Error::InvalidInput(format!(
                "subset entry {j} is out of range or repeated"
            )));
        }
        seen[j] = true;
    }
    if subset.is_empty() {
        return Ok(0.0);
    }

    let theta = subset_solution(train, subset)?;
    let mut pred = DVector::zeros(test.n_rows());
    for (c, &j) in subset.iter().enumerate() {
        pred.axpy(theta[c], &test.x.column(j), 1.0);
    }
    let err = (pred - &test.y).norm_squared();
    Ok((denom - err) / denom)
}

/// The lift vector of one chain, computed the slow way: every prefix is an
/// independent fit on the raw data.
pub fn lift_for_permutation_naive(
    train: &Dataset,
    test: &Dataset,
    perm: &Permutation,
) -> Result<LiftVector> {
    let p = train.n_features();
    if perm.len() != p {
        return Err(Error::InvalidInput(format!(
            "permutation has length {} but the data has {p} features",
            perm.len()
        )));
    }
    let mut lifts = DVector::zeros(p);
    let mut prev = 0.0;
    for k in 1..=p {
        let r2 = subset_r_squared_naive(train, test, &perm.order()[..k])?;
        lifts[perm.order()[k - 1]] = r2 - prev;
        prev = r2;
    }
    Ok(LiftVector {
        lifts,
        r2_full: prev,
    })
}

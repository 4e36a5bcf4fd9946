//! Synthetic regression problems with controlled feature correlation.
//!
//! Features are drawn from N(0, C) where C is a random correlation matrix
//! built from a low-rank factor plus the identity, so a small number of
//! latent directions induce strong cross-feature correlation. Labels are a
//! sparse linear signal plus independent Gaussian noise whose variance
//! grows with the feature count, keeping the full-model R^2 away from 1.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::reduction::{center, Dataset};

/// Shape and seed of a synthetic problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthSpec {
    pub p: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

/// A random correlation matrix with unit diagonal: normalize F F^T + I
/// where F is p x max(1, p/20) with standard normal entries. The narrow
/// factor makes blocks of features strongly correlated.
pub fn gen_correlation(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let rank = (p / 20).max(1);
    let f = DMatrix::from_fn(p, rank, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut sigma = &f * f.transpose() + DMatrix::identity(p, p);
    let scales = DVector::from_fn(p, |i, _| 1.0 / sigma[(i, i)].sqrt());
    for i in 0..p {
        for j in 0..p {
            sigma[(i, j)] *= scales[i] * scales[j];
        }
    }
    // Exact unit diagonal and symmetry, unspoiled by rounding.
    for i in 0..p {
        sigma[(i, i)] = 1.0;
        for j in 0..i {
            let v = sigma[(i, j)];
            sigma[(j, i)] = v;
        }
    }
    sigma
}

/// Draws `rows` samples from N(0, C) given the lower Cholesky factor of C.
fn gaussian_rows(
    rng: &mut ChaCha8Rng,
    rows: usize,
    chol_lower: &DMatrix<f64>,
) -> DMatrix<f64> {
    let p = chol_lower.nrows();
    let z = DMatrix::from_fn(rows, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * chol_lower.transpose()
}

/// Generates a correlated train/test pair with a sparse linear signal, both
/// splits centered by the training means. Returns the two datasets and the
/// true coefficient vector.
///
/// The signal puts weight 2 on `floor((p+1)/10)` randomly chosen features
/// (at least one even for tiny p would need p >= 9; below that the signal
/// is empty and the labels are pure noise). Noise is drawn per split with
/// standard deviation `sqrt(3/2) * p`, which keeps the attainable R^2 well
/// below 1 once p is large.
pub fn gen_dataset(spec: &SynthSpec) -> Result<(Dataset, Dataset, DVector<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let corr = gen_correlation(spec.p, &mut rng);
    gen_dataset_with_correlation(spec, &corr, &mut rng)
}

/// Like [`gen_dataset`] but with a caller-supplied correlation matrix;
/// `rng` drives everything after the correlation structure is fixed.
pub fn gen_dataset_with_correlation(
    spec: &SynthSpec,
    corr: &DMatrix<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<(Dataset, Dataset, DVector<f64>)> {
    let p = spec.p;
    if p == 0 {
        return Err(Error::InvalidInput("need at least one feature".into()));
    }
    if corr.nrows() != p || corr.ncols() != p {
        return Err(Error::InvalidInput(format!(
            "correlation matrix is {}x{}, expected {p}x{p}",
            corr.nrows(),
            corr.ncols()
        )));
    }
    if spec.n_train < p || spec.n_test < p {
        return Err(Error::InvalidInput(format!(
            "train and test need at least {p} rows each, got {} and {}",
            spec.n_train, spec.n_test
        )));
    }

    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("correlation matrix is not positive definite".into()))?;
    let lower = chol.l();

    // Sparse signal: weight 2 on floor((p+1)/10) distinct features.
    let k = (p + 1) / 10;
    let mut candidates: Vec<usize> = (0..p).collect();
    let mut theta = DVector::zeros(p);
    for i in 0..k {
        let pick = rng.random_range(i..p);
        candidates.swap(i, pick);
        theta[candidates[i]] = 2.0;
    }

    let noise_sd = (1.5 * (p as f64) * (p as f64)).sqrt();
    let mut draw_split = |rows: usize| {
        let x = gaussian_rows(rng, rows, &lower);
        let noise =
            DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal) * noise_sd);
        let y = &x * &theta + noise;
        Dataset::new(x, y)
    };
    let train = draw_split(spec.n_train)?;
    let test = draw_split(spec.n_test)?;
    let (train, test, _) = center(&train, &test)?;
    Ok((train, test, theta))
}

/// The three-feature toy problem: two strong, mutually correlated signal
/// features and one distractor that is negatively correlated with both.
/// Unit noise, 50 rows per split, uncentered.
pub fn gen_toy(seed: u64) -> Result<(Dataset, Dataset)> {
    let corr = DMatrix::from_row_slice(
        3,
        3,
        &[
            1.0, 0.7, -0.4, //
            0.7, 1.0, -0.5, //
            -0.4, -0.5, 1.0,
        ],
    );
    let theta = DVector::from_vec(vec![2.1, 1.4, 0.1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lower = corr
        .cholesky()
        .expect("the toy correlation matrix is positive definite")
        .l();
    let mut draw_split = |rows: usize| {
        let x = gaussian_rows(&mut rng, rows, &lower);
        let noise = DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &x * &theta + noise;
        Dataset::new(x, y)
    };
    let train = draw_split(50)?;
    let test = draw_split(50)?;
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chains::{lift_for_permutation, Permutation};
    use crate::reduction::qr_reduce;

    #[test]
    fn correlation_matrix_is_well_formed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for p in [1, 5, 20, 45] {
            let c = gen_correlation(p, &mut rng);
            for i in 0..p {
                assert_eq!(c[(i, i)], 1.0);
                for j in 0..p {
                    assert_eq!(c[(i, j)], c[(j, i)]);
                    assert!(c[(i, j)].abs() <= 1.0 + 1e-12);
                }
            }
            assert!(c.clone().cholesky().is_some(), "p = {p} not PD");
        }
    }

    #[test]
    fn signal_weights_match_the_size_rule() {
        for (p, expect) in [(5, 0), (9, 1), (20, 2), (45, 4)] {
            let spec = SynthSpec {
                p,
                n_train: p + 10,
                n_test: p + 10,
                seed: 3,
            };
            let (_, _, theta) = gen_dataset(&spec).unwrap();
            let nonzero = theta.iter().filter(|&&t| t != 0.0).count();
            assert_eq!(nonzero, expect, "p = {p}");
            assert!(theta.iter().all(|&t| t == 0.0 || t == 2.0));
        }
    }

    #[test]
    fn generation_is_deterministic_and_centered() {
        let spec = SynthSpec {
            p: 12,
            n_train: 64,
            n_test: 32,
            seed: 9,
        };
        let (a_train, a_test, a_theta) = gen_dataset(&spec).unwrap();
        let (b_train, b_test, b_theta) = gen_dataset(&spec).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_test, b_test);
        assert_eq!(a_theta, b_theta);

        // Train columns are centered exactly; test columns only approximately
        // (they are shifted by the train means).
        for j in 0..12 {
            let mean = a_train.x.column(j).sum() / 64.0;
            assert!(mean.abs() < 1e-12);
        }
        assert!((a_train.y.sum() / 64.0).abs() < 1e-12);
    }

    #[test]
    fn empirical_moments_approach_the_target() {
        let spec = SynthSpec {
            p: 10,
            n_train: 100_000,
            n_test: 10,
            seed: 17,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let corr = gen_correlation(spec.p, &mut rng);
        let (train, _, theta) = gen_dataset(&spec).unwrap();

        let n = train.n_rows() as f64;
        let emp = train.x.transpose() * &train.x / n;
        assert!((&emp - &corr).amax() < 0.03, "Gram far from target correlation");

        // Label variance = signal variance + noise variance.
        let signal_var = (&corr * &theta).dot(&theta);
        let noise_var = 1.5 * 100.0;
        let label_var = train.y.norm_squared() / n;
        assert!((label_var / (signal_var + noise_var) - 1.0).abs() < 0.05);
    }

    #[test]
    fn toy_problem_has_the_documented_character() {
        let mut r2_all = Vec::new();
        let mut negative_distractor = 0;
        let mut solo_sum = 0.0;
        for seed in 0..20 {
            let (train, test) = gen_toy(seed).unwrap();
            let train_r = qr_reduce(&train).unwrap();
            let test_r = qr_reduce(&test).unwrap();
            let lv =
                lift_for_permutation(&train_r, &test_r, &Permutation::identity(3)).unwrap();
            r2_all.push(lv.r2_full);
            // The distractor's solo R^2 is its lift when it leads the chain.
            let solo = lift_for_permutation(
                &train_r,
                &test_r,
                &Permutation::from_order(vec![2, 0, 1]).unwrap(),
            )
            .unwrap();
            solo_sum += solo.lifts[2];
            if solo.lifts[2] < 0.0 {
                negative_distractor += 1;
            }
        }
        for &r2 in &r2_all {
            assert!((0.7..1.0).contains(&r2), "full-model R^2 {r2} out of band");
        }
        // The distractor explains little on its own and its out-of-sample
        // solo fit dips below zero for some draws.
        assert!(negative_distractor >= 1);
        assert!(solo_sum / 20.0 < 0.3, "distractor explains too much");
    }
}

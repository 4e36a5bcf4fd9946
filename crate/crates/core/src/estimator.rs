//! Streaming estimation of the attribution vector and its sampling risk.
//!
//! Lift vectors arrive in equally sized batches. The running mean and the
//! running biased covariance are updated per batch in a numerically stable
//! way (the covariance update carries a mean-shift correction term), so the
//! estimate after j batches equals the pooled statistics of all j*B samples
//! without storing them.
//!
//! Risk is quantified by drawing from a normal approximation of the
//! estimator's sampling distribution: with Sigma the unbiased sample
//! covariance of K lift vectors, draws from N(0, Sigma / K) approximate the
//! deviation of the running mean from its limit. Quantiles of those draws
//! give a per-feature error band and an overall error radius. The normal
//! approximation leans on the central limit theorem, which strictly applies
//! to independent draws; under the argsort quasi-Monte Carlo sampler the
//! draws are dependent and the band tends to be conservative.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::chains::LiftVector;
use crate::error::{Error, Result};

/// Largest feature count accepted by [`exact_shapley`]; 10! chains is about
/// the practical limit of exhaustive enumeration.
pub const MAX_EXACT_FEATURES: usize = 10;

/// Running mean and covariance of the lift vectors seen so far.
#[derive(Debug, Clone)]
pub struct AttributionEstimate {
    s_hat: DVector<f64>,
    cov_biased: DMatrix<f64>,
    batches_done: usize,
    samples_per_batch: usize,
}

impl AttributionEstimate {
    pub fn new(p: usize, samples_per_batch: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidInput("estimate needs at least one feature".into()));
        }
        if samples_per_batch == 0 {
            return Err(Error::InvalidInput("batch size must be positive".into()));
        }
        Ok(Self {
            s_hat: DVector::zeros(p),
            cov_biased: DMatrix::zeros(p, p),
            batches_done: 0,
            samples_per_batch,
        })
    }

    /// The running attribution estimate (zeros before any batch arrives).
    pub fn s_hat(&self) -> &DVector<f64> {
        &self.s_hat
    }

    /// The biased (maximum-likelihood) covariance of all samples seen.
    pub fn cov_biased(&self) -> &DMatrix<f64> {
        &self.cov_biased
    }

    pub fn batches_done(&self) -> usize {
        self.batches_done
    }

    pub fn samples_per_batch(&self) -> usize {
        self.samples_per_batch
    }

    pub fn total_samples(&self) -> usize {
        self.batches_done * self.samples_per_batch
    }

    /// Folds one batch's statistics into the running ones. The mean-shift
    /// term ((j-1)/j^2) D D^T accounts for the distance between the old
    /// running mean and the new batch mean, which is what makes the running
    /// covariance equal the pooled covariance.
    pub fn merge_batch(
        &mut self,
        batch_mean: &DVector<f64>,
        batch_cov: &DMatrix<f64>,
        batch_len: usize,
    ) -> Result<()> {
        let p = self.s_hat.len();
        if batch_mean.len() != p || batch_cov.nrows() != p || batch_cov.ncols() != p {
            return Err(Error::InvalidInput(format!(
                "batch statistics have the wrong shape for {p} features"
            )));
        }
        if batch_len != self.samples_per_batch {
            return Err(Error::InvalidInput(format!(
                "batch of {batch_len} samples, expected {}; equal batch sizes are required",
                self.samples_per_batch
            )));
        }
        let j = (self.batches_done + 1) as f64;
        let d = &self.s_hat - batch_mean;
        self.s_hat.axpy(1.0 / j, batch_mean, (j - 1.0) / j);
        self.cov_biased *= (j - 1.0) / j;
        self.cov_biased += batch_cov * (1.0 / j);
        self.cov_biased.ger((j - 1.0) / (j * j), &d, &d, 1.0);
        self.batches_done += 1;
        Ok(())
    }

    /// The unbiased covariance, `n/(n-1)` times the biased one.
    pub fn unbiased_cov(&self) -> Result<DMatrix<f64>> {
        let n = self.total_samples();
        if n < 2 {
            return Err(Error::InsufficientSamples { needed: 2, have: n });
        }
        Ok(&self.cov_biased * (n as f64 / (n as f64 - 1.0)))
    }
}

/// Mean and biased covariance of one batch of lift vectors.
pub fn batch_stats(lifts: &[LiftVector]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let first = lifts
        .first()
        .ok_or_else(|| Error::InvalidInput("cannot take statistics of an empty batch".into()))?;
    let p = first.lifts.len();
    let n = lifts.len() as f64;

    let mut mean = DVector::zeros(p);
    for lv in lifts {
        if lv.lifts.len() != p {
            return Err(Error::InvalidInput(
                "lift vectors in a batch must have equal lengths".into(),
            ));
        }
        mean += &lv.lifts;
    }
    mean /= n;

    let mut cov = DMatrix::zeros(p, p);
    let mut d = DVector::zeros(p);
    for lv in lifts {
        d.copy_from(&lv.lifts);
        d -= &mean;
        cov.ger(1.0 / n, &d, &d, 1.0);
    }
    Ok((mean, cov))
}

/// Error quantiles estimated from a normal approximation of the sampling
/// distribution.
#[derive(Debug, Clone)]
pub struct RiskReport {
    /// Per-feature quantile of the absolute deviation.
    pub per_feature: DVector<f64>,
    /// Quantile of the Euclidean norm of the deviation vector.
    pub overall: f64,
    /// The quantile level both numbers refer to.
    pub quantile: f64,
    /// How many normal draws the quantiles were taken over.
    pub draws: usize,
}

/// Estimates attribution error quantiles by sampling deviations from
/// N(0, cov / total_samples).
pub fn risk_estimate(
    cov_unbiased: &DMatrix<f64>,
    total_samples: usize,
    quantile: f64,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<RiskReport> {
    let p = cov_unbiased.nrows();
    if cov_unbiased.ncols() != p || p == 0 {
        return Err(Error::InvalidInput("covariance must be square and nonempty".into()));
    }
    if !(quantile > 0.0 && quantile < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "quantile must lie strictly between 0 and 1, got {quantile}"
        )));
    }
    if draws == 0 {
        return Err(Error::InvalidConfig("risk estimation needs at least one draw".into()));
    }
    if total_samples < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            have: total_samples,
        });
    }

    let scale = cov_unbiased.norm();
    let sym_err = (cov_unbiased - cov_unbiased.transpose()).amax();
    if sym_err > 1e-8 * (1.0 + scale) {
        return Err(Error::Numerical(format!(
            "covariance is not symmetric (max asymmetry {sym_err:.3e})"
        )));
    }

    // Factor the covariance through its eigendecomposition; tiny negative
    // eigenvalues are rounding noise and are clipped, genuinely negative
    // ones mean the input was not a covariance matrix.
    let sym = (cov_unbiased + cov_unbiased.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let neg_tol = 1e-10 * scale.max(f64::MIN_POSITIVE);
    let mut half = eig.eigenvectors.clone();
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -neg_tol {
            return Err(Error::Numerical(format!(
                "covariance has a negative eigenvalue {lambda:.3e}"
            )));
        }
        let sd = (lambda.max(0.0) / total_samples as f64).sqrt();
        half.column_mut(k).scale_mut(sd);
    }

    let mut abs_dev = vec![Vec::with_capacity(draws); p];
    let mut norms = Vec::with_capacity(draws);
    let mut z = DVector::zeros(p);
    for _ in 0..draws {
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let dev = &half * &z;
        norms.push(dev.norm());
        for (j, &v) in dev.iter().enumerate() {
            abs_dev[j].push(v.abs());
        }
    }

    let per_feature = DVector::from_iterator(p, abs_dev.iter_mut().map(|v| quantile_of(v, quantile)));
    let overall = quantile_of(&mut norms, quantile);
    Ok(RiskReport {
        per_feature,
        overall,
        quantile,
        draws,
    })
}

/// Linear-interpolation sample quantile (the common "type 7" definition).
/// Sorts its input in place.
fn quantile_of(values: &mut [f64], q: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 1 {
        return values[0];
    }
    let h = q * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    values[lo] + (values[hi] - values[lo]) * frac
}

/// The exact Shapley attribution for an arbitrary set function, computed by
/// enumerating all p! orderings with memoized subset values. `value` maps a
/// subset of `0..p` (sorted ascending) to its score; the empty subset is
/// evaluated too.
pub fn exact_shapley<F>(p: usize, mut value: F) -> Result<DVector<f64>>
where
    F: FnMut(&[usize]) -> f64,
{
    if p == 0 {
        return Err(Error::InvalidInput("need at least one feature".into()));
    }
    if p > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            p,
            max_p: MAX_EXACT_FEATURES,
        });
    }

    let mut cache: Vec<f64> = vec![f64::NAN; 1 << p];
    let mut members = Vec::with_capacity(p);
    for mask in 0..(1usize << p) {
        members.clear();
        for j in 0..p {
            if (mask >> j) & 1 == 1 {
                members.push(j);
            }
        }
        cache[mask] = value(&members);
    }

    let mut sums = DVector::zeros(p);
    let mut count = 0u64;
    for perm in itertools::Itertools::permutations(0..p, p) {
        let mut mask = 0usize;
        let mut prev = cache[0];
        for &j in &perm {
            mask |= 1 << j;
            let cur = cache[mask];
            sums[j] += cur - prev;
            prev = cur;
        }
        count += 1;
    }
    Ok(sums / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(values: &[f64]) -> LiftVector {
        LiftVector {
            lifts: DVector::from_column_slice(values),
            r2_full: values.iter().sum(),
        }
    }

    #[test]
    fn batch_stats_single_sample() {
        let (mean, cov) = batch_stats(&[lv(&[1.0, -2.0])]).unwrap();
        assert_eq!(mean.as_slice(), &[1.0, -2.0]);
        assert_eq!(cov, DMatrix::zeros(2, 2));
    }

    #[test]
    fn batch_stats_two_samples_closed_form() {
        let (mean, cov) = batch_stats(&[lv(&[0.0, 0.0]), lv(&[2.0, 4.0])]).unwrap();
        assert_eq!(mean.as_slice(), &[1.0, 2.0]);
        // Biased covariance of two points x and -x from their mean: x x^T.
        assert_eq!(cov[(0, 0)], 1.0);
        assert_eq!(cov[(0, 1)], 2.0);
        assert_eq!(cov[(1, 0)], 2.0);
        assert_eq!(cov[(1, 1)], 4.0);
    }

    #[test]
    fn merging_batches_equals_pooled_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let all: Vec<LiftVector> = (0..100)
            .map(|_| {
                lv(&[
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal) * 2.0 + 1.0,
                    rng.sample::<f64, _>(StandardNormal) - 0.5,
                ])
            })
            .collect();

        let mut est = AttributionEstimate::new(3, 50).unwrap();
        for chunk in all.chunks(50) {
            let (mean, cov) = batch_stats(chunk).unwrap();
            est.merge_batch(&mean, &cov, chunk.len()).unwrap();
        }
        let (pooled_mean, pooled_cov) = batch_stats(&all).unwrap();
        assert!((est.s_hat() - &pooled_mean).amax() < 1e-13);
        assert!((est.cov_biased() - &pooled_cov).amax() < 1e-13);
        assert_eq!(est.total_samples(), 100);

        let unbiased = est.unbiased_cov().unwrap();
        assert!((unbiased - pooled_cov * (100.0 / 99.0)).amax() < 1e-13);
    }

    #[test]
    fn merge_rejects_wrong_batch_size() {
        let mut est = AttributionEstimate::new(2, 8).unwrap();
        let (mean, cov) = batch_stats(&[lv(&[1.0, 2.0])]).unwrap();
        assert!(est.merge_batch(&mean, &cov, 1).is_err());
    }

    #[test]
    fn zero_batches_merge_to_zero() {
        let mut est = AttributionEstimate::new(2, 4).unwrap();
        let zeros = vec![lv(&[0.0, 0.0]); 4];
        let (mean, cov) = batch_stats(&zeros).unwrap();
        est.merge_batch(&mean, &cov, 4).unwrap();
        est.merge_batch(&mean, &cov, 4).unwrap();
        assert_eq!(est.s_hat().as_slice(), &[0.0, 0.0]);
        assert_eq!(est.cov_biased(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn risk_of_zero_covariance_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let report = risk_estimate(&DMatrix::zeros(3, 3), 100, 0.95, 500, &mut rng).unwrap();
        assert_eq!(report.per_feature.as_slice(), &[0.0, 0.0, 0.0]);
        assert_eq!(report.overall, 0.0);
    }

    #[test]
    fn scalar_risk_matches_normal_quantile() {
        // For p = 1, sigma^2 = 1, K = 100 the deviation is N(0, 1/100) and
        // the 0.95 quantile of |dev| is 1.96 / 10.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cov = DMatrix::from_element(1, 1, 1.0);
        let report = risk_estimate(&cov, 100, 0.95, 1_000_000, &mut rng).unwrap();
        assert!((report.per_feature[0] - 0.196).abs() < 2e-3);
        assert!((report.overall - 0.196).abs() < 2e-3);
    }

    #[test]
    fn diagonal_risk_scales_per_feature() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cov = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let report = risk_estimate(&cov, 4, 0.95, 1_000_000, &mut rng).unwrap();
        assert!((report.per_feature[0] - 1.96).abs() < 1e-2);
        assert!((report.per_feature[1] - 0.98).abs() < 1e-2);
        assert!(report.overall >= report.per_feature[0]);
    }

    #[test]
    fn risk_rejects_bad_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cov = DMatrix::identity(2, 2);
        assert!(risk_estimate(&cov, 100, 0.0, 10, &mut rng).is_err());
        assert!(risk_estimate(&cov, 100, 1.0, 10, &mut rng).is_err());
        assert!(risk_estimate(&cov, 1, 0.9, 10, &mut rng).is_err());
        let indefinite = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(risk_estimate(&indefinite, 100, 0.9, 10, &mut rng).is_err());
    }

    #[test]
    fn exact_shapley_of_additive_value_is_the_weights() {
        let weights = [0.5, -1.0, 2.0, 0.25];
        let s = exact_shapley(4, |subset| subset.iter().map(|&j| weights[j]).sum()).unwrap();
        for j in 0..4 {
            assert!((s[j] - weights[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_shapley_splits_symmetric_pairs() {
        // v(S) = 1 if S contains both features, else 0; each gets 1/2.
        let s = exact_shapley(2, |subset| if subset.len() == 2 { 1.0 } else { 0.0 }).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15);
        assert!((s[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_shapley_refuses_large_p() {
        match exact_shapley(11, |_| 0.0) {
            Err(Error::TooManyFeatures { p, max_p }) => {
                assert_eq!(p, 11);
                assert_eq!(max_p, MAX_EXACT_FEATURES);
            }
            other => panic!("expected TooManyFeatures, got {other:?}"),
        }
    }

    #[test]
    fn quantile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(quantile_of(&mut v, 0.5), 2.5);
        let mut v = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_of(&mut v, 0.95), 4.8);
    }
}

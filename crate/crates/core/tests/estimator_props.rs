//! Streaming-equals-pooled properties for the batched estimator and shape
//! invariants of its covariance.

use lsq_shapley::chains::LiftVector;
use lsq_shapley::estimator::{batch_stats, AttributionEstimate};
use nalgebra::DVector;
use proptest::prelude::*;

fn lifts_strategy(p: usize, n: usize) -> impl Strategy<Value = Vec<LiftVector>> {
    prop::collection::vec(prop::collection::vec(-2.0..2.0f64, p), n).prop_map(|rows| {
        rows.into_iter()
            .map(|row| {
                let r2_full = row.iter().sum();
                LiftVector {
                    lifts: DVector::from_vec(row),
                    r2_full,
                }
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Merging equally sized batches must reproduce the statistics of the
    /// concatenated sample set, whatever the batch layout.
    #[test]
    fn streaming_equals_pooled(
        (batch_size, all) in (2usize..8, 1usize..6, 1usize..4).prop_flat_map(|(b, nb, p)| {
            (Just(b), lifts_strategy(p, b * nb))
        }),
    ) {
        let total = all.len();
        let p = all[0].lifts.len();
        let mut est = AttributionEstimate::new(p, batch_size).unwrap();
        for chunk in all.chunks(batch_size) {
            let (mean, cov) = batch_stats(chunk).unwrap();
            est.merge_batch(&mean, &cov, chunk.len()).unwrap();
        }

        let (pooled_mean, pooled_cov) = batch_stats(&all).unwrap();
        prop_assert!((est.s_hat() - &pooled_mean).amax() <= 1e-12);
        prop_assert!((est.cov_biased() - &pooled_cov).amax() <= 1e-12);
        prop_assert_eq!(est.total_samples(), total);

        // The running covariance stays symmetric and positive semidefinite.
        let cov = est.cov_biased();
        prop_assert!((cov - cov.transpose()).amax() <= 1e-12);
        let eig = cov.clone().symmetric_eigen();
        let scale = cov.norm().max(1e-300);
        for &lambda in eig.eigenvalues.iter() {
            prop_assert!(lambda >= -1e-10 * scale, "eigenvalue {lambda}");
        }

        let unbiased = est.unbiased_cov().unwrap();
        let factor = total as f64 / (total as f64 - 1.0);
        prop_assert!((unbiased - pooled_cov * factor).amax() <= 1e-12);
    }

    /// A batch of identical vectors has zero covariance and the vector
    /// itself as mean.
    #[test]
    fn constant_batches_have_zero_spread(v in prop::collection::vec(-3.0..3.0f64, 1..5), reps in 2usize..9) {
        let lv = LiftVector { lifts: DVector::from_vec(v.clone()), r2_full: v.iter().sum() };
        let batch: Vec<LiftVector> = std::iter::repeat_with(|| lv.clone()).take(reps).collect();
        let (mean, cov) = batch_stats(&batch).unwrap();
        prop_assert!((mean - DVector::from_vec(v.clone())).amax() <= 1e-14);
        prop_assert!(cov.amax() <= 1e-14);
    }
}

//! End-to-end attribution runs.
//!
//! A run reduces the train and test splits once, then streams batches of
//! permutation chains through the solver. After every batch the running
//! estimate is updated and its sampling risk re-estimated; the run stops
//! early as soon as the estimated overall error drops below the tolerance.
//!
//! Within a batch, chains are solved in parallel and collected in sampler
//! order, and all cross-batch state is updated serially, so a run is
//! bit-reproducible for a fixed configuration regardless of thread count.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chains::{lift_for_permutation, LiftVector, Permutation};
use crate::error::{Error, Result};
use crate::estimator::{batch_stats, risk_estimate, AttributionEstimate, RiskReport};
use crate::linalg;
use crate::reduction::{
    center, cholesky_reduce_dataset, qr_reduce, ridge_stack, CenteringInfo, Dataset, ReducedData,
    DEFAULT_BLOCK_ROWS,
};
use crate::sampling::{PermutationSampler, SamplerConfig, SamplerKind};

/// Distinguishes the risk-estimation random stream from the sampler's, so
/// both can be derived from one user-facing seed.
const RISK_STREAM_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

/// Which algorithm turns the raw data into a [`ReducedData`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReductionPath {
    Qr,
    Cholesky,
}

/// Everything that determines a run besides the data itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Total permutation budget K (pairs count once under antithetical
    /// sampling).
    pub max_permutations: usize,
    /// Permutations per batch; must divide `max_permutations`.
    pub batch_size: usize,
    /// Stop once the estimated overall error falls below this.
    pub tolerance: f64,
    /// Quantile level for the error estimates.
    pub quantile: f64,
    /// Normal draws per risk estimate.
    pub risk_draws: usize,
    pub sampler: SamplerConfig,
    /// Ridge penalty applied to the training fit, if any.
    pub ridge_lambda: Option<f64>,
    /// Center both splits by the training means before fitting.
    pub center: bool,
    pub reduction_path: ReductionPath,
    /// Seed for the risk estimator's draws (the sampler has its own seed).
    pub seed: u64,
}

impl RunConfig {
    /// The default configuration for `p` features: 2^13 quasi-Monte Carlo
    /// permutations in batches of 2^8, 95% error quantiles from 1000 draws,
    /// tolerance 0.01, centered QR reduction.
    pub fn for_dimension(p: usize) -> Self {
        Self {
            max_permutations: 1 << 13,
            batch_size: 1 << 8,
            tolerance: 1e-2,
            quantile: 0.95,
            risk_draws: 1000,
            sampler: SamplerConfig::new(SamplerKind::ArgsortQmc, 0, false, p),
            ridge_lambda: None,
            center: true,
            reduction_path: ReductionPath::Qr,
            seed: 0,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.sampler.dimension != p {
            return Err(Error::InvalidConfig(format!(
                "sampler is configured for {} features but the data has {p}",
                self.sampler.dimension
            )));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidConfig(
                "batch size must be at least 2; a single sample has no spread to estimate risk from"
                    .into(),
            ));
        }
        if self.max_permutations < self.batch_size {
            return Err(Error::InvalidConfig(format!(
                "budget of {} permutations is smaller than the batch size {}",
                self.max_permutations, self.batch_size
            )));
        }
        if self.max_permutations % self.batch_size != 0 {
            return Err(Error::InvalidConfig(format!(
                "budget {} is not a whole number of batches of {}",
                self.max_permutations, self.batch_size
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile must lie strictly between 0 and 1, got {}",
                self.quantile
            )));
        }
        if self.risk_draws == 0 {
            return Err(Error::InvalidConfig(
                "risk estimation needs at least one draw".into(),
            ));
        }
        if let Some(lambda) = self.ridge_lambda {
            if !(lambda > 0.0) || !lambda.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "ridge lambda must be positive and finite, got {lambda}"
                )));
            }
        }
        Ok(())
    }
}

/// One row of the convergence history: the state right after a batch was
/// merged.
#[derive(Debug, Clone)]
pub struct BatchRecord {
    /// 1-based batch counter.
    pub batch_index: usize,
    /// Permutations consumed so far.
    pub samples: usize,
    /// Estimated overall error after this batch.
    pub sigma_hat: f64,
    /// The attribution estimate after this batch.
    pub shapley: DVector<f64>,
}

/// The outcome of an attribution run.
#[derive(Debug, Clone)]
pub struct AttributionResult {
    /// Estimated Shapley attribution of the out-of-sample R^2.
    pub shapley: DVector<f64>,
    /// Per-feature error quantiles at the configured level.
    pub per_feature_error: DVector<f64>,
    /// Estimated quantile of the overall attribution error.
    pub overall_error: f64,
    /// Out-of-sample R^2 of the full model; the attribution sums to this.
    pub r2_full: f64,
    /// Whether the tolerance was reached before the budget ran out.
    pub converged: bool,
    pub batches_used: usize,
    /// Chains actually solved and scored (twice the sample count under
    /// antithetical sampling).
    pub total_lift_vectors: usize,
    /// Per-batch snapshots, one per merged batch.
    pub history: Vec<BatchRecord>,
    /// Intercept of the full model in original coordinates, if the run
    /// centered the data.
    pub intercept: Option<f64>,
}

struct Prepared {
    train: ReducedData,
    test: ReducedData,
    centering: Option<CenteringInfo>,
}

fn reduce(data: &Dataset, path: ReductionPath) -> Result<ReducedData> {
    match path {
        ReductionPath::Qr => qr_reduce(data),
        ReductionPath::Cholesky => cholesky_reduce_dataset(data, DEFAULT_BLOCK_ROWS),
    }
}

fn prepare(train: &Dataset, test: &Dataset, config: &RunConfig) -> Result<Prepared> {
    let p = train.n_features();
    if test.n_features() != p {
        return Err(Error::InvalidInput(format!(
            "train has {p} features but test has {}",
            test.n_features()
        )));
    }

    let (train_c, test_c, centering) = if config.center {
        let (trn, tst, info) = center(train, test)?;
        (trn, tst, Some(info))
    } else {
        (train.clone(), test.clone(), None)
    };

    let train_r = match config.ridge_lambda {
        Some(lambda) => reduce(&ridge_stack(&train_c, lambda)?, config.reduction_path)?,
        None => reduce(&train_c, config.reduction_path)?,
    };
    let test_r = reduce(&test_c, config.reduction_path)?;
    Ok(Prepared {
        train: train_r,
        test: test_r,
        centering,
    })
}

/// Solution of the full-model fit on reduced data, in original coordinates.
fn full_solution(train: &ReducedData) -> DVector<f64> {
    let p = train.n_features();
    let mut theta = vec![0.0; p];
    linalg::solve_upper_prefix(train.r(), train.y_proj().as_slice(), p, &mut theta);
    DVector::from_vec(theta)
}

/// Out-of-sample R^2 of the full-model fit, straight from reduced data.
fn full_model_r2(train: &ReducedData, test: &ReducedData) -> Result<f64> {
    if test.label_sq_norm() <= 0.0 {
        return Err(Error::UndefinedMetric);
    }
    let theta = full_solution(train);
    let err = (test.r() * &theta - test.y_proj()).norm_squared() + test.residual_sq();
    Ok((test.label_sq_norm() - err) / test.label_sq_norm())
}

/// The lift vector for one permutation, averaged with its reversed chain
/// when antithetical sampling is on.
fn sample_lift(
    train: &ReducedData,
    test: &ReducedData,
    perm: &Permutation,
    antithetical: bool,
) -> Result<LiftVector> {
    let forward = lift_for_permutation(train, test, perm)?;
    if !antithetical {
        return Ok(forward);
    }
    let backward = lift_for_permutation(train, test, &perm.reverse())?;
    Ok(LiftVector {
        lifts: (forward.lifts + backward.lifts) * 0.5,
        r2_full: 0.5 * (forward.r2_full + backward.r2_full),
    })
}

/// Runs the full attribution pipeline on one train/test pair.
pub fn attribute(train: &Dataset, test: &Dataset, config: &RunConfig) -> Result<AttributionResult> {
    let p = train.n_features();
    config.validate(p)?;
    let prep = prepare(train, test, config)?;
    let r2_full = full_model_r2(&prep.train, &prep.test)?;
    let intercept = prep.centering.as_ref().map(|info| {
        info.label_mean - info.feature_means.dot(&full_solution(&prep.train))
    });

    let mut sampler = PermutationSampler::new(&config.sampler)?;
    let mut risk_rng = ChaCha8Rng::seed_from_u64(config.seed ^ RISK_STREAM_SALT);
    let mut estimate = AttributionEstimate::new(p, config.batch_size)?;
    let mut history = Vec::new();
    let antithetical = config.sampler.antithetical;

    let n_batches = config.max_permutations / config.batch_size;
    let mut final_report: Option<RiskReport> = None;
    for batch_index in 1..=n_batches {
        let perms = sampler.next_batch(config.batch_size);
        let lifts: Vec<LiftVector> = perms
            .par_iter()
            .map(|perm| sample_lift(&prep.train, &prep.test, perm, antithetical))
            .collect::<Result<_>>()?;

        let (mean, cov) = batch_stats(&lifts)?;
        estimate.merge_batch(&mean, &cov, lifts.len())?;
        debug_assert!(
            (estimate.s_hat().sum() - r2_full).abs() <= 1e-8,
            "attribution stopped summing to the full-model R^2"
        );

        let report = risk_estimate(
            &estimate.unbiased_cov()?,
            estimate.total_samples(),
            config.quantile,
            config.risk_draws,
            &mut risk_rng,
        )?;
        history.push(BatchRecord {
            batch_index,
            samples: estimate.total_samples(),
            sigma_hat: report.overall,
            shapley: estimate.s_hat().clone(),
        });
        let converged = report.overall < config.tolerance;
        final_report = Some(report);
        if converged {
            break;
        }
    }

    let report = final_report.expect("at least one batch always runs");
    let batches_used = estimate.batches_done();
    let chains_per_sample = if antithetical { 2 } else { 1 };
    Ok(AttributionResult {
        shapley: estimate.s_hat().clone(),
        per_feature_error: report.per_feature,
        overall_error: report.overall,
        converged: report.overall < config.tolerance,
        r2_full,
        batches_used,
        total_lift_vectors: estimate.total_samples() * chains_per_sample,
        history,
        intercept,
    })
}

/// Out-of-sample R^2 of the full model under the same preprocessing the
/// attribution run would use. Sampler settings are ignored.
pub fn r2_full(train: &Dataset, test: &Dataset, config: &RunConfig) -> Result<f64> {
    let prep = prepare(train, test, config)?;
    full_model_r2(&prep.train, &prep.test)
}

/// Evaluates `r2_full` for each candidate ridge penalty and returns the
/// penalty with the best out-of-sample fit together with that R^2.
pub fn select_ridge_lambda(
    train: &Dataset,
    test: &Dataset,
    config: &RunConfig,
    candidates: &[f64],
) -> Result<(f64, f64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no ridge candidates given".into()));
    }
    let mut best: Option<(f64, f64)> = None;
    for &lambda in candidates {
        let mut c = config.clone();
        c.ridge_lambda = Some(lambda);
        let r2 = r2_full(train, test, &c)?;
        if best.map_or(true, |(_, b)| r2 > b) {
            best = Some((lambda, r2));
        }
    }
    Ok(best.expect("candidates is nonempty"))
}

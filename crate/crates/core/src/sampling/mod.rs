//! Random and quasi-random permutation sampling.
//!
//! Two interchangeable sources of feature permutations: plain Monte Carlo
//! (Fisher-Yates driven by a counter-based generator) and argsort
//! quasi-Monte Carlo, which ranks the coordinates of scrambled Sobol'
//! points. The argsort construction maps a low-discrepancy point set onto
//! the permutohedron, so consecutive permutations cover the space of
//! orderings far more evenly than independent draws.

mod sobol;

pub use sobol::{SobolStream, MAX_DIMENSION};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chains::Permutation;
use crate::error::{Error, Result};

/// Which source of permutations to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    MonteCarlo,
    ArgsortQmc,
}

/// Full description of a permutation source, kept separate from the run
/// configuration so samplers can be built and tested on their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    pub seed: u64,
    /// Pair every permutation with its reversal and average the two chains.
    pub antithetical: bool,
    /// Number of features being permuted.
    pub dimension: usize,
}

impl SamplerConfig {
    pub fn new(kind: SamplerKind, seed: u64, antithetical: bool, dimension: usize) -> Self {
        Self {
            kind,
            seed,
            antithetical,
            dimension,
        }
    }
}

/// A uniformly random permutation of `0..p` by Fisher-Yates.
pub fn uniform_permutation(rng: &mut impl Rng, p: usize) -> Permutation {
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    Permutation::from_order_unchecked(order)
}

/// The permutation that sorts the coordinates of `point` ascending, with
/// ties broken toward the lower index. Applied to quasi-random points this
/// is the argsort map from the unit cube onto orderings.
pub fn argsort_permutation(point: &[f64]) -> Permutation {
    let mut order: Vec<usize> = (0..point.len()).collect();
    order.sort_by(|&a, &b| point[a].total_cmp(&point[b]).then_with(|| a.cmp(&b)));
    Permutation::from_order_unchecked(order)
}

/// A stateful source of permutations configured by a [`SamplerConfig`].
pub enum PermutationSampler {
    MonteCarlo { rng: ChaCha8Rng, dimension: usize },
    ArgsortQmc { stream: SobolStream, point: Vec<f64> },
}

impl PermutationSampler {
    pub fn new(config: &SamplerConfig) -> Result<Self> {
        if config.dimension == 0 {
            return Err(Error::InvalidInput(
                "cannot sample permutations of zero features".into(),
            ));
        }
        Ok(match config.kind {
            SamplerKind::MonteCarlo => PermutationSampler::MonteCarlo {
                rng: ChaCha8Rng::seed_from_u64(config.seed),
                dimension: config.dimension,
            },
            SamplerKind::ArgsortQmc => PermutationSampler::ArgsortQmc {
                stream: SobolStream::scrambled(config.dimension, config.seed)?,
                point: vec![0.0; config.dimension],
            },
        })
    }

    pub fn next_permutation(&mut self) -> Permutation {
        match self {
            PermutationSampler::MonteCarlo { rng, dimension } => {
                uniform_permutation(rng, *dimension)
            }
            PermutationSampler::ArgsortQmc { stream, point } => {
                stream.fill_next(point);
                argsort_permutation(point)
            }
        }
    }

    pub fn next_batch(&mut self, count: usize) -> Vec<Permutation> {
        (0..count).map(|_| self.next_permutation()).collect()
    }
}

/// The first `count` permutations a fresh sampler with this configuration
/// would produce.
pub fn permutation_stream(config: &SamplerConfig, count: usize) -> Result<Vec<Permutation>> {
    let mut sampler = PermutationSampler::new(config)?;
    Ok(sampler.next_batch(count))
}

use thiserror::Error;

/// Errors reported by the attribution library.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed data: shape mismatches, empty inputs, out-of-range indices.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A run configuration that fails validation before any work starts.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The training features are numerically rank deficient.
    #[error(
        "feature matrix is rank deficient: |R[{column},{column}]| = {diag:.3e} \
         is below the threshold {threshold:.3e}; remove collinear columns or add a ridge penalty"
    )]
    RankDeficient {
        column: usize,
        diag: f64,
        threshold: f64,
    },

    /// The Gram matrix accumulated for the Cholesky path is not usably
    /// positive definite. The QR path is more robust for such data.
    #[error(
        "Gram matrix is numerically singular at pivot {pivot}; \
         the data is too ill-conditioned for the Cholesky path, try the QR path"
    )]
    IllConditionedGram { pivot: usize },

    /// The test labels have zero norm, so out-of-sample R^2 is undefined.
    #[error("test labels are identically zero; out-of-sample R^2 is undefined")]
    UndefinedMetric,

    /// Too few samples for the requested statistic.
    #[error("need at least {needed} samples, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    /// The embedded Sobol' direction-number table does not cover the
    /// requested dimension.
    #[error("Sobol' dimension {requested} exceeds the supported maximum of {max}")]
    UnsupportedDimension { requested: usize, max: usize },

    /// Exact enumeration over p! permutations was refused.
    #[error("exact Shapley enumeration over {p}! permutations is infeasible; the limit is p <= {max_p}")]
    TooManyFeatures { p: usize, max_p: usize },

    /// An internal numerical failure that indicates a bug or pathological data.
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

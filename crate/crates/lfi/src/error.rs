//! Crate-wide error type.

use thiserror::Error;

/// Errors produced anywhere in the inference pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter component lies on or outside its prior box.
    #[error("parameter {name:?} = {value} is on or outside its bounds ({lower}, {upper})")]
    OutOfBounds {
        name: String,
        value: f64,
        lower: f64,
        upper: f64,
    },

    /// Two samples that must have equal length do not.
    #[error("sample length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    /// A sample is empty or contains non-finite values.
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    /// A nearest-neighbour distance of zero makes the divergence estimate
    /// undefined.
    #[error("degenerate distances: {0}")]
    DegenerateDistances(String),

    /// A calibration pool cannot produce a usable threshold or weight.
    #[error("degenerate calibration pool: {0}")]
    DegeneratePool(String),

    /// An experiment or estimator configuration is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A model parameter violates the simulator's constraints.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The auxiliary-model fit did not converge to a usable optimum.
    #[error("mixture fit failed: {0}")]
    FitFailure(String),

    /// The observed information at the fitted optimum is not positive
    /// definite.
    #[error("observed information is not positive definite")]
    IllConditionedFit,

    /// The estimated synthetic-likelihood covariance admits no Cholesky
    /// factor.
    #[error("synthetic-likelihood covariance is singular")]
    SingularCovariance,

    /// A summary statistic could not be computed from a dataset.
    #[error("summary statistic unavailable: {0}")]
    SummaryFailure(String),

    /// Simulation-count tuning could not find a usable value.
    #[error("tuning failed: {0}")]
    TuningFailure(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// A data or configuration file could not be parsed.
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

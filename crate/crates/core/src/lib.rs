//! Differentially private zeroth-order optimization.
//!
//! The crate trains models through a black-box per-example loss oracle. Each
//! step perturbs the parameters along a seeded Gaussian direction, measures
//! per-example loss differences at `theta +/- phi * z`, clips and sums them,
//! and privatizes the single resulting scalar with Gaussian or Laplace noise.
//! An update is therefore fully described by `(seed, coefficient)`.
//!
//! Modules:
//!
//! * [`rng`], [`data`], [`oracle`], [`sampling`]: pinned randomness, datasets,
//!   the loss-oracle interface, Poisson sampling and scalar clipping.
//! * [`accountant`]: closed-form, privacy-loss-distribution and Monte-Carlo
//!   accounting for subsampled Gaussian and Laplace mechanisms.
//! * [`optimizer`]: the DP-ZO loop, n-SPSA, DP-SGD, and the seed-replay log.
//! * [`tasks`]: synthetic classification data and built-in models.
//! * [`audit`]: canary membership-inference measurement.
//! * [`report`]: `key=value` report serialization.

pub mod accountant;
pub mod audit;
pub mod data;
pub mod optimizer;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod sampling;
pub mod tasks;

pub use data::{Dataset, Example};
pub use oracle::{LossOracle, ParamVector};
pub use rng::{gaussian_vector, laplace_scalar, make_rng, Rng};
pub use sampling::{clip_scalar, poisson_sample};

use thiserror::Error;

/// Errors from the primitive layer.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("dataset must contain at least one example")]
    EmptyDataset,
    #[error("example {index} has {got} features, expected {expected}")]
    RaggedFeatures {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("parameter vector contains a non-finite entry at index {0}")]
    NonFiniteParam(usize),
    #[error("malformed parameter file: {0}")]
    MalformedParams(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv row {row}: {message}")]
    CsvFormat { row: usize, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

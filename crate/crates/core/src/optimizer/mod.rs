//! DP-ZO training, n-SPSA, the DP-SGD baseline and the seed-replay log.
//!
//! A DP-ZO step draws a Poisson batch, evaluates per-example loss
//! differences at `theta +/- phi * z` for a seeded Gaussian direction `z`,
//! clips each difference to `[-C, C]`, sums them in ascending index order,
//! adds Gaussian `N(0, C^2 sigma^2)` or Laplace `(0, C sigma)` noise and
//! divides by `B * 2 * phi` with `B` the expected batch size. The update
//! `theta <- theta - lr * s * z` is recorded as `(seed, -lr * s)`.

mod config;
mod dpsgd;
mod dpzo;
mod log;
mod spsa;

pub use config::{Sampling, TrainConfig};
pub use dpsgd::{clip_l2, dpsgd_step, train_dpsgd};
pub use dpzo::{
    batch_indices, clipped_sum, dpzo_step, noise_seed, nspsa_step, perturbation_seed,
    privatize_sum, train_dpzo, train_dpzo_monitored, MetricPoint, TrainResult,
};
pub use log::{apply_record, replay, UpdateLog, UpdateRecord, LOG_FORMAT_VERSION, LOG_MAGIC};
pub use spsa::{perturbation, spsa_loss_diffs};

use thiserror::Error;

use crate::accountant::AccountantError;
use crate::CoreError;

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("oracle returned a non-finite loss for batch position {index}")]
    NonFiniteLoss { index: usize },
    #[error("step {step} produced a non-finite update scalar")]
    NonFiniteStep { step: u64 },
    #[error("oracle does not provide analytic gradients")]
    MissingGradient,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unsupported update log version {0}")]
    UnknownVersion(u16),
    #[error("malformed update log: {0}")]
    MalformedLog(String),
    #[error("accountant: {0}")]
    Accountant(#[from] AccountantError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

//! Built-in desk-scale tasks: synthetic binary classification, logistic
//! regression and a one-hidden-layer tanh network.
//!
//! Labels are `+1` / `-1`; any label `> 0` counts as positive. A score of
//! exactly zero predicts `+1`.

mod models;
mod synthetic;

pub use models::{Model, ModelKind, ModelSpec};
pub use synthetic::{make_synthetic, make_synthetic_split, SyntheticSpec};

use thiserror::Error;

use crate::data::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error("invalid task specification: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
}

/// Fraction of examples whose predicted sign matches the label.
pub fn evaluate_accuracy(theta: &[f64], data: &Dataset, model: &Model) -> Result<f64, TaskError> {
    if theta.len() != model.param_count() {
        return Err(TaskError::DimensionMismatch {
            expected: model.param_count(),
            got: theta.len(),
        });
    }
    if data.dim() != model.spec().d {
        return Err(TaskError::DimensionMismatch {
            expected: model.spec().d,
            got: data.dim(),
        });
    }
    let correct = data
        .iter()
        .filter(|x| model.predict(theta, &x.features) == sign_label(x.label))
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// `+1` for positive labels, `-1` otherwise.
pub fn sign_label(label: f64) -> f64 {
    if label > 0.0 {
        1.0
    } else {
        -1.0
    }
}

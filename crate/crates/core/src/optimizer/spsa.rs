use rayon::prelude::*;

use crate::data::Example;
use crate::oracle::{LossOracle, ParamVector};
use crate::rng::{gaussian_vector, Rng};

use super::OptimError;

/// Batches at least this large are evaluated in parallel.
const PARALLEL_BATCH: usize = 64;

/// The perturbation direction `z ~ N(0, I_d)` for `seed`.
pub fn perturbation(seed: u64, d: usize) -> Vec<f64> {
    gaussian_vector(&mut Rng::new(seed), d)
}

/// Per-example `L(theta + phi z; x) - L(theta - phi z; x)` with `z` from
/// `seed`. The perturbed points are built in scratch buffers, so `theta` is
/// never modified.
pub fn spsa_loss_diffs<O: LossOracle + ?Sized>(
    oracle: &O,
    theta: &ParamVector,
    phi: f64,
    seed: u64,
    batch: &[&Example],
) -> Result<Vec<f64>, OptimError> {
    if !(phi.is_finite() && phi > 0.0) {
        return Err(OptimError::InvalidConfig(format!("phi must be positive, got {phi}")));
    }
    if batch.is_empty() {
        return Ok(Vec::new());
    }
    let d = theta.dim();
    if oracle.dim() != d {
        return Err(OptimError::DimensionMismatch {
            expected: oracle.dim(),
            got: d,
        });
    }
    let z = perturbation(seed, d);
    let plus: Vec<f64> = theta.iter().zip(&z).map(|(t, z)| t + phi * z).collect();
    let minus: Vec<f64> = theta.iter().zip(&z).map(|(t, z)| t - phi * z).collect();
    let diff = |x: &Example| oracle.loss(&plus, x) - oracle.loss(&minus, x);
    let diffs: Vec<f64> = if batch.len() >= PARALLEL_BATCH {
        batch.par_iter().map(|x| diff(x)).collect()
    } else {
        batch.iter().map(|x| diff(x)).collect()
    };
    if let Some(index) = diffs.iter().position(|v| !v.is_finite()) {
        return Err(OptimError::NonFiniteLoss { index });
    }
    Ok(diffs)
}

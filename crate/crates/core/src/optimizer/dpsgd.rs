use crate::data::{Dataset, Example};
use crate::oracle::{LossOracle, ParamVector};
use crate::rng::{derive_seed, Rng};

use super::dpzo::{batch_indices, check_dims, private_report, snapshot, TrainResult};
use super::log::UpdateLog;
use super::{OptimError, TrainConfig};

const STREAM_SGD_NOISE: u64 = 4;

/// Scales `g` in place so its L2 norm is at most `c`. Infinite `c` is a no-op.
pub fn clip_l2(g: &mut [f64], c: f64) {
    if !c.is_finite() {
        return;
    }
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > c {
        let scale = c / norm;
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
}

/// One DP-SGD step: per-example gradients clipped to L2 norm `config.clip`,
/// summed in index order, plus `N(0, sigma^2 c^2)` per coordinate, scaled by
/// `lr / B`.
pub fn dpsgd_step<O: LossOracle + ?Sized>(
    theta: &mut ParamVector,
    data: &Dataset,
    oracle: &O,
    config: &TrainConfig,
    step: u64,
) -> Result<(), OptimError> {
    if !oracle.has_gradient() {
        return Err(OptimError::MissingGradient);
    }
    let d = theta.dim();
    let idx = batch_indices(config, data.len(), step);
    let batch: Vec<&Example> = data.select(&idx);
    let mut sum = vec![0.0; d];
    for x in batch {
        let mut g = oracle
            .gradient(theta, x)
            .ok_or(OptimError::MissingGradient)?;
        if g.len() != d {
            return Err(OptimError::DimensionMismatch {
                expected: d,
                got: g.len(),
            });
        }
        clip_l2(&mut g, config.clip);
        for (s, v) in sum.iter_mut().zip(&g) {
            *s += v;
        }
    }
    if config.sigma > 0.0 && config.clip.is_finite() {
        let mut rng = Rng::new(derive_seed(config.root_seed, STREAM_SGD_NOISE, step));
        let scale = config.sigma * config.clip;
        for s in sum.iter_mut() {
            *s += scale * rng.gaussian();
        }
    }
    let rate = config.lr / config.expected_batch as f64;
    for (t, s) in theta.iter_mut().zip(&sum) {
        *t -= rate * s;
    }
    if !theta.is_finite() {
        return Err(OptimError::NonFiniteStep { step });
    }
    Ok(())
}

/// Trains with DP-SGD. The returned log is empty: gradient updates are not
/// seed-replayable.
pub fn train_dpsgd<O: LossOracle + ?Sized>(
    config: &TrainConfig,
    data: &Dataset,
    oracle: &O,
    init: &ParamVector,
) -> Result<TrainResult, OptimError> {
    config.validate(data.len())?;
    check_dims(oracle, init, data)?;
    let privacy = private_report(config, data.len())?;
    let mut theta = init.clone();
    let mut history = vec![snapshot(0, &theta, data, oracle, None)];
    for step in 0..config.steps {
        dpsgd_step(&mut theta, data, oracle, config, step)?;
        let done = step + 1;
        if (config.eval_every > 0 && done % config.eval_every == 0) || done == config.steps {
            history.push(snapshot(done, &theta, data, oracle, None));
        }
    }
    Ok(TrainResult {
        params: theta,
        log: UpdateLog::new(init.dim(), config.root_seed),
        privacy,
        history,
    })
}

use crate::accountant::{account, AccountOptions, Mechanism, PrivacyReport};
use crate::data::{Dataset, Example};
use crate::oracle::{LossOracle, ParamVector};
use crate::rng::{derive_seed, Rng};
use crate::sampling::{clip_scalar, poisson_sample};

use super::log::{apply_record, UpdateLog, UpdateRecord};
use super::spsa::spsa_loss_diffs;
use super::{OptimError, Sampling, TrainConfig};

const STREAM_BATCH: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;
const STREAM_PERTURB: u64 = 1 << 32;

/// Seed of the `estimate`-th perturbation direction at `step`. Estimate 0
/// is the one plain DP-ZO uses.
pub fn perturbation_seed(root_seed: u64, step: u64, estimate: usize) -> u64 {
    derive_seed(root_seed, STREAM_PERTURB + estimate as u64, step)
}

/// Seed of the mechanism noise stream at `step`.
pub fn noise_seed(root_seed: u64, step: u64) -> u64 {
    derive_seed(root_seed, STREAM_NOISE, step)
}

/// Batch of `step`, as ascending indices into a dataset of `n` examples.
pub fn batch_indices(config: &TrainConfig, n: usize, step: u64) -> Vec<usize> {
    match config.sampling {
        Sampling::Poisson => {
            let mut rng = Rng::new(derive_seed(config.root_seed, STREAM_BATCH, step));
            poisson_sample(n, config.sample_rate(n), &mut rng)
        }
        Sampling::Shuffled => {
            let b = config.expected_batch as u64;
            let n64 = n as u64;
            let mut out = Vec::with_capacity(config.expected_batch);
            let mut epoch = u64::MAX;
            let mut perm = Vec::new();
            for k in step * b..(step + 1) * b {
                if k / n64 != epoch {
                    epoch = k / n64;
                    perm = (0..n).collect();
                    Rng::new(derive_seed(config.root_seed, STREAM_SHUFFLE, epoch)).shuffle(&mut perm);
                }
                out.push(perm[(k % n64) as usize]);
            }
            out.sort_unstable();
            out
        }
    }
}

/// Sum of the clipped values in the given order.
pub fn clipped_sum(diffs: &[f64], clip: f64) -> f64 {
    diffs.iter().map(|&v| clip_scalar(v, clip)).sum()
}

/// Noisy step scalar for one of `n_estimates` directions:
/// `(sum + noise) / (B * 2 * phi)`. Gaussian noise has standard deviation
/// `sqrt(n) C sigma`; Laplace noise has scale `n C sigma`.
pub fn privatize_sum(sum: f64, config: &TrainConfig, n_estimates: usize, rng: &mut Rng) -> f64 {
    let noise = if config.sigma > 0.0 && config.clip.is_finite() {
        let base = config.clip * config.sigma;
        match config.mechanism {
            Mechanism::Gaussian => (n_estimates as f64).sqrt() * base * rng.gaussian(),
            Mechanism::Laplace => rng.laplace(n_estimates as f64 * base),
        }
    } else {
        0.0
    };
    (sum + noise) / (config.expected_batch as f64 * 2.0 * config.phi)
}

/// One DP-ZO step with `config.n_spsa` directions evaluated at the current
/// parameters. Each direction's scalar is averaged in by applying
/// `coeff_j = -lr * s_j / n` in order. Returns the records applied.
pub fn nspsa_step<O: LossOracle + ?Sized>(
    theta: &mut ParamVector,
    data: &Dataset,
    oracle: &O,
    config: &TrainConfig,
    step: u64,
) -> Result<Vec<UpdateRecord>, OptimError> {
    let n = config.n_spsa;
    let batch_idx = batch_indices(config, data.len(), step);
    let batch: Vec<&Example> = data.select(&batch_idx);
    let mut noise_rng = Rng::new(noise_seed(config.root_seed, step));
    let mut records = Vec::with_capacity(n);
    for j in 0..n {
        let seed = perturbation_seed(config.root_seed, step, j);
        let diffs = spsa_loss_diffs(oracle, theta, config.phi, seed, &batch)?;
        let s = privatize_sum(clipped_sum(&diffs, config.clip), config, n, &mut noise_rng);
        let coeff = -config.lr * s / n as f64;
        if !coeff.is_finite() {
            return Err(OptimError::NonFiniteStep { step });
        }
        records.push(UpdateRecord { seed, coeff });
    }
    for r in &records {
        apply_record(theta, r);
    }
    Ok(records)
}

/// One plain DP-ZO step (a single direction).
pub fn dpzo_step<O: LossOracle + ?Sized>(
    theta: &mut ParamVector,
    data: &Dataset,
    oracle: &O,
    config: &TrainConfig,
    step: u64,
) -> Result<UpdateRecord, OptimError> {
    let single = TrainConfig {
        n_spsa: 1,
        ..*config
    };
    Ok(nspsa_step(theta, data, oracle, &single, step)?[0])
}

/// A metrics snapshot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricPoint {
    pub step: u64,
    /// Mean loss over the training set. Diagnostic only; not privatized.
    pub train_loss: f64,
    /// Metric from the monitor, typically held-out accuracy.
    pub eval_metric: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub params: ParamVector,
    pub log: UpdateLog,
    /// `None` for runs without a privacy guarantee.
    pub privacy: Option<PrivacyReport>,
    pub history: Vec<MetricPoint>,
}

/// Trains from `init` for `config.steps` steps.
pub fn train_dpzo<O: LossOracle + ?Sized>(
    config: &TrainConfig,
    data: &Dataset,
    oracle: &O,
    init: &ParamVector,
) -> Result<TrainResult, OptimError> {
    train_dpzo_monitored(config, data, oracle, init, None)
}

/// As [`train_dpzo`], also recording `monitor(theta)` at each metrics point.
pub fn train_dpzo_monitored<O: LossOracle + ?Sized>(
    config: &TrainConfig,
    data: &Dataset,
    oracle: &O,
    init: &ParamVector,
    monitor: Option<&dyn Fn(&[f64]) -> f64>,
) -> Result<TrainResult, OptimError> {
    config.validate(data.len())?;
    check_dims(oracle, init, data)?;
    let privacy = private_report(config, data.len())?;
    let mut theta = init.clone();
    let mut log = UpdateLog::new(init.dim(), config.root_seed);
    let mut history = vec![snapshot(0, &theta, data, oracle, monitor)];
    for step in 0..config.steps {
        let records = nspsa_step(&mut theta, data, oracle, config, step)?;
        log.records.extend(records);
        let done = step + 1;
        if (config.eval_every > 0 && done % config.eval_every == 0) || done == config.steps {
            history.push(snapshot(done, &theta, data, oracle, monitor));
        }
    }
    Ok(TrainResult {
        params: theta,
        log,
        privacy,
        history,
    })
}

pub(super) fn check_dims<O: LossOracle + ?Sized>(
    oracle: &O,
    init: &ParamVector,
    data: &Dataset,
) -> Result<(), OptimError> {
    if oracle.dim() != init.dim() {
        return Err(OptimError::DimensionMismatch {
            expected: oracle.dim(),
            got: init.dim(),
        });
    }
    if data.is_empty() {
        return Err(OptimError::InvalidConfig("empty dataset".into()));
    }
    Ok(())
}

pub(super) fn private_report(
    config: &TrainConfig,
    n: usize,
) -> Result<Option<PrivacyReport>, OptimError> {
    if !config.is_private() {
        return Ok(None);
    }
    let spec = config.privacy_spec(n)?;
    Ok(Some(account(&spec, config.accounting, &AccountOptions::default())?))
}

pub(super) fn snapshot<O: LossOracle + ?Sized>(
    step: u64,
    theta: &[f64],
    data: &Dataset,
    oracle: &O,
    monitor: Option<&dyn Fn(&[f64]) -> f64>,
) -> MetricPoint {
    let total: f64 = data.iter().map(|x| oracle.loss(theta, x)).sum();
    MetricPoint {
        step,
        train_loss: total / data.len() as f64,
        eval_metric: monitor.map(|m| m(theta)),
    }
}

//! Canary membership-inference audit.
//!
//! Each trial draws `n_canaries` canaries, inserts half of them into the
//! training set, trains, and scores every canary by its negated final loss
//! (a loss-threshold attack: low loss is evidence of membership). The
//! trial's AUC is the Mann-Whitney statistic of member against non-member
//! scores, ties counting one half.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::data::{Dataset, Example};
use crate::optimizer::{train_dpzo, OptimError, TrainConfig};
use crate::oracle::{LossOracle, ParamVector};
use crate::rng::{derive_seed, Rng};

const STREAM_CANARY: u64 = 20;
const STREAM_TRAIN: u64 = 21;
const STREAM_NULL: u64 = 22;
/// Outlier canaries have this many times the data's RMS feature norm.
pub const OUTLIER_SCALE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CanaryKind {
    /// A random direction at `OUTLIER_SCALE` times the data's RMS norm, with
    /// a random label.
    Outlier,
    /// Features of a random training example with its label flipped.
    Mislabeled,
}

impl std::str::FromStr for CanaryKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "outlier" => Ok(CanaryKind::Outlier),
            "mislabeled" | "mislabelled" => Ok(CanaryKind::Mislabeled),
            other => Err(format!("unknown canary kind `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ScoreRule {
    /// Negated final per-example loss.
    #[default]
    LossThreshold,
    /// Uniform scores that ignore membership; skips training. Null check.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditSpec {
    pub n_canaries: usize,
    pub kind: CanaryKind,
    pub trials: usize,
    pub score: ScoreRule,
    /// Training configuration; its root seed is replaced per trial.
    pub train: TrainConfig,
    /// Root of the per-trial canary and training seeds.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanaryScore {
    pub trial: usize,
    pub canary: usize,
    pub member: bool,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditResult {
    /// Mean of the per-trial AUCs.
    pub auc: f64,
    pub trial_aucs: Vec<f64>,
    pub scores: Vec<CanaryScore>,
    pub trials: usize,
    /// Two-sided 95% t interval for the mean AUC; infinite with one trial.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("invalid audit specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Mann-Whitney AUC, equal to the trapezoidal area under the ROC curve:
/// probability a random member outscores a random
/// non-member, ties counting one half. 0.5 when either side is empty.
pub fn auc(members: &[f64], non_members: &[f64]) -> f64 {
    if members.is_empty() || non_members.is_empty() {
        return 0.5;
    }
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&s| (s, true))
        .chain(non_members.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Sum of member ranks with ties given their average rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg_rank * all[i..j].iter().filter(|e| e.1).count() as f64;
        i = j;
    }
    let m = members.len() as f64;
    let n = non_members.len() as f64;
    (rank_sum - m * (m + 1.0) / 2.0) / (m * n)
}

/// Draws `count` canaries for `data`.
pub fn make_canaries(kind: CanaryKind, data: &Dataset, count: usize, rng: &mut Rng) -> Vec<Example> {
    let d = data.dim();
    match kind {
        CanaryKind::Outlier => {
            let mean_sq = data
                .iter()
                .map(|x| x.features.iter().map(|v| v * v).sum::<f64>())
                .sum::<f64>()
                / data.len() as f64;
            let radius = OUTLIER_SCALE * mean_sq.sqrt().max(1e-12);
            (0..count)
                .map(|_| {
                    let mut u = vec![0.0; d];
                    rng.fill_gaussian(&mut u);
                    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                    u.iter_mut().for_each(|v| *v *= radius / norm);
                    let label = if rng.unit() < 0.5 { 1.0 } else { -1.0 };
                    Example::new(u, label)
                })
                .collect()
        }
        CanaryKind::Mislabeled => (0..count)
            .map(|_| {
                let src = &data.examples()[rng.below(data.len() as u64) as usize];
                let label = if src.label > 0.0 { -1.0 } else { 1.0 };
                Example::new(src.features.clone(), label)
            })
            .collect(),
    }
}

/// Runs the audit. Trials run in parallel and are aggregated in order.
pub fn run_mia<O: LossOracle + ?Sized>(
    spec: &AuditSpec,
    data: &Dataset,
    oracle: &O,
    init: &ParamVector,
) -> Result<AuditResult, AuditError> {
    if spec.n_canaries < 2 || spec.n_canaries % 2 != 0 {
        return Err(AuditError::InvalidSpec(format!(
            "canary count must be even and at least 2, got {}",
            spec.n_canaries
        )));
    }
    if spec.trials == 0 {
        return Err(AuditError::InvalidSpec("need at least one trial".into()));
    }
    let per_trial: Vec<Result<Vec<CanaryScore>, AuditError>> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(spec, data, oracle, init, t))
        .collect();
    let mut scores = Vec::with_capacity(spec.trials * spec.n_canaries);
    let mut trial_aucs = Vec::with_capacity(spec.trials);
    for r in per_trial {
        let s = r?;
        let m: Vec<f64> = s.iter().filter(|c| c.member).map(|c| c.score).collect();
        let nm: Vec<f64> = s.iter().filter(|c| !c.member).map(|c| c.score).collect();
        trial_aucs.push(auc(&m, &nm));
        scores.extend(s);
    }
    let (mean, half) = mean_and_half_width(&trial_aucs, 0.975);
    Ok(AuditResult {
        auc: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        trial_aucs,
        scores,
        trials: spec.trials,
    })
}

fn run_trial<O: LossOracle + ?Sized>(
    spec: &AuditSpec,
    data: &Dataset,
    oracle: &O,
    init: &ParamVector,
    trial: usize,
) -> Result<Vec<CanaryScore>, AuditError> {
    let mut rng = Rng::new(derive_seed(spec.seed, STREAM_CANARY, trial as u64));
    let canaries = make_canaries(spec.kind, data, spec.n_canaries, &mut rng);
    let half = spec.n_canaries / 2;
    if spec.score == ScoreRule::Random {
        let mut null = Rng::new(derive_seed(spec.seed, STREAM_NULL, trial as u64));
        return Ok((0..spec.n_canaries)
            .map(|i| CanaryScore { trial, canary: i, member: i < half, score: null.unit() })
            .collect());
    }
    let mut train_set = data.clone();
    train_set
        .extend(canaries[..half].iter().cloned())
        .map_err(|e| AuditError::Optim(e.into()))?;
    let config = TrainConfig {
        root_seed: derive_seed(spec.seed, STREAM_TRAIN, trial as u64),
        ..spec.train
    };
    let result = train_dpzo(&config, &train_set, oracle, init)?;
    Ok(canaries
        .iter()
        .enumerate()
        .map(|(i, c)| CanaryScore {
            trial,
            canary: i,
            member: i < half,
            score: -oracle.loss(&result.params, c),
        })
        .collect())
}

/// Sample mean and the t-quantile half-width at level `q`. Infinite
/// half-width for fewer than two values.
fn mean_and_half_width(values: &[f64], q: f64) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(q);
    (mean, t * (var / n as f64).sqrt())
}

/// Paired comparison of two audits over the same trial seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PairedGap {
    /// Mean of `a_i - b_i`.
    pub mean: f64,
    pub std_error: f64,
    /// One-sided 95% lower confidence bound on the mean gap.
    pub lower95: f64,
    pub trials: usize,
}

impl PairedGap {
    pub fn significant(&self) -> bool {
        self.lower95 > 0.0
    }
}

/// Gap between paired per-trial AUCs `a` and `b`.
pub fn paired_gap(a: &[f64], b: &[f64]) -> Result<PairedGap, AuditError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(AuditError::InvalidSpec(
            "paired comparison needs two equal-length samples of at least two".into(),
        ));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (mean, half) = mean_and_half_width(&diffs, 0.95);
    let n = diffs.len() as f64;
    let var = diffs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(PairedGap {
        mean,
        std_error: (var / n).sqrt(),
        lower95: mean - half,
        trials: diffs.len(),
    })
}

impl AuditResult {
    /// CSV with header `trial,canary,member,score`.
    pub fn write_scores_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "trial,canary,member,score")?;
        for s in &self.scores {
            writeln!(w, "{},{},{},{:?}", s.trial, s.canary, u8::from(s.member), s.score)?;
        }
        Ok(())
    }

    pub fn save_scores_csv(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_scores_csv(&mut w)?;
        w.flush()
    }
}

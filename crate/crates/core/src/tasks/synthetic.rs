use crate::data::{Dataset, Example};
use crate::rng::{derive_seed, Rng};

use super::TaskError;

const STREAM_DIRECTION: u64 = 10;
const STREAM_TRAIN: u64 = 11;
const STREAM_TEST: u64 = 12;

/// Two Gaussian clusters at `+/- margin / 2` along a random unit direction,
/// unit-variance isotropic noise, a fraction `label_noise` of labels flipped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n: usize,
    pub d: usize,
    pub margin: f64,
    pub label_noise: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    fn validate(&self) -> Result<(), TaskError> {
        if self.n == 0 || self.d == 0 {
            return Err(TaskError::InvalidSpec("n and d must be positive".into()));
        }
        if !(self.margin.is_finite() && self.margin >= 0.0) {
            return Err(TaskError::InvalidSpec(format!("bad margin {}", self.margin)));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return Err(TaskError::InvalidSpec(format!(
                "label noise must lie in [0, 0.5), got {}",
                self.label_noise
            )));
        }
        Ok(())
    }

    /// The unit vector separating the clusters.
    pub fn direction(&self) -> Vec<f64> {
        let mut rng = Rng::new(derive_seed(self.seed, STREAM_DIRECTION, 0));
        loop {
            let mut u = vec![0.0; self.d];
            rng.fill_gaussian(&mut u);
            let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                u.iter_mut().for_each(|v| *v /= norm);
                return u;
            }
        }
    }
}

/// Generates the training set described by `spec`.
pub fn make_synthetic(spec: &SyntheticSpec) -> Result<Dataset, TaskError> {
    spec.validate()?;
    Ok(generate(spec, &spec.direction(), spec.n, STREAM_TRAIN))
}

/// Training set plus a held-out set of `n_test` examples from the same
/// distribution.
pub fn make_synthetic_split(
    spec: &SyntheticSpec,
    n_test: usize,
) -> Result<(Dataset, Dataset), TaskError> {
    spec.validate()?;
    if n_test == 0 {
        return Err(TaskError::InvalidSpec("n_test must be positive".into()));
    }
    let u = spec.direction();
    Ok((
        generate(spec, &u, spec.n, STREAM_TRAIN),
        generate(spec, &u, n_test, STREAM_TEST),
    ))
}

fn generate(spec: &SyntheticSpec, u: &[f64], n: usize, stream: u64) -> Dataset {
    let mut rng = Rng::new(derive_seed(spec.seed, stream, 0));
    let half = spec.margin / 2.0;
    let mut examples: Vec<Example> = (0..n)
        .map(|i| {
            let y = if i % 2 == 0 { 1.0 } else { -1.0 };
            let mut x = vec![0.0; spec.d];
            rng.fill_gaussian(&mut x);
            for (xi, ui) in x.iter_mut().zip(u) {
                *xi += y * half * ui;
            }
            Example::new(x, y)
        })
        .collect();
    // Flip the same number of labels in each class so the observed labels
    // stay balanced.
    let per_class = ((spec.label_noise * n as f64) / 2.0).round() as usize;
    for class in [0usize, 1] {
        let mut idx: Vec<usize> = (class..n).step_by(2).collect();
        rng.shuffle(&mut idx);
        for &i in idx.iter().take(per_class) {
            examples[i].label = -examples[i].label;
        }
    }
    Dataset::new(examples).expect("generated examples are consistent")
}

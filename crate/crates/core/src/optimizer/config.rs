use crate::accountant::{Mechanism, Method, PrivacySpec};

use super::OptimError;

/// How batches are formed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sampling {
    /// Independent inclusion with rate `expected_batch / n`. Required for
    /// the privacy guarantee.
    Poisson,
    /// Consecutive slices of a per-epoch shuffle, exactly `expected_batch`
    /// examples each. Non-private baseline only.
    Shuffled,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub phi: f64,
    /// Clipping threshold `C`. `f64::INFINITY` disables clipping.
    pub clip: f64,
    /// Noise multiplier. Zero disables noise.
    pub sigma: f64,
    pub mechanism: Mechanism,
    pub expected_batch: usize,
    pub steps: u64,
    pub root_seed: u64,
    pub n_spsa: usize,
    pub sampling: Sampling,
    /// Target delta for the attached privacy report.
    pub delta: f64,
    pub accounting: Method,
    /// Record metrics every this many steps; 0 records only the endpoints.
    pub eval_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-2,
            phi: 1e-3,
            clip: 1.0,
            sigma: 1.0,
            mechanism: Mechanism::Gaussian,
            expected_batch: 16,
            steps: 100,
            root_seed: 0,
            n_spsa: 1,
            sampling: Sampling::Poisson,
            delta: 1e-5,
            accounting: Method::Pld,
            eval_every: 0,
        }
    }
}

impl TrainConfig {
    /// Non-private baseline: shuffled batches, no clipping, no noise.
    pub fn non_private(self) -> Self {
        TrainConfig {
            clip: f64::INFINITY,
            sigma: 0.0,
            sampling: Sampling::Shuffled,
            ..self
        }
    }

    pub fn sample_rate(&self, n: usize) -> f64 {
        self.expected_batch as f64 / n as f64
    }

    /// Whether the run carries a differential privacy guarantee.
    pub fn is_private(&self) -> bool {
        self.sigma > 0.0 && self.clip.is_finite() && self.sampling == Sampling::Poisson
    }

    pub fn validate(&self, n: usize) -> Result<(), OptimError> {
        let bad = |m: String| Err(OptimError::InvalidConfig(m));
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.phi.is_finite() && self.phi > 0.0) {
            return bad(format!("phi must be positive, got {}", self.phi));
        }
        if !(self.clip > 0.0) {
            return bad(format!("clip must be positive, got {}", self.clip));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if self.expected_batch == 0 || self.expected_batch > n {
            return bad(format!(
                "expected batch must lie in [1, {n}], got {}",
                self.expected_batch
            ));
        }
        if self.n_spsa == 0 {
            return bad("n_spsa must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.delta) {
            return bad(format!("delta must lie in [0, 1), got {}", self.delta));
        }
        Ok(())
    }

    /// Accounting specification for a private run on `n` examples.
    ///
    /// n-SPSA releases `n` noisy scalars per step on one shared batch. With
    /// per-estimate Gaussian noise `N(0, n C^2 sigma^2)` this is one Gaussian
    /// release of an `n`-vector with L2 sensitivity `sqrt(n) C` at multiplier
    /// `sigma`; with Laplace scale `n C sigma` it is one Laplace release with
    /// L1 sensitivity `n C` at multiplier `sigma`. Either way the per-step
    /// specification equals the one-estimate case.
    pub fn privacy_spec(&self, n: usize) -> Result<PrivacySpec, OptimError> {
        Ok(PrivacySpec::new(
            self.mechanism,
            self.sigma,
            self.sample_rate(n),
            self.steps,
            self.delta,
        )?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let c = TrainConfig::default();
        assert!(c.validate(100).is_ok());
        assert!(c.validate(10).is_err());
        assert!(TrainConfig { lr: 0.0, ..c }.validate(100).is_err());
        assert!(TrainConfig { n_spsa: 0, ..c }.validate(100).is_err());
        assert!(TrainConfig { clip: f64::INFINITY, ..c }.validate(100).is_ok());
        assert!(TrainConfig { sigma: -1.0, ..c }.validate(100).is_err());
    }

    #[test]
    fn privacy_flag() {
        let c = TrainConfig::default();
        assert!(c.is_private());
        assert!(!c.non_private().is_private());
        assert!(!TrainConfig { sigma: 0.0, ..c }.is_private());
    }
}

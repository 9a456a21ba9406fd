//! Closed-form privacy parameters.

use libm::erfc;

use super::{AccountantError, Mechanism, PrivacySpec};

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Exact `delta(eps)` of the single-shot Gaussian mechanism with noise
/// standard deviation `sigma` and sensitivity `sensitivity`.
pub fn analytic_gaussian_delta(sigma: f64, sensitivity: f64, eps: f64) -> f64 {
    let a = sensitivity / (2.0 * sigma);
    let b = eps * sigma / sensitivity;
    let first = normal_cdf(a - b);
    let tail = normal_cdf(-a - b);
    let second = if tail > 0.0 {
        (eps + tail.ln()).exp()
    } else {
        0.0
    };
    (first - second).clamp(0.0, 1.0)
}

/// Pure epsilon of one Laplace release whose scale is `sigma` times the
/// sensitivity.
pub fn laplace_pure_eps(sigma: f64) -> f64 {
    1.0 / sigma
}

/// Amplification by Poisson subsampling for a pure-DP step:
/// `log(1 + p (e^eps - 1))`.
pub fn subsample_pure_eps(eps: f64, p: f64) -> f64 {
    (p * eps.exp_m1()).ln_1p()
}

/// Pure epsilon of `T` subsampled Laplace steps under basic composition.
pub fn pure_dp_laplace_epsilon(spec: &PrivacySpec) -> Result<f64, AccountantError> {
    if spec.mechanism != Mechanism::Laplace {
        return Err(AccountantError::WrongMechanism {
            expected: Mechanism::Laplace,
            got: spec.mechanism,
        });
    }
    let per_step = subsample_pure_eps(laplace_pure_eps(spec.sigma), spec.sample_rate);
    Ok(spec.steps as f64 * per_step)
}

//! Smallest noise multiplier meeting a target epsilon.

use super::{account, AccountOptions, AccountantError, Mechanism, Method, PrivacySpec};

/// Search bracket for the noise multiplier.
pub const SIGMA_MIN: f64 = 1e-2;
pub const SIGMA_MAX: f64 = 1e4;
/// Stop once the bracket ratio is at most this.
const RATIO_TOLERANCE: f64 = 1.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CalibrationResult {
    /// Feasible multiplier: its certified epsilon is at most the target.
    pub sigma: f64,
    /// Certified epsilon at `sigma`.
    pub epsilon: f64,
    /// Largest multiplier found infeasible, if any.
    pub infeasible_below: Option<f64>,
}

/// Bisects `log(sigma)` for the smallest multiplier whose certified epsilon
/// (upper bound) at `delta` is at most `target_eps`. Configurations the
/// numerical routes cannot represent count as infeasible.
pub fn calibrate_sigma(
    mechanism: Mechanism,
    target_eps: f64,
    delta: f64,
    sample_rate: f64,
    steps: u64,
    method: Method,
    options: &AccountOptions,
) -> Result<CalibrationResult, AccountantError> {
    if !(target_eps > 0.0 && target_eps.is_finite()) {
        return Err(AccountantError::InvalidSpec(format!(
            "target epsilon must be positive, got {target_eps}"
        )));
    }
    let template = PrivacySpec::new(mechanism, 1.0, sample_rate, steps, delta)?;
    let eval = |sigma: f64| -> Result<Option<f64>, AccountantError> {
        match account(&template.with_sigma(sigma), method, options) {
            Ok(r) => Ok(Some(r.epsilon())),
            Err(AccountantError::GridOverflow { .. })
            | Err(AccountantError::UnreachableDelta { .. })
            | Err(AccountantError::InsufficientSamples { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let meets = |e: Option<f64>| e.is_some_and(|e| e <= target_eps);

    let hi_eps = eval(SIGMA_MAX)?;
    if !meets(hi_eps) {
        return Err(AccountantError::NoSigmaInBracket {
            lo: SIGMA_MIN,
            hi: SIGMA_MAX,
            target: target_eps,
        });
    }
    let lo_eps = eval(SIGMA_MIN)?;
    if meets(lo_eps) {
        return Ok(CalibrationResult {
            sigma: SIGMA_MIN,
            epsilon: lo_eps.unwrap_or(0.0),
            infeasible_below: None,
        });
    }
    let (mut lo, mut hi) = (SIGMA_MIN, SIGMA_MAX);
    let mut best = hi_eps.unwrap_or(0.0);
    while hi / lo > RATIO_TOLERANCE {
        let mid = (lo * hi).sqrt();
        let e = eval(mid)?;
        if meets(e) {
            hi = mid;
            best = e.unwrap_or(0.0);
        } else {
            lo = mid;
        }
    }
    Ok(CalibrationResult {
        sigma: hi,
        epsilon: best,
        infeasible_below: Some(lo),
    })
}

//! Privacy accounting for subsampled Gaussian and Laplace mechanisms.
//!
//! Three routes are provided:
//!
//! * closed-form pure DP for Laplace noise under basic composition,
//! * numerical composition of discretized privacy loss distributions (PLDs)
//!   with explicit error bounds,
//! * Monte Carlo estimation for Laplace noise with a confidence bound.
//!
//! All routes assume sensitivity 1 (noise scale equals the multiplier) and
//! Poisson subsampling under add/remove adjacency. Every reported epsilon is
//! the maximum over the add and remove directions.

mod analytic;
mod calibrate;
mod monte_carlo;
mod pld;
mod prv;

use std::fmt;

use thiserror::Error;

pub use analytic::{
    analytic_gaussian_delta, laplace_pure_eps, normal_cdf, pure_dp_laplace_epsilon,
    subsample_pure_eps,
};
pub use calibrate::{calibrate_sigma, CalibrationResult, SIGMA_MAX, SIGMA_MIN};
pub use monte_carlo::{
    mc_delta_laplace, mc_epsilon_laplace, McDelta, McOptions, McSamples, MIN_MC_SAMPLES,
};
pub use pld::{
    compose_pld, delta_at_epsilon, discretize_pld, epsilon_at_delta, rr_pld, GridSpec, Pld,
    PrivacyCurve, MAX_GRID_LEN,
};
pub use prv::PrivacyLoss;

/// Noise distribution added at each step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mechanism {
    Gaussian,
    Laplace,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mechanism::Gaussian => "gaussian",
            Mechanism::Laplace => "laplace",
        })
    }
}

impl std::str::FromStr for Mechanism {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(Mechanism::Gaussian),
            "laplace" => Ok(Mechanism::Laplace),
            other => Err(format!("unknown mechanism `{other}`")),
        }
    }
}

/// Adjacency direction of a privacy loss distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// The neighbouring dataset has one extra record.
    Add,
    /// The neighbouring dataset lacks one record.
    Remove,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Add, Direction::Remove];
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Add => "add",
            Direction::Remove => "remove",
        })
    }
}

/// Accounting route.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    /// Basic composition of subsampled pure-DP Laplace steps. Ignores delta.
    ClosedFormPure,
    /// Discretize each step's privacy loss and compose numerically.
    Pld,
    /// Treat each subsampled Laplace step as randomized response with its
    /// amplified pure epsilon and compose that PLD.
    RrPld,
    /// Monte Carlo over the composed privacy loss of subsampled Laplace.
    MonteCarlo,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::ClosedFormPure => "closed-form-pure",
            Method::Pld => "pld",
            Method::RrPld => "rr-pld",
            Method::MonteCarlo => "monte-carlo",
        })
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "closed-form-pure" | "pure" | "closed-form" => Ok(Method::ClosedFormPure),
            "pld" | "prv" => Ok(Method::Pld),
            "rr-pld" | "rr" => Ok(Method::RrPld),
            "monte-carlo" | "mc" => Ok(Method::MonteCarlo),
            other => Err(format!("unknown accounting method `{other}`")),
        }
    }
}

/// What is being accounted: `steps` releases of a mechanism with noise
/// multiplier `sigma`, each on a Poisson sample with rate `sample_rate`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacySpec {
    pub mechanism: Mechanism,
    pub sigma: f64,
    pub sample_rate: f64,
    pub steps: u64,
    pub delta: f64,
}

impl PrivacySpec {
    pub fn new(
        mechanism: Mechanism,
        sigma: f64,
        sample_rate: f64,
        steps: u64,
        delta: f64,
    ) -> Result<Self, AccountantError> {
        let spec = PrivacySpec {
            mechanism,
            sigma,
            sample_rate,
            steps,
            delta,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), AccountantError> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(AccountantError::InvalidSpec(format!(
                "sigma must be finite and positive, got {}",
                self.sigma
            )));
        }
        if !(0.0..=1.0).contains(&self.sample_rate) {
            return Err(AccountantError::InvalidSpec(format!(
                "sample rate must lie in [0, 1], got {}",
                self.sample_rate
            )));
        }
        if !(0.0..1.0).contains(&self.delta) {
            return Err(AccountantError::InvalidSpec(format!(
                "delta must lie in [0, 1), got {}",
                self.delta
            )));
        }
        if self.delta == 0.0 && self.mechanism != Mechanism::Laplace {
            return Err(AccountantError::InvalidSpec(
                "delta = 0 is only meaningful for Laplace noise".into(),
            ));
        }
        Ok(())
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        PrivacySpec { sigma, ..*self }
    }
}

/// Error budget for the numerical routes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccountingBudget {
    /// Allowed width of the epsilon interval contributed by discretization.
    pub eps_error: f64,
    /// Total delta slack spent on truncation, wrap-around and concentration.
    pub delta_error: f64,
}

impl Default for AccountingBudget {
    fn default() -> Self {
        AccountingBudget {
            eps_error: 1e-3,
            delta_error: 1e-10,
        }
    }
}

impl AccountingBudget {
    pub fn validate(&self) -> Result<(), AccountantError> {
        if !(self.eps_error.is_finite() && self.eps_error > 0.0) {
            return Err(AccountantError::InvalidSpec(format!(
                "eps error must be positive, got {}",
                self.eps_error
            )));
        }
        if !(self.delta_error > 0.0 && self.delta_error < 1.0) {
            return Err(AccountantError::InvalidSpec(format!(
                "delta error must lie in (0, 1), got {}",
                self.delta_error
            )));
        }
        Ok(())
    }
}

/// Lower bound, point estimate and upper bound on a privacy parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub lower: f64,
    pub estimate: f64,
    pub upper: f64,
}

impl Bounds {
    pub fn exact(v: f64) -> Self {
        Bounds {
            lower: v,
            estimate: v,
            upper: v,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }
}

/// Result of accounting a [`PrivacySpec`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyReport {
    pub spec: PrivacySpec,
    pub method: Method,
    pub epsilon: Bounds,
}

impl PrivacyReport {
    /// The epsilon to quote: the certified upper bound.
    pub fn epsilon(&self) -> f64 {
        self.epsilon.upper
    }
}

/// Tuning for [`account`].
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct AccountOptions {
    pub budget: AccountingBudget,
    pub monte_carlo: McOptions,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AccountantError {
    #[error("invalid privacy specification: {0}")]
    InvalidSpec(String),
    #[error("method requires the {expected} mechanism, got {got}")]
    WrongMechanism { expected: Mechanism, got: Mechanism },
    #[error("grid mesh {mesh} is coarser than the {required} needed for the eps error budget")]
    GridTooCoarse { mesh: f64, required: f64 },
    #[error("grid truncates mass {mass:e}, more than the {allowed:e} allowed per step")]
    GridTooNarrow { mass: f64, allowed: f64 },
    #[error("grid needs {needed} points, more than the maximum {max}")]
    GridOverflow { needed: u128, max: usize },
    #[error("delta {delta:e} is unreachable: error slack and infinite-loss mass total {floor:e}")]
    UnreachableDelta { delta: f64, floor: f64 },
    #[error("{samples} samples cannot certify delta {delta:e} at the requested confidence")]
    InsufficientSamples { samples: u64, delta: f64 },
    #[error("no sigma in [{lo}, {hi}] reaches epsilon {target}")]
    NoSigmaInBracket { lo: f64, hi: f64, target: f64 },
}

/// Accounts `spec` with `method`.
pub fn account(
    spec: &PrivacySpec,
    method: Method,
    options: &AccountOptions,
) -> Result<PrivacyReport, AccountantError> {
    spec.validate()?;
    options.budget.validate()?;
    let epsilon = if spec.steps == 0 {
        Bounds::exact(0.0)
    } else {
        match method {
            Method::ClosedFormPure => Bounds::exact(pure_dp_laplace_epsilon(spec)?),
            Method::Pld => PrivacyCurve::for_spec(spec, &options.budget)?.epsilon(spec.delta)?,
            Method::RrPld => {
                require_laplace(spec)?;
                let eps_step =
                    subsample_pure_eps(laplace_pure_eps(spec.sigma), spec.sample_rate);
                let one = rr_pld(eps_step, options.budget);
                let composed = compose_pld(&one, spec.steps)?;
                composed.epsilon_bounds(spec.delta)?
            }
            Method::MonteCarlo => mc_epsilon_laplace(spec, &options.monte_carlo)?,
        }
    };
    Ok(PrivacyReport {
        spec: *spec,
        method,
        epsilon,
    })
}

pub(crate) fn require_laplace(spec: &PrivacySpec) -> Result<(), AccountantError> {
    if spec.mechanism == Mechanism::Laplace {
        Ok(())
    } else {
        Err(AccountantError::WrongMechanism {
            expected: Mechanism::Laplace,
            got: spec.mechanism,
        })
    }
}

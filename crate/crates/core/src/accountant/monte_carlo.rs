//! Monte Carlo accounting for Poisson-subsampled Laplace noise.
//!
//! Each step's privacy loss is two atoms (outputs at or beyond the two
//! centres) plus a continuous middle part. A composed sample draws the atom
//! counts from a multinomial and the middle part through a tabulated inverse
//! CDF with linear interpolation. The table error per middle draw is at most
//! the widest cell, so each sample comes with a rigorous error radius.
//!
//! `delta(eps) = E[(1 - e^{eps - Y})_+]` is a mean of values in `[0, 1]`, and
//! the confidence bound is the empirical Bernstein bound of Maurer and Pontil.

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::prv::PrivacyLoss;
use super::{
    laplace_pure_eps, require_laplace, subsample_pure_eps, AccountantError, Bounds, Direction,
    PrivacySpec,
};
use crate::rng::{derive_seed, Rng};

/// Fewest samples accepted.
pub const MIN_MC_SAMPLES: u64 = 100_000;
/// Cells in the middle-section inverse CDF table.
const TABLE_CELLS: usize = 1 << 16;
/// Samples per independently seeded shard.
const SHARD: u64 = 1 << 15;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub samples: u64,
    /// Probability that the reported bounds hold.
    pub confidence: f64,
    pub seed: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            samples: 10_000_000,
            confidence: 0.999,
            seed: 0,
        }
    }
}

/// Estimated `delta` with a confidence interval.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McDelta {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub std_error: f64,
}

struct StepSampler {
    /// Loss at the output atom with the larger loss, and its probability.
    y_high: f64,
    p_high: f64,
    /// Same for the atom with the smaller loss.
    y_low: f64,
    p_low: f64,
    /// Loss at quantiles `i / TABLE_CELLS` of the middle section.
    table: Vec<f64>,
    /// Widest table cell: bound on the interpolation error of a middle draw.
    cell: f64,
}

impl StepSampler {
    fn new(pl: &PrivacyLoss) -> Self {
        let b = pl.sigma;
        let p = pl.sample_rate;
        let tail = 0.5 * (-1.0 / b).exp();
        let (p_high, p_low) = match pl.direction {
            Direction::Add => (0.5, tail),
            Direction::Remove => ((1.0 - p) * tail + 0.5 * p, 0.5 * (1.0 - p) + p * tail),
        };
        let y_high = pl.loss(0.0);
        let y_low = pl.loss(1.0);
        let table: Vec<f64> = (0..=TABLE_CELLS)
            .map(|i| {
                let u = i as f64 / TABLE_CELLS as f64;
                pl.loss(middle_quantile(pl, u))
            })
            .collect();
        let cell = table
            .windows(2)
            .map(|w| (w[0] - w[1]).abs())
            .fold(0.0, f64::max);
        StepSampler {
            y_high,
            p_high,
            y_low,
            p_low,
            table,
            cell,
        }
    }

    /// One composed sample and the number of middle draws it used.
    fn sample(&self, rng: &mut Rng, steps: u64) -> (f64, u64) {
        let n_high = draw_binomial(rng, steps, self.p_high);
        let rest = steps - n_high;
        let cond = if self.p_high < 1.0 {
            (self.p_low / (1.0 - self.p_high)).min(1.0)
        } else {
            0.0
        };
        let n_low = draw_binomial(rng, rest, cond);
        let n_mid = rest - n_low;
        let mut sum = n_high as f64 * self.y_high + n_low as f64 * self.y_low;
        for _ in 0..n_mid {
            let x = rng.unit() * TABLE_CELLS as f64;
            let i = (x as usize).min(TABLE_CELLS - 1);
            let f = x - i as f64;
            sum += self.table[i] + f * (self.table[i + 1] - self.table[i]);
        }
        (sum, n_mid)
    }
}

fn draw_binomial(rng: &mut Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

/// Quantile `u` of the output restricted to `(0, 1)`.
fn middle_quantile(pl: &PrivacyLoss, u: f64) -> f64 {
    let b = pl.sigma;
    match pl.direction {
        Direction::Add => {
            // Density proportional to e^{-o/b} on (0, 1).
            let span = -(-1.0 / b).exp_m1();
            (-b * (-u * span).ln_1p()).clamp(0.0, 1.0)
        }
        Direction::Remove => {
            let p = pl.sample_rate;
            let unnorm = |o: f64| {
                (1.0 - p) * ((-(1.0 - o) / b).exp() - (-1.0 / b).exp()) - p * (-o / b).exp_m1()
            };
            let total = unnorm(1.0);
            let target = u * total;
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                if unnorm(mid) < target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        }
    }
}

/// Sorted composed-loss samples for one direction.
struct DirectionSamples {
    estimate: Vec<f64>,
    upper: Vec<f64>,
    lower: Vec<f64>,
}

/// Composed-loss samples for both directions of a Laplace specification.
pub struct McSamples {
    add: DirectionSamples,
    remove: DirectionSamples,
    n: u64,
    /// Natural log of `2 / alpha` for each one-sided, one-direction bound.
    log_term: f64,
    /// Largest possible composed loss.
    eps_max: f64,
}

impl McSamples {
    pub fn draw(spec: &PrivacySpec, options: &McOptions) -> Result<Self, AccountantError> {
        spec.validate()?;
        require_laplace(spec)?;
        if options.samples < MIN_MC_SAMPLES {
            return Err(AccountantError::InsufficientSamples {
                samples: options.samples,
                delta: spec.delta,
            });
        }
        if !(options.confidence > 0.0 && options.confidence < 1.0) {
            return Err(AccountantError::InvalidSpec(format!(
                "confidence must lie in (0, 1), got {}",
                options.confidence
            )));
        }
        let alpha = (1.0 - options.confidence) / 2.0;
        let draw = |direction: Direction, tag: u64| {
            sample_direction(spec, direction, options.samples, derive_seed(options.seed, tag, 0))
        };
        let (add, remove) = rayon::join(|| draw(Direction::Add, 1), || draw(Direction::Remove, 2));
        let eps_step = subsample_pure_eps(laplace_pure_eps(spec.sigma), spec.sample_rate);
        Ok(McSamples {
            add,
            remove,
            n: options.samples,
            log_term: (2.0 / alpha).ln(),
            eps_max: spec.steps as f64 * eps_step,
        })
    }

    pub fn samples(&self) -> u64 {
        self.n
    }

    /// Confidence interval for `delta(eps)`, maximized over directions.
    pub fn delta(&self, eps: f64) -> McDelta {
        let a = self.delta_one(&self.add, eps);
        let r = self.delta_one(&self.remove, eps);
        let pick = if a.estimate >= r.estimate { a } else { r };
        McDelta {
            estimate: a.estimate.max(r.estimate),
            lower: a.lower.max(r.lower),
            upper: a.upper.max(r.upper),
            std_error: pick.std_error,
        }
    }

    fn delta_one(&self, s: &DirectionSamples, eps: f64) -> McDelta {
        let n = self.n as f64;
        let (m_est, v_est) = tail_moments(&s.estimate, eps, n);
        let (m_up, v_up) = tail_moments(&s.upper, eps, n);
        let (m_low, v_low) = tail_moments(&s.lower, eps, n);
        let l = self.log_term;
        let radius = |v: f64| (2.0 * v * l / n).sqrt() + 7.0 * l / (3.0 * (n - 1.0));
        McDelta {
            estimate: m_est,
            upper: (m_up + radius(v_up)).min(1.0),
            lower: (m_low - radius(v_low)).max(0.0),
            std_error: (v_est / n).sqrt(),
        }
    }

    /// Bounds on the smallest epsilon with `delta(eps) <= delta`.
    pub fn epsilon(&self, delta: f64) -> Result<Bounds, AccountantError> {
        if self.delta(self.eps_max).upper > delta {
            return Err(AccountantError::InsufficientSamples {
                samples: self.n,
                delta,
            });
        }
        let solve = |f: &dyn Fn(f64) -> f64| -> f64 {
            if f(0.0) <= delta {
                return 0.0;
            }
            let (mut lo, mut hi) = (0.0, self.eps_max);
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                if f(mid) <= delta {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo <= 1e-9 * hi.max(1e-12) {
                    break;
                }
            }
            hi
        };
        let upper = solve(&|e| self.delta(e).upper);
        let estimate = solve(&|e| self.delta(e).estimate);
        let lower = solve(&|e| self.delta(e).lower);
        Ok(Bounds {
            lower: lower.min(estimate),
            estimate,
            upper: upper.max(estimate),
        })
    }
}

/// Mean and unbiased variance of `(1 - e^{eps - y})_+` over `n` samples, of
/// which only the sorted tail above `eps` is non-zero.
fn tail_moments(sorted: &[f64], eps: f64, n: f64) -> (f64, f64) {
    let start = sorted.partition_point(|&y| y <= eps);
    let (mut s1, mut s2) = (0.0f64, 0.0f64);
    for &y in sorted[start..].iter().rev() {
        let x = -(eps - y).exp_m1();
        s1 += x;
        s2 += x * x;
    }
    let mean = s1 / n;
    let var = ((s2 - s1 * mean) / (n - 1.0)).max(0.0);
    (mean, var)
}

fn sample_direction(
    spec: &PrivacySpec,
    direction: Direction,
    samples: u64,
    seed: u64,
) -> DirectionSamples {
    let pl = PrivacyLoss::new(spec.mechanism, spec.sigma, spec.sample_rate, direction);
    let sampler = StepSampler::new(&pl);
    let shards = samples.div_ceil(SHARD);
    let chunks: Vec<Vec<(f64, u64)>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = Rng::new(derive_seed(seed, 0, shard));
            let count = SHARD.min(samples - shard * SHARD);
            (0..count).map(|_| sampler.sample(&mut rng, spec.steps)).collect()
        })
        .collect();
    let n = samples as usize;
    let mut estimate = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let mut lower = Vec::with_capacity(n);
    for (y, mid) in chunks.into_iter().flatten() {
        let r = mid as f64 * sampler.cell;
        estimate.push(y);
        upper.push(y + r);
        lower.push(y - r);
    }
    estimate.par_sort_unstable_by(f64::total_cmp);
    upper.par_sort_unstable_by(f64::total_cmp);
    lower.par_sort_unstable_by(f64::total_cmp);
    DirectionSamples {
        estimate,
        upper,
        lower,
    }
}

/// Monte Carlo estimate of `delta(eps)` for a Laplace specification.
pub fn mc_delta_laplace(
    spec: &PrivacySpec,
    eps: f64,
    options: &McOptions,
) -> Result<McDelta, AccountantError> {
    Ok(McSamples::draw(spec, options)?.delta(eps))
}

/// Monte Carlo bounds on epsilon at `spec.delta`.
pub fn mc_epsilon_laplace(spec: &PrivacySpec, options: &McOptions) -> Result<Bounds, AccountantError> {
    if spec.steps == 0 {
        return Ok(Bounds::exact(0.0));
    }
    McSamples::draw(spec, options)?.epsilon(spec.delta)
}

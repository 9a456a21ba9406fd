//! Discretized privacy loss distributions and their numerical composition.
//!
//! A step's privacy loss `Y` is rounded up to a grid of mesh `h`, after
//! clamping to the grid ends. Rounding up shifts every step by an error in
//! `[0, h)` whose mean is computed exactly; the composed error concentrates
//! around `steps * mean` (Hoeffding), which gives two-sided bounds. Mass beyond
//! the grid ends, wrap-around in the circular convolution and negative FFT
//! noise are charged to delta.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::prv::PrivacyLoss;
use super::{AccountantError, AccountingBudget, Bounds, Direction, PrivacySpec};

/// Largest grid (one-step or composed) the accountant will allocate.
pub const MAX_GRID_LEN: usize = 1 << 25;

/// Equispaced grid `grid_min + k * mesh`, `k = 0..len`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub grid_min: f64,
    pub mesh: f64,
    pub len: usize,
}

impl GridSpec {
    pub fn new(grid_min: f64, mesh: f64, len: usize) -> Result<Self, AccountantError> {
        if !(mesh.is_finite() && mesh > 0.0) || !grid_min.is_finite() || len == 0 {
            return Err(AccountantError::InvalidSpec(format!(
                "bad grid: min {grid_min}, mesh {mesh}, len {len}"
            )));
        }
        if len > MAX_GRID_LEN {
            return Err(AccountantError::GridOverflow {
                needed: len as u128,
                max: MAX_GRID_LEN,
            });
        }
        Ok(GridSpec {
            grid_min,
            mesh,
            len,
        })
    }

    pub fn value(&self, k: usize) -> f64 {
        self.grid_min + k as f64 * self.mesh
    }

    pub fn grid_max(&self) -> f64 {
        self.value(self.len - 1)
    }

    /// Coarsest mesh whose rounding keeps the composed epsilon interval
    /// within `budget.eps_error` for `steps` compositions.
    pub fn required_mesh(steps: u64, budget: &AccountingBudget) -> f64 {
        let t = steps.max(1) as f64;
        budget.eps_error / (t * (4.0 / budget.delta_error).ln() / 2.0).sqrt()
    }

    /// Largest one-step mass the grid may cut off (both ends together).
    pub fn tail_allowance(steps: u64, budget: &AccountingBudget) -> f64 {
        budget.delta_error / (4.0 * steps.max(1) as f64)
    }

    /// Grid for one step of `spec` in `direction`: the required mesh,
    /// aligned to multiples of it, covering all but `tail_allowance`.
    pub fn auto(
        spec: &PrivacySpec,
        direction: Direction,
        budget: &AccountingBudget,
    ) -> Result<Self, AccountantError> {
        spec.validate()?;
        budget.validate()?;
        let h = Self::required_mesh(spec.steps, budget);
        if spec.sample_rate == 0.0 {
            return GridSpec::new(0.0, h, 1);
        }
        let pl = PrivacyLoss::new(spec.mechanism, spec.sigma, spec.sample_rate, direction);
        let tau = Self::tail_allowance(spec.steps, budget) / 2.0;
        let (r_lo, r_hi) = pl.range();

        // Largest y with P(Y < y) <= tau.
        let below_ok = |y: f64| pl.cdf_sf(y.next_down()).0 <= tau;
        let lo_ok = if r_lo.is_finite() { r_lo } else { expand(&below_ok, -1e-6, true) };
        let hi_bad = if r_hi.is_finite() { r_hi } else { expand(&|y| !below_ok(y), 1e-6, false) };
        let y_lo = bisect(&below_ok, lo_ok, hi_bad);

        // Smallest y with P(Y > y) <= tau.
        let above_ok = |y: f64| pl.cdf_sf(y).1 <= tau;
        let hi_ok = if r_hi.is_finite() { r_hi } else { expand(&above_ok, 1e-6, false) };
        let lo_bad = if r_lo.is_finite() {
            r_lo.next_down()
        } else {
            expand(&|y| !above_ok(y), -1e-6, true)
        };
        let y_hi = bisect(&|y| !above_ok(y), lo_bad, hi_ok);
        let y_hi = if above_ok(y_hi) { y_hi } else { y_hi.next_up() };

        let k_lo = (y_lo / h).floor();
        let k_hi = (y_hi / h).ceil().max(k_lo);
        let needed = (k_hi - k_lo) as u128 + 1;
        if needed > MAX_GRID_LEN as u128 {
            return Err(AccountantError::GridOverflow {
                needed,
                max: MAX_GRID_LEN,
            });
        }
        GridSpec::new(k_lo * h, h, needed as usize)
    }
}

/// Walks from `start` away from zero, doubling, until `ok` holds.
fn expand(ok: &dyn Fn(f64) -> bool, start: f64, _downward: bool) -> f64 {
    let mut y = start;
    for _ in 0..1100 {
        if ok(y) {
            return y;
        }
        y *= 2.0;
    }
    y
}

/// Given `pred(a)` true and `pred(b)` false, returns a point where `pred`
/// holds next to the boundary. Works for `a < b` and `a > b`.
fn bisect(pred: &dyn Fn(f64) -> bool, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..2000 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if pred(m) {
            a = m;
        } else {
            b = m;
        }
    }
    a
}

/// A discrete privacy loss distribution with its error accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct Pld {
    pub grid_min: f64,
    pub mesh: f64,
    pub masses: Vec<f64>,
    /// Mass at `+inf`.
    pub mass_inf: f64,
    pub direction: Direction,
    /// Number of elementary steps composed into this distribution.
    pub steps: u64,
    /// Total expected rounding shift over all steps.
    pub rounding_bias: f64,
    /// Width of the per-step rounding error interval; zero when exact.
    pub rounding_width: f64,
    /// Probability that any step fell outside its grid (union bound).
    pub truncated_mass: f64,
    /// Bound on mass aliased by circular convolution.
    pub wrap_mass: f64,
    /// Negative mass removed after FFT round-off.
    pub numeric_mass: f64,
    pub budget: AccountingBudget,
}

impl Pld {
    /// The distribution of a step that leaks nothing.
    pub fn point_mass(direction: Direction, steps: u64, budget: AccountingBudget) -> Self {
        Pld {
            grid_min: 0.0,
            mesh: 1.0,
            masses: vec![1.0],
            mass_inf: 0.0,
            direction,
            steps,
            rounding_bias: 0.0,
            rounding_width: 0.0,
            truncated_mass: 0.0,
            wrap_mass: 0.0,
            numeric_mass: 0.0,
            budget,
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn value(&self, k: usize) -> f64 {
        self.grid_min + k as f64 * self.mesh
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.mass_inf
    }

    /// Half-width of the epsilon shift attributable to rounding.
    pub fn eps_slack(&self) -> f64 {
        if self.rounding_width == 0.0 {
            return 0.0;
        }
        let t = self.steps.max(1) as f64;
        self.rounding_width * (t * (4.0 / self.budget.delta_error).ln() / 2.0).sqrt()
    }

    /// Total delta charged to discretization, truncation, wrap and round-off.
    pub fn delta_slack(&self) -> f64 {
        let hoeffding = if self.rounding_width > 0.0 {
            self.budget.delta_error / 2.0
        } else {
            0.0
        };
        hoeffding + self.truncated_mass + self.wrap_mass + self.numeric_mass
    }

    /// `sum_{y > eps} q(y) (1 - e^{eps - y}) + mass_inf` on the grid as is.
    pub fn delta_raw(&self, eps: f64) -> f64 {
        let n = self.len();
        let mut k0 = ((eps - self.grid_min) / self.mesh).floor();
        k0 = k0.clamp(-1.0, n as f64) + 1.0;
        let mut k = k0.min(n as f64) as usize;
        while k > 0 && self.value(k - 1) > eps {
            k -= 1;
        }
        while k < n && self.value(k) <= eps {
            k += 1;
        }
        let mut sum = 0.0;
        for j in (k..n).rev() {
            let q = self.masses[j];
            if q > 0.0 {
                sum += q * -(eps - self.value(j)).exp_m1();
            }
        }
        (sum + self.mass_inf).clamp(0.0, 1.0)
    }

    /// Smallest epsilon with `delta_raw(eps) <= target`; `None` if no finite
    /// epsilon qualifies. Returns `-inf` when every epsilon qualifies.
    pub fn epsilon_raw(&self, target: f64) -> Option<f64> {
        if target < self.mass_inf || target <= 0.0 && self.mass_inf > 0.0 {
            return None;
        }
        let n = self.len();
        let (mut s0, mut s1) = (0.0f64, 0.0f64);
        for i in (0..n).rev() {
            let q = self.masses[i];
            let y = self.value(i);
            if q > 0.0 {
                s0 += q;
                s1 += q * (-y).exp();
            }
            let at_prev = if i > 0 {
                let y_prev = self.value(i - 1);
                self.mass_inf + s0 - y_prev.exp() * s1
            } else {
                self.mass_inf + s0
            };
            if at_prev > target && s1 > 0.0 {
                let eps = ((self.mass_inf + s0 - target) / s1).ln();
                let floor = if i > 0 { self.value(i - 1) } else { f64::NEG_INFINITY };
                return Some(eps.clamp(floor, y));
            }
        }
        Some(f64::NEG_INFINITY)
    }
}

/// Rounds one step of `spec` in `direction` up onto `grid`.
pub fn discretize_pld(
    spec: &PrivacySpec,
    direction: Direction,
    grid: &GridSpec,
    budget: &AccountingBudget,
) -> Result<Pld, AccountantError> {
    spec.validate()?;
    budget.validate()?;
    if spec.sample_rate == 0.0 {
        return Ok(Pld::point_mass(direction, 1, *budget));
    }
    let required = GridSpec::required_mesh(spec.steps, budget);
    if grid.mesh > required * (1.0 + 1e-12) {
        return Err(AccountantError::GridTooCoarse {
            mesh: grid.mesh,
            required,
        });
    }
    let pl = PrivacyLoss::new(spec.mechanism, spec.sigma, spec.sample_rate, direction);
    let n = grid.len;
    let x0 = grid.grid_min;
    let x_last = grid.grid_max();

    let trunc = pl.cdf_sf(x0.next_down()).0 + pl.cdf_sf(x_last).1;
    let allowed = GridSpec::tail_allowance(spec.steps, budget);
    if trunc > allowed {
        return Err(AccountantError::GridTooNarrow {
            mass: trunc,
            allowed,
        });
    }

    let edges: Vec<(f64, f64)> = (0..n).map(|k| pl.cdf_sf(grid.value(k))).collect();
    let mut masses = vec![0.0; n];
    if n == 1 {
        masses[0] = 1.0;
    } else {
        masses[0] = edges[0].0;
        for k in 1..n - 1 {
            let (c0, s0) = edges[k - 1];
            let (c1, s1) = edges[k];
            let q = if c1 <= 0.5 { c1 - c0 } else { s0 - s1 };
            masses[k] = q.max(0.0);
        }
        masses[n - 1] = edges[n - 2].1;
    }

    let rounded_mean: f64 = masses
        .iter()
        .enumerate()
        .map(|(k, q)| q * grid.value(k))
        .sum();
    let clamped_mean = pl.clamped_mean(x0, x_last, 16.0 * grid.mesh);
    let bias = (rounded_mean - clamped_mean).clamp(0.0, grid.mesh);

    Ok(Pld {
        grid_min: x0,
        mesh: grid.mesh,
        masses,
        mass_inf: 0.0,
        direction,
        steps: 1,
        rounding_bias: bias,
        rounding_width: grid.mesh,
        truncated_mass: trunc,
        wrap_mass: 0.0,
        numeric_mass: 0.0,
        budget: *budget,
    })
}

/// PLD of randomized response with pure epsilon `eps_step`: loss `+eps_step`
/// with probability `e^eps/(1+e^eps)`, `-eps_step` otherwise. The atoms lie
/// exactly on the grid, so the distribution carries no rounding error.
pub fn rr_pld(eps_step: f64, budget: AccountingBudget) -> Pld {
    if !(eps_step > 0.0) {
        return Pld::point_mass(Direction::Add, 1, budget);
    }
    let low = 1.0 / (1.0 + eps_step.exp());
    let high = 1.0 / (1.0 + (-eps_step).exp());
    Pld {
        grid_min: -eps_step,
        mesh: 2.0 * eps_step,
        masses: vec![low, high],
        ..Pld::point_mass(Direction::Add, 1, budget)
    }
}

/// Log moment generating function of the finite part at `lambda`.
fn log_mgf(pld: &Pld, support: (usize, usize), lambda: f64) -> f64 {
    let (first, last) = support;
    let m = (lambda * pld.value(first)).max(lambda * pld.value(last));
    let mut s = 0.0;
    for k in first..=last {
        let q = pld.masses[k];
        if q > 0.0 {
            s += q * (lambda * pld.value(k) - m).exp();
        }
    }
    m + s.ln()
}

/// Window holding all but `eta` of the composed mass on each side, by
/// Chernoff bounds. Returns `(lo, hi, mass_bound_outside)`.
fn chernoff_window(pld: &Pld, times: u64, eta: f64, support: (usize, usize)) -> (f64, f64, f64) {
    let t = times as f64;
    let (first, last) = support;
    let hard_lo = t * pld.value(first);
    let hard_hi = t * pld.value(last);
    let total: f64 = pld.masses[first..=last].iter().sum();
    let mean: f64 = (first..=last).map(|k| pld.masses[k] * pld.value(k)).sum::<f64>() / total;
    let var: f64 = (first..=last)
        .map(|k| pld.masses[k] * (pld.value(k) - mean).powi(2))
        .sum::<f64>()
        / total;
    if !(var > 0.0) {
        return (hard_lo, hard_hi, 0.0);
    }
    let base = 1.0 / (var.sqrt() * t.sqrt());
    let ln_eta = eta.ln();
    let mut hi = hard_hi;
    let mut lo = hard_lo;
    for j in -16..=48 {
        let lambda = base * 2f64.powf(j as f64 / 2.0);
        let up = (t * log_mgf(pld, support, lambda) - ln_eta) / lambda;
        if up.is_finite() {
            hi = hi.min(up);
        }
        let down = (ln_eta - t * log_mgf(pld, support, -lambda)) / lambda;
        if down.is_finite() {
            lo = lo.max(down);
        }
    }
    let mut outside = 0.0;
    if hi < hard_hi {
        outside += eta;
    }
    if lo > hard_lo {
        outside += eta;
    }
    (lo.min(hi), hi.max(lo), outside)
}

/// Composes `pld` with itself `times` times by FFT.
pub fn compose_pld(pld: &Pld, times: u64) -> Result<Pld, AccountantError> {
    if times == 0 {
        return Ok(Pld::point_mass(pld.direction, 0, pld.budget));
    }
    if times == 1 {
        return Ok(pld.clone());
    }
    if times > u32::MAX as u64 {
        return Err(AccountantError::InvalidSpec(format!(
            "cannot compose {times} times"
        )));
    }
    let t = times as f64;
    let mass_inf = 1.0 - (1.0 - pld.mass_inf).powf(t);
    let base = Pld {
        mass_inf,
        steps: pld.steps * times,
        rounding_bias: pld.rounding_bias * t,
        truncated_mass: (pld.truncated_mass * t).min(1.0),
        wrap_mass: pld.wrap_mass * t,
        numeric_mass: pld.numeric_mass * t,
        ..pld.clone()
    };

    let first = pld.masses.iter().position(|&q| q > 0.0);
    let last = pld.masses.iter().rposition(|&q| q > 0.0);
    let (first, last) = match (first, last) {
        (Some(f), Some(l)) => (f, l),
        _ => {
            return Ok(Pld {
                masses: vec![0.0],
                ..base
            })
        }
    };
    if first == last {
        let q = pld.masses[first].powf(t);
        return Ok(Pld {
            grid_min: t * pld.value(first),
            masses: vec![q],
            ..base
        });
    }

    let eta = pld.budget.delta_error / 8.0;
    let (s_lo, s_hi, outside) = chernoff_window(pld, times, eta, (first, last));
    let h = pld.mesh;
    let origin = t * pld.grid_min;
    let j_lo = ((s_lo - origin) / h).floor();
    let j_hi = ((s_hi - origin) / h).ceil();
    let span = (j_hi - j_lo).max(0.0) as u128 + 1;
    let n = span.max(2).next_power_of_two();
    if n > MAX_GRID_LEN as u128 {
        return Err(AccountantError::GridOverflow {
            needed: span,
            max: MAX_GRID_LEN,
        });
    }
    let n = n as usize;
    let mask = n - 1;

    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for k in first..=last {
        buf[k & mask].re += pld.masses[k];
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let power = times as u32;
    for c in buf.iter_mut() {
        *c = c.powu(power);
    }
    planner.plan_fft_inverse(n).process(&mut buf);

    let scale = 1.0 / n as f64;
    let offset = (j_lo as i128).rem_euclid(n as i128) as usize;
    let mut masses = vec![0.0f64; n];
    let mut negative = 0.0;
    for (j, m) in masses.iter_mut().enumerate() {
        let v = buf[(offset + j) & mask].re * scale;
        if v < 0.0 {
            negative -= v;
        } else {
            *m = v;
        }
    }

    Ok(Pld {
        grid_min: origin + j_lo * h,
        masses,
        wrap_mass: base.wrap_mass + outside,
        numeric_mass: base.numeric_mass + negative,
        ..base
    })
}

impl Pld {
    /// Bounds on `delta(eps)` for the pair this distribution describes.
    pub fn delta_bounds(&self, eps: f64) -> Bounds {
        let t = self.eps_slack();
        let slack = self.delta_slack();
        let bias = self.rounding_bias;
        Bounds {
            lower: (self.delta_raw(eps + bias + t) - slack).max(0.0),
            estimate: self.delta_raw(eps + bias),
            upper: (self.delta_raw(eps + bias - t) + slack).min(1.0),
        }
    }

    /// Bounds on the smallest epsilon with `delta(eps) <= delta`.
    pub fn epsilon_bounds(&self, delta: f64) -> Result<Bounds, AccountantError> {
        let t = self.eps_slack();
        let slack = self.delta_slack();
        let bias = self.rounding_bias;
        let floor = slack + self.mass_inf;
        let upper = if delta - slack > 0.0 {
            self.epsilon_raw(delta - slack)
        } else {
            None
        };
        let upper = match upper {
            Some(e) => (e - bias + t).max(0.0),
            None => return Err(AccountantError::UnreachableDelta { delta, floor }),
        };
        let lower = self
            .epsilon_raw(delta + slack)
            .map_or(0.0, |e| (e - bias - t).max(0.0));
        let estimate = self
            .epsilon_raw(delta)
            .map_or(upper, |e| (e - bias).max(0.0))
            .clamp(lower, upper);
        Ok(Bounds {
            lower,
            estimate,
            upper,
        })
    }
}

/// `E[(1 - e^{eps - Y})_+] + mass_inf` over the grid, with the grid shifted
/// back by its known mean rounding. Clamped to `[0, 1]`. Use
/// [`Pld::delta_bounds`] for a certified interval.
pub fn delta_at_epsilon(pld: &Pld, eps: f64) -> f64 {
    pld.delta_raw(eps + pld.rounding_bias)
}

/// Bounds on the smallest epsilon with `max(delta_add, delta_remove) <=
/// delta`; the upper end includes all discretization error.
pub fn epsilon_at_delta(add: &Pld, remove: &Pld, delta: f64) -> Result<Bounds, AccountantError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(AccountantError::UnreachableDelta {
            delta,
            floor: add.delta_slack().max(remove.delta_slack()),
        });
    }
    Ok(max_bounds(add.epsilon_bounds(delta)?, remove.epsilon_bounds(delta)?))
}

/// Composed add and remove distributions for one specification.
#[derive(Clone, Debug)]
pub struct PrivacyCurve {
    pub add: Pld,
    pub remove: Pld,
}

impl PrivacyCurve {
    pub fn for_spec(spec: &PrivacySpec, budget: &AccountingBudget) -> Result<Self, AccountantError> {
        spec.validate()?;
        let build = |direction: Direction| -> Result<Pld, AccountantError> {
            let grid = GridSpec::auto(spec, direction, budget)?;
            let one = discretize_pld(spec, direction, &grid, budget)?;
            compose_pld(&one, spec.steps)
        };
        let (add, remove) = rayon::join(|| build(Direction::Add), || build(Direction::Remove));
        Ok(PrivacyCurve {
            add: add?,
            remove: remove?,
        })
    }

    /// Bounds on `delta(eps)`, maximized over directions.
    pub fn delta(&self, eps: f64) -> Bounds {
        max_bounds(self.add.delta_bounds(eps), self.remove.delta_bounds(eps))
    }

    pub fn epsilon(&self, delta: f64) -> Result<Bounds, AccountantError> {
        epsilon_at_delta(&self.add, &self.remove, delta)
    }

    /// Largest epsilon shift attributable to discretization.
    pub fn eps_error(&self) -> f64 {
        self.add.eps_slack().max(self.remove.eps_slack())
    }

    /// Largest delta charged to discretization, truncation and wrap-around.
    pub fn delta_error(&self) -> f64 {
        self.add.delta_slack().max(self.remove.delta_slack())
    }
}

fn max_bounds(a: Bounds, b: Bounds) -> Bounds {
    Bounds {
        lower: a.lower.max(b.lower),
        estimate: a.estimate.max(b.estimate),
        upper: a.upper.max(b.upper),
    }
}

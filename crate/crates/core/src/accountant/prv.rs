//! The per-step privacy loss random variable of a Poisson-subsampled
//! additive-noise mechanism.
//!
//! With base pair `P` (noise centred at 0) and `Q` (noise centred at 1) and
//! base log-likelihood ratio `L(o) = log P(o)/Q(o)`:
//!
//! * add: `Y = -log(1 + p (exp(-L(o)) - 1))`, with `o ~ P`;
//! * remove: `Y = log(1 + p (exp(L(o)) - 1))`, with `o ~ (1 - p) Q + p P`.
//!
//! Both maps are non-increasing in `o`, so the distribution of `Y` follows
//! from the distribution of `o` and an inverse of the loss map.

use libm::erfc;

use super::{Direction, Mechanism};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyLoss {
    pub mechanism: Mechanism,
    pub sigma: f64,
    pub sample_rate: f64,
    pub direction: Direction,
}

impl PrivacyLoss {
    pub fn new(mechanism: Mechanism, sigma: f64, sample_rate: f64, direction: Direction) -> Self {
        PrivacyLoss {
            mechanism,
            sigma,
            sample_rate,
            direction,
        }
    }

    /// Base log-likelihood ratio at output `o`.
    pub fn base_loss(&self, o: f64) -> f64 {
        match self.mechanism {
            Mechanism::Gaussian => (1.0 - 2.0 * o) / (2.0 * self.sigma * self.sigma),
            Mechanism::Laplace => ((o - 1.0).abs() - o.abs()) / self.sigma,
        }
    }

    /// Privacy loss at output `o`.
    pub fn loss(&self, o: f64) -> f64 {
        self.loss_from_base(self.base_loss(o))
    }

    fn loss_from_base(&self, l: f64) -> f64 {
        let p = self.sample_rate;
        match self.direction {
            Direction::Add => -(p * (-l).exp_m1()).ln_1p(),
            Direction::Remove => (p * l.exp_m1()).ln_1p(),
        }
    }

    /// Base loss producing privacy loss `y`. May be infinite at the ends of
    /// the range.
    fn base_from_loss(&self, y: f64) -> f64 {
        let p = self.sample_rate;
        match self.direction {
            Direction::Add => -((-y).exp_m1() / p).ln_1p(),
            Direction::Remove => (y.exp_m1() / p).ln_1p(),
        }
    }

    /// Infimum and supremum of the loss.
    pub fn range(&self) -> (f64, f64) {
        match self.mechanism {
            Mechanism::Laplace => {
                let b = 1.0 / self.sigma;
                (self.loss_from_base(-b), self.loss_from_base(b))
            }
            Mechanism::Gaussian => {
                let p = self.sample_rate;
                let edge = if p < 1.0 { (-p).ln_1p() } else { f64::NEG_INFINITY };
                match self.direction {
                    Direction::Add => (f64::NEG_INFINITY, -edge),
                    Direction::Remove => (edge, f64::INFINITY),
                }
            }
        }
    }

    /// Whether the range end is attained with positive probability.
    fn has_atoms(&self) -> bool {
        self.mechanism == Mechanism::Laplace
    }

    /// Output `o` at which the loss equals `y`, for `y` inside the range.
    /// For Laplace noise the result lies in `[0, 1]`.
    pub fn inverse(&self, y: f64) -> f64 {
        let l = self.base_from_loss(y);
        match self.mechanism {
            Mechanism::Gaussian => 0.5 - self.sigma * self.sigma * l,
            Mechanism::Laplace => (0.5 * (1.0 - self.sigma * l)).clamp(0.0, 1.0),
        }
    }

    /// Mixture components of the output distribution as (centre, weight).
    fn components(&self) -> [(f64, f64); 2] {
        let p = self.sample_rate;
        match self.direction {
            Direction::Add => [(0.0, 1.0), (1.0, 0.0)],
            Direction::Remove => [(0.0, p), (1.0, 1.0 - p)],
        }
    }

    /// `P(o <= x)` and `P(o > x)` under the output distribution.
    pub fn output_cdf_sf(&self, x: f64) -> (f64, f64) {
        let mut cdf = 0.0;
        let mut sf = 0.0;
        for (centre, w) in self.components() {
            if w == 0.0 {
                continue;
            }
            let (c, s) = base_cdf_sf(self.mechanism, self.sigma, x - centre);
            cdf += w * c;
            sf += w * s;
        }
        (cdf, sf)
    }

    /// `P(Y <= y)` and `P(Y > y)`, each computed without cancellation.
    pub fn cdf_sf(&self, y: f64) -> (f64, f64) {
        if self.sample_rate == 0.0 {
            return if y >= 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
        }
        let (lo, hi) = self.range();
        if y >= hi {
            return (1.0, 0.0);
        }
        if y < lo {
            return (0.0, 1.0);
        }
        let o = self.inverse(y);
        if self.has_atoms() {
            // Loss is constant outside (0, 1); handle the atoms explicitly.
            if o >= 1.0 {
                let (cdf1, sf1) = self.output_cdf_sf(1.0);
                return (sf1, cdf1);
            }
            if o <= 0.0 {
                let (cdf0, sf0) = self.output_cdf_sf(0.0);
                return (sf0, cdf0);
            }
        }
        let (c, s) = self.output_cdf_sf(o);
        // Y <= y  <=>  o >= inverse(y).
        (s, c)
    }

    /// Mean of `Y` clamped to `[lo, hi]`: `lo + integral_lo^hi P(Y > y) dy`.
    pub fn clamped_mean(&self, lo: f64, hi: f64, panel: f64) -> f64 {
        let (r_lo, r_hi) = self.range();
        let mut cuts = vec![lo];
        for c in [r_lo, r_hi] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        let mut integral = 0.0;
        for w in cuts.windows(2) {
            integral += gauss_legendre(|y| self.cdf_sf(y).1, w[0], w[1], panel);
        }
        lo + integral
    }
}

/// CDF and survival function of the zero-centred base noise.
pub(crate) fn base_cdf_sf(mechanism: Mechanism, scale: f64, x: f64) -> (f64, f64) {
    match mechanism {
        Mechanism::Gaussian => {
            let z = x / (scale * std::f64::consts::SQRT_2);
            (0.5 * erfc(-z), 0.5 * erfc(z))
        }
        Mechanism::Laplace => {
            let t = x / scale;
            if t < 0.0 {
                let c = 0.5 * t.exp();
                (c, 1.0 - c)
            } else {
                let s = 0.5 * (-t).exp();
                (1.0 - s, s)
            }
        }
    }
}

const GL_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Composite 8-point Gauss-Legendre quadrature with panels no wider than
/// `panel`.
pub(crate) fn gauss_legendre(f: impl Fn(f64) -> f64, a: f64, b: f64, panel: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let panels = ((b - a) / panel).ceil().clamp(1.0, 1e8) as usize;
    let w = (b - a) / panels as f64;
    let mut total = 0.0;
    for i in 0..panels {
        let mid = a + (i as f64 + 0.5) * w;
        let half = 0.5 * w;
        let mut s = 0.0;
        for (x, wt) in GL_NODES.iter().zip(GL_WEIGHTS) {
            s += wt * (f(mid - half * x) + f(mid + half * x));
        }
        total += s * half;
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all_losses() -> Vec<PrivacyLoss> {
        let mut v = Vec::new();
        for m in [Mechanism::Gaussian, Mechanism::Laplace] {
            for d in Direction::BOTH {
                for (s, p) in [(1.0, 1.0), (2.0, 0.3), (0.7, 0.05)] {
                    v.push(PrivacyLoss::new(m, s, p, d));
                }
            }
        }
        v
    }

    #[test]
    fn inverse_round_trips() {
        for pl in all_losses() {
            for o in [-0.3, 0.1, 0.45, 0.9, 1.6] {
                let y = pl.loss(o);
                if pl.mechanism == Mechanism::Laplace && !(0.0..1.0).contains(&o) {
                    continue;
                }
                let back = pl.inverse(y);
                assert!((back - o).abs() < 1e-9, "{pl:?} o={o} back={back}");
            }
        }
    }

    #[test]
    fn loss_is_non_increasing() {
        for pl in all_losses() {
            let mut prev = f64::INFINITY;
            for i in 0..200 {
                let o = -3.0 + 0.035 * i as f64;
                let y = pl.loss(o);
                assert!(y <= prev + 1e-15, "{pl:?}");
                prev = y;
            }
        }
    }

    #[test]
    fn cdf_matches_direct_integration() {
        // P(Y <= y) integrated directly over the output density.
        for pl in all_losses() {
            let (centre_lo, centre_hi) = (-40.0, 41.0);
            for y in [-0.3, -0.01, 0.0, 0.02, 0.4] {
                let direct = gauss_legendre(
                    |o| {
                        if pl.loss(o) <= y {
                            output_density(&pl, o)
                        } else {
                            0.0
                        }
                    },
                    centre_lo,
                    centre_hi,
                    1e-3,
                );
                let (c, s) = pl.cdf_sf(y);
                assert!((c - direct).abs() < 2e-4, "{pl:?} y={y} c={c} direct={direct}");
                assert!((c + s - 1.0).abs() < 1e-12);
            }
        }
    }

    fn output_density(pl: &PrivacyLoss, o: f64) -> f64 {
        pl.components()
            .iter()
            .map(|&(c, w)| {
                let x = o - c;
                w * match pl.mechanism {
                    Mechanism::Gaussian => {
                        (-(x * x) / (2.0 * pl.sigma * pl.sigma)).exp()
                            / (pl.sigma * (2.0 * std::f64::consts::PI).sqrt())
                    }
                    Mechanism::Laplace => (-x.abs() / pl.sigma).exp() / (2.0 * pl.sigma),
                }
            })
            .sum()
    }

    #[test]
    fn gauss_legendre_polynomial_exact() {
        let v = gauss_legendre(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, 10.0);
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn clamped_mean_of_unclamped_range_is_mean() {
        // E[Y] for the add direction at p = 1, Gaussian, is the KL divergence
        // -1/(2 sigma^2) with sign: Y = L(o), o ~ P, E[L] = 1/(2 sigma^2).
        let pl = PrivacyLoss::new(Mechanism::Gaussian, 1.5, 1.0, Direction::Add);
        let m = pl.clamped_mean(-20.0, 20.0, 0.01);
        assert!((m - 1.0 / (2.0 * 2.25)).abs() < 1e-10, "{m}");
    }
}

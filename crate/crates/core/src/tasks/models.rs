use crate::data::Example;
use crate::oracle::LossOracle;
use crate::rng::Rng;

use super::{sign_label, TaskError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    LinearLogistic,
    /// One tanh hidden layer of the given width.
    Mlp { hidden: usize },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Input dimension.
    pub d: usize,
    /// Standard deviation of the random initialization.
    pub init_scale: f64,
}

/// A built-in model with logistic loss `log(1 + exp(-y f(x)))`.
///
/// Parameter layout:
/// * logistic: `w[0..d]`, then bias;
/// * MLP: hidden weights row-major `W[k][j]` (`hidden * d`), hidden biases
///   (`hidden`), output weights (`hidden`), output bias.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self, TaskError> {
        if spec.d == 0 {
            return Err(TaskError::InvalidSpec("input dimension must be positive".into()));
        }
        if let ModelKind::Mlp { hidden: 0 } = spec.kind {
            return Err(TaskError::InvalidSpec("hidden width must be positive".into()));
        }
        if !(spec.init_scale.is_finite() && spec.init_scale >= 0.0) {
            return Err(TaskError::InvalidSpec(format!(
                "bad init scale {}",
                spec.init_scale
            )));
        }
        Ok(Model { spec })
    }

    pub fn logistic(d: usize) -> Self {
        Model {
            spec: ModelSpec {
                kind: ModelKind::LinearLogistic,
                d,
                init_scale: 0.0,
            },
        }
    }

    pub fn mlp(d: usize, hidden: usize, init_scale: f64) -> Result<Self, TaskError> {
        Model::new(ModelSpec {
            kind: ModelKind::Mlp { hidden },
            d,
            init_scale,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        let d = self.spec.d;
        match self.spec.kind {
            ModelKind::LinearLogistic => d + 1,
            ModelKind::Mlp { hidden } => (d + 1) * hidden + hidden + 1,
        }
    }

    /// Initial parameters: i.i.d. `N(0, init_scale^2)`.
    pub fn init_params(&self, seed: u64) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count()];
        if self.spec.init_scale > 0.0 {
            Rng::new(seed).fill_gaussian(&mut p);
            p.iter_mut().for_each(|v| *v *= self.spec.init_scale);
        }
        p
    }

    /// Real-valued score `f(x)`.
    pub fn score(&self, theta: &[f64], x: &[f64]) -> f64 {
        let d = self.spec.d;
        match self.spec.kind {
            ModelKind::LinearLogistic => dot(&theta[..d], x) + theta[d],
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = theta.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let (w2, b2) = rest.split_at(hidden);
                let mut out = b2[0];
                for k in 0..hidden {
                    out += w2[k] * (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh();
                }
                out
            }
        }
    }

    /// `+1` when the score is non-negative, else `-1`.
    pub fn predict(&self, theta: &[f64], x: &[f64]) -> f64 {
        if self.score(theta, x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    fn gradient_of(&self, theta: &[f64], ex: &Example) -> Vec<f64> {
        let d = self.spec.d;
        let x = &ex.features;
        let y = sign_label(ex.label);
        let m = self.score(theta, x);
        // d/dm softplus(-y m)
        let gm = -y * sigmoid(-y * m);
        match self.spec.kind {
            ModelKind::LinearLogistic => {
                let mut g: Vec<f64> = x.iter().map(|v| gm * v).collect();
                g.push(gm);
                g
            }
            ModelKind::Mlp { hidden } => {
                let (w1, rest) = theta.split_at(hidden * d);
                let (b1, rest) = rest.split_at(hidden);
                let w2 = &rest[..hidden];
                let mut g = vec![0.0; self.param_count()];
                let (gw1, grest) = g.split_at_mut(hidden * d);
                let (gb1, grest) = grest.split_at_mut(hidden);
                let (gw2, gb2) = grest.split_at_mut(hidden);
                for k in 0..hidden {
                    let a = (dot(&w1[k * d..(k + 1) * d], x) + b1[k]).tanh();
                    gw2[k] = gm * a;
                    let delta = gm * w2[k] * (1.0 - a * a);
                    gb1[k] = delta;
                    for j in 0..d {
                        gw1[k * d + j] = delta * x[j];
                    }
                }
                gb2[0] = gm;
                g
            }
        }
    }
}

impl LossOracle for Model {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn loss(&self, theta: &[f64], ex: &Example) -> f64 {
        softplus(-sign_label(ex.label) * self.score(theta, &ex.features))
    }

    fn gradient(&self, theta: &[f64], ex: &Example) -> Option<Vec<f64>> {
        Some(self.gradient_of(theta, ex))
    }

    fn has_gradient(&self) -> bool {
        true
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `log(1 + e^t)` without overflow.
pub(crate) fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_give_ln2() {
        let m = Model::logistic(3);
        let ex = Example::new(vec![1.0, -2.0, 0.5], -1.0);
        let l = m.loss(&[0.0; 4], &ex);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_margin_drives_loss_to_zero() {
        let m = Model::logistic(1);
        let ex = Example::new(vec![1.0], 1.0);
        assert!(m.loss(&[1e3, 0.0], &ex) < 1e-300);
        assert!(m.loss(&[-1e3, 0.0], &ex).is_finite());
    }

    #[test]
    fn param_counts() {
        assert_eq!(Model::logistic(20).param_count(), 21);
        assert_eq!(Model::mlp(20, 8, 0.1).unwrap().param_count(), 21 * 8 + 8 + 1);
    }

    #[test]
    fn tie_predicts_positive() {
        let m = Model::logistic(2);
        assert_eq!(m.predict(&[0.0; 3], &[1.0, 1.0]), 1.0);
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let m = Model::mlp(3, 4, 0.5).unwrap();
        let theta = m.init_params(3);
        let ex = Example::new(vec![0.3, -1.2, 0.8], -1.0);
        let g = m.gradient(&theta, &ex).unwrap();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut p = theta.clone();
            p[i] += h;
            let up = m.loss(&p, &ex);
            p[i] -= 2.0 * h;
            let down = m.loss(&p, &ex);
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6, "{i}: {fd} vs {}", g[i]);
        }
    }
}

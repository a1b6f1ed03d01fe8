use serde::{Deserialize, Serialize};

use crate::numerics::stats::normal_cdf;

/// Per-parent transform inside an [`Mechanism::Additive`] mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    Linear(f64),
    Tanh(f64),
    /// `a * (sqrt(1 + x^2) - 1)`: quadratic near zero, linear in the tails.
    SoftQuad(f64),
    Square(f64),
}

impl Term {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Term::Linear(a) => a * x,
            Term::Tanh(a) => a * x.tanh(),
            Term::SoftQuad(a) => a * ((1.0 + x * x).sqrt() - 1.0),
            Term::Square(a) => a * x * x,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// `f + sd * eps`
    #[default]
    Additive,
    /// `f * exp(sd * eps)`
    Multiplicative,
}

/// Treatment assignment probability as a function of the parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Propensity {
    /// `0.1 + 0.8 / (1 + exp(x1 * x2))` on two parents.
    ProductOfTwo,
    /// `0.1 + 0.8 / (1 + exp(-u))` on one parent.
    HiddenLogistic,
    /// `1 / (1 + exp(-(intercept + w . x)))`.
    Logistic { weights: Vec<f64>, intercept: f64 },
    /// `1 / ((1 + exp(a . x_first)) (1 + exp(b . x_rest)))`, where the first
    /// `a.len()` parents feed the first factor.
    TwoFactorLogistic { first: Vec<f64>, second: Vec<f64> },
}

impl Propensity {
    fn arity(&self) -> Option<usize> {
        match self {
            Propensity::ProductOfTwo => Some(2),
            Propensity::HiddenLogistic => Some(1),
            Propensity::Logistic { weights, .. } => Some(weights.len()),
            Propensity::TwoFactorLogistic { first, second } => Some(first.len() + second.len()),
        }
    }

    pub fn prob(&self, pa: &[f64]) -> f64 {
        match self {
            Propensity::ProductOfTwo => 0.1 + 0.8 / (1.0 + (pa[0] * pa[1]).exp()),
            Propensity::HiddenLogistic => 0.1 + 0.8 / (1.0 + (-pa[0]).exp()),
            Propensity::Logistic { weights, intercept } => {
                let z = intercept + weights.iter().zip(pa).map(|(w, x)| w * x).sum::<f64>();
                1.0 / (1.0 + (-z).exp())
            }
            Propensity::TwoFactorLogistic { first, second } => {
                let (pa1, pa2) = pa.split_at(first.len());
                let a: f64 = first.iter().zip(pa1).map(|(w, x)| w * x).sum();
                let b: f64 = second.iter().zip(pa2).map(|(w, x)| w * x).sum();
                1.0 / ((1.0 + a.exp()) * (1.0 + b.exp()))
            }
        }
    }
}

/// Outcome equations of the four benchmark models. Parents are passed in
/// node-index order; the expected roles are listed per variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BenchOutcome {
    /// parents (X1, X2, X3, X4, X5, D)
    M1,
    /// parents (X1, X3, X4, X5, D)
    M2,
    /// parents (X1, X2, X3, D)
    M3,
    /// parents (U, X1, X4, X5, D)
    M4,
}

impl BenchOutcome {
    pub fn arity(&self) -> usize {
        match self {
            BenchOutcome::M1 => 6,
            BenchOutcome::M2 | BenchOutcome::M4 => 5,
            BenchOutcome::M3 => 4,
        }
    }

    /// Outcome for parent values `pa` and noise draw `eps`.
    pub fn eval(&self, pa: &[f64], eps: f64) -> f64 {
        match self {
            BenchOutcome::M1 => {
                let (x1, x2, x3, x4, x5, d) = (pa[0], pa[1], pa[2], pa[3], pa[4], pa[5]);
                x1 * x1 + x1 * x2 + (x3 + d).exp() + (x4 * x5).sin() + eps
            }
            BenchOutcome::M2 => {
                let (x1, x3, x4, x5, d) = (pa[0], pa[1], pa[2], pa[3], pa[4]);
                x1 * x1 + (x3 + d).exp() + (x4 * x5).sin() + (10.0 * d + x5 * x5 / 2.0) * eps
            }
            BenchOutcome::M3 => {
                let (x1, x2, x3, d) = (pa[0], pa[1], pa[2], pa[3]);
                (x1 * x1 + (x2 * x3).sin() + d) * eps.exp()
            }
            BenchOutcome::M4 => {
                let (u, x1, x4, x5, d) = (pa[0], pa[1], pa[2], pa[3], pa[4]);
                x1 * x1 + d * x1 + (x4 * x5).sin() + u * u + eps
            }
        }
    }

    /// `E[Y | parents]`, integrating out the outcome noise.
    pub fn conditional_mean(&self, pa: &[f64]) -> f64 {
        match self {
            BenchOutcome::M3 => self.eval(pa, 0.0) * 0.5f64.exp(),
            _ => self.eval(pa, 0.0),
        }
    }
}

/// Structural equation of one node: a function of its parents (in node-index
/// order) and one standard normal exogenous draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "template", rename_all = "snake_case")]
pub enum Mechanism {
    /// Root node `mean + sd * eps`.
    Gaussian { mean: f64, sd: f64 },
    /// `intercept + product * prod(parents) + sum_i term_i(parent_i)`, then
    /// noise per `noise`.
    Additive {
        terms: Vec<Term>,
        #[serde(default)]
        intercept: f64,
        #[serde(default)]
        product: f64,
        noise_sd: f64,
        #[serde(default)]
        noise: NoiseMode,
    },
    /// `prod(parents) * sd * eps`.
    Product { sd: f64 },
    /// Binary node `1{Phi(eps) < p(parents)}`.
    Bernoulli { propensity: Propensity },
    Bench { model: BenchOutcome },
}

impl Mechanism {
    pub fn linear(weights: &[f64], noise_sd: f64) -> Self {
        Mechanism::Additive {
            terms: weights.iter().map(|&w| Term::Linear(w)).collect(),
            intercept: 0.0,
            product: 0.0,
            noise_sd,
            noise: NoiseMode::Additive,
        }
    }

    pub fn standard_normal() -> Self {
        Mechanism::Gaussian { mean: 0.0, sd: 1.0 }
    }

    /// Required parent count, or `None` when any count of at least one works.
    pub fn arity(&self) -> Option<usize> {
        match self {
            Mechanism::Gaussian { .. } => Some(0),
            Mechanism::Additive { terms, .. } => Some(terms.len()),
            Mechanism::Product { .. } => None,
            Mechanism::Bernoulli { propensity } => propensity.arity(),
            Mechanism::Bench { model } => Some(model.arity()),
        }
    }

    pub fn accepts_arity(&self, n: usize) -> bool {
        match self.arity() {
            Some(a) => a == n,
            None => n >= 1,
        }
    }

    #[inline]
    pub fn eval(&self, pa: &[f64], eps: f64) -> f64 {
        match self {
            Mechanism::Gaussian { mean, sd } => mean + sd * eps,
            Mechanism::Additive {
                terms,
                intercept,
                product,
                noise_sd,
                noise,
            } => {
                let mut f = *intercept;
                for (t, &x) in terms.iter().zip(pa) {
                    f += t.eval(x);
                }
                if *product != 0.0 {
                    f += product * pa.iter().product::<f64>();
                }
                match noise {
                    NoiseMode::Additive => f + noise_sd * eps,
                    NoiseMode::Multiplicative => f * (noise_sd * eps).exp(),
                }
            }
            Mechanism::Product { sd } => pa.iter().product::<f64>() * sd * eps,
            Mechanism::Bernoulli { propensity } => {
                if normal_cdf(eps) < propensity.prob(pa) {
                    1.0
                } else {
                    0.0
                }
            }
            Mechanism::Bench { model } => model.eval(pa, eps),
        }
    }

    /// Mean of the node given its parents, when available in closed form.
    pub fn conditional_mean(&self, pa: &[f64]) -> Option<f64> {
        match self {
            Mechanism::Gaussian { mean, .. } => Some(*mean),
            Mechanism::Additive { noise, noise_sd, .. } => {
                let f = self.eval(pa, 0.0);
                Some(match noise {
                    NoiseMode::Additive => f,
                    NoiseMode::Multiplicative => f * (noise_sd * noise_sd / 2.0).exp(),
                })
            }
            Mechanism::Product { .. } => Some(0.0),
            Mechanism::Bernoulli { propensity } => Some(propensity.prob(pa)),
            Mechanism::Bench { model } => Some(model.conditional_mean(pa)),
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self, Mechanism::Bernoulli { .. })
    }
}

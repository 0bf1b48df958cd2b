//! Parametric laws for interarrival times and delays.
//!
//! A single [`Law`] enum carries the closed forms (transform, survival,
//! discounted survival, moments, sampler). [`InterarrivalModel`] and
//! [`DelayModel`] are validated wrappers that restrict which families are
//! admissible in each role: interarrival laws must have a bounded density,
//! so `Deterministic` is rejected there.

use std::f64::consts::E;
use std::fmt;
use std::ops::Deref;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{factorial, Poly};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Law {
    Exponential { rate: f64 },
    Erlang { shape: u32, rate: f64 },
    Hyperexponential { weights: Vec<f64>, rates: Vec<f64> },
    Uniform { b: f64 },
    Deterministic { d: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HazardClass {
    Ifr,
    Dfr,
    ConstantHazard,
    Unknown,
}

impl HazardClass {
    /// Non-decreasing hazard (constant hazard counts).
    pub fn is_ifr(self) -> bool {
        matches!(self, HazardClass::Ifr | HazardClass::ConstantHazard)
    }

    /// Non-increasing hazard (constant hazard counts).
    pub fn is_dfr(self) -> bool {
        matches!(self, HazardClass::Dfr | HazardClass::ConstantHazard)
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {x}")))
    }
}

fn check_pole(s: Complex64, rate: f64) -> Result<()> {
    if (s + rate).norm() <= 1e-14 * rate.max(1.0) {
        Err(Error::Pole(format!("{}", -rate)))
    } else {
        Ok(())
    }
}

impl Law {
    pub fn name(&self) -> &'static str {
        match self {
            Law::Exponential { .. } => "exponential",
            Law::Erlang { .. } => "erlang",
            Law::Hyperexponential { .. } => "hyperexponential",
            Law::Uniform { .. } => "uniform",
            Law::Deterministic { .. } => "deterministic",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Law::Exponential { rate } => positive("rate", *rate),
            Law::Erlang { shape, rate } => {
                if *shape == 0 {
                    return Err(invalid("erlang shape must be >= 1"));
                }
                positive("rate", *rate)
            }
            Law::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return Err(invalid(
                        "hyperexponential needs equally many (non-zero) weights and rates",
                    ));
                }
                for w in weights {
                    positive("weight", *w)?;
                }
                for r in rates {
                    positive("rate", *r)?;
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(invalid(format!("weights sum to {total}, expected 1")));
                }
                Ok(())
            }
            Law::Uniform { b } => positive("b", *b),
            Law::Deterministic { d } => positive("d", *d),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Law::Exponential { rate } => 1.0 / rate,
            Law::Erlang { shape, rate } => *shape as f64 / rate,
            Law::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w / r).sum()
            }
            Law::Uniform { b } => b / 2.0,
            Law::Deterministic { d } => *d,
        }
    }

    pub fn second_moment(&self) -> f64 {
        match self {
            Law::Exponential { rate } => 2.0 / (rate * rate),
            Law::Erlang { shape, rate } => {
                let m = *shape as f64;
                m * (m + 1.0) / (rate * rate)
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| 2.0 * w / (r * r))
                .sum(),
            Law::Uniform { b } => b * b / 3.0,
            Law::Deterministic { d } => d * d,
        }
    }

    /// `E[exp(-s X)]` for complex `s`.
    pub fn laplace(&self, s: Complex64) -> Result<Complex64> {
        let one = Complex64::new(1.0, 0.0);
        match self {
            Law::Exponential { rate } => {
                check_pole(s, *rate)?;
                Ok(*rate / (s + rate))
            }
            Law::Erlang { shape, rate } => {
                check_pole(s, *rate)?;
                Ok((*rate / (s + rate)).powu(*shape))
            }
            Law::Hyperexponential { weights, rates } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, r) in weights.iter().zip(rates) {
                    check_pole(s, *r)?;
                    acc += w * r / (s + r);
                }
                Ok(acc)
            }
            Law::Uniform { b } => {
                let x = s * b;
                if x.norm() < 1e-3 {
                    Ok(one - x / 2.0 + x * x / 6.0 - x * x * x / 24.0 + x * x * x * x / 120.0)
                } else {
                    Ok((one - (-x).exp()) / x)
                }
            }
            Law::Deterministic { d } => Ok((-s * d).exp()),
        }
    }

    pub fn laplace_real(&self, s: f64) -> Result<f64> {
        let v = self.laplace(Complex64::new(s, 0.0))?;
        if !v.re.is_finite() {
            return Err(Error::Pole(format!("{s}")));
        }
        Ok(v.re)
    }

    /// Density at `t`; `None` for the atomic `Deterministic` law.
    pub fn density(&self, t: f64) -> Option<f64> {
        if t < 0.0 {
            return Some(0.0);
        }
        Some(match self {
            Law::Exponential { rate } => rate * (-rate * t).exp(),
            Law::Erlang { shape, rate } => erlang_density(*shape, *rate, t),
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r * (-r * t).exp())
                .sum(),
            Law::Uniform { b } => {
                if t < *b {
                    1.0 / b
                } else {
                    0.0
                }
            }
            Law::Deterministic { .. } => return None,
        })
    }

    /// Right limit of the density at zero.
    pub fn density_at_zero(&self) -> Option<f64> {
        match self {
            Law::Exponential { rate } => Some(*rate),
            Law::Erlang { shape, rate } => Some(if *shape == 1 { *rate } else { 0.0 }),
            Law::Hyperexponential { weights, rates } => {
                Some(weights.iter().zip(rates).map(|(w, r)| w * r).sum())
            }
            Law::Uniform { b } => Some(1.0 / b),
            Law::Deterministic { .. } => None,
        }
    }

    /// `Pr(X > t)`.
    pub fn survival(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 1.0;
        }
        match self {
            Law::Exponential { rate } => (-rate * t).exp(),
            Law::Erlang { shape, rate } => (-rate * t).exp() * poisson_head(*shape, rate * t),
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * (-r * t).exp())
                .sum(),
            Law::Uniform { b } => (1.0 - t / b).max(0.0),
            Law::Deterministic { d } => {
                if *d > t {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Discounted survival `int_t^inf e^{-delta y} dW(y)`.
    pub fn omega_bar(&self, delta: f64, t: f64) -> f64 {
        let t = t.max(0.0);
        match self {
            Law::Exponential { rate } => rate / (rate + delta) * (-(rate + delta) * t).exp(),
            Law::Erlang { shape, rate } => {
                let a = rate + delta;
                (rate / a).powi(*shape as i32) * (-a * t).exp() * poisson_head(*shape, a * t)
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + delta) * (-(r + delta) * t).exp())
                .sum(),
            Law::Uniform { b } => {
                if t >= *b {
                    0.0
                } else if delta == 0.0 {
                    (b - t) / b
                } else {
                    (-delta * t).exp() * -(-delta * (b - t)).exp_m1() / (delta * b)
                }
            }
            Law::Deterministic { d } => {
                if *d > t {
                    (-delta * d).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `e^{delta u} omega_bar(delta, u) = E[e^{-delta (L - u)}; L > u]`, bounded by the survival.
    pub fn residual_discounted(&self, delta: f64, u: f64) -> f64 {
        let u = u.max(0.0);
        match self {
            Law::Exponential { rate } => rate / (rate + delta) * (-rate * u).exp(),
            Law::Erlang { shape, rate } => {
                let a = rate + delta;
                (rate / a).powi(*shape as i32) * (-rate * u).exp() * poisson_head(*shape, a * u)
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w * r / (r + delta) * (-r * u).exp())
                .sum(),
            Law::Uniform { b } => {
                if u >= *b {
                    0.0
                } else if delta == 0.0 {
                    (b - u) / b
                } else {
                    -(-delta * (b - u)).exp_m1() / (delta * b)
                }
            }
            Law::Deterministic { d } => {
                if *d > u {
                    (-delta * (d - u)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    /// `int_0^inf e^{-delta x} Pr(X > x) dx`, computed from the survival function.
    pub fn discounted_survival_integral(&self, delta: f64) -> f64 {
        match self {
            Law::Exponential { rate } => 1.0 / (rate + delta),
            Law::Erlang { shape, rate } => {
                let a = rate + delta;
                (0..*shape).map(|k| rate.powi(k as i32) / a.powi(k as i32 + 1)).sum()
            }
            Law::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .map(|(w, r)| w / (r + delta))
                .sum(),
            Law::Uniform { b } => {
                let x = delta * b;
                let g = if x.abs() < 1e-2 {
                    // sum_k (-x)^k / (k+2)!
                    (0..8).map(|k| (-x).powi(k) / factorial(k as u32 + 2)).sum()
                } else {
                    1.0 / x + (-x).exp_m1() / (x * x)
                };
                b * g
            }
            Law::Deterministic { d } => {
                if delta == 0.0 {
                    *d
                } else {
                    -(-delta * d).exp_m1() / delta
                }
            }
        }
    }

    pub fn hazard_class(&self) -> HazardClass {
        match self {
            Law::Exponential { .. } => HazardClass::ConstantHazard,
            Law::Erlang { shape, .. } => {
                if *shape == 1 {
                    HazardClass::ConstantHazard
                } else {
                    HazardClass::Ifr
                }
            }
            Law::Hyperexponential { rates, .. } => {
                if rates.iter().all(|r| *r == rates[0]) {
                    HazardClass::ConstantHazard
                } else {
                    HazardClass::Dfr
                }
            }
            Law::Uniform { .. } => HazardClass::Ifr,
            Law::Deterministic { .. } => HazardClass::Unknown,
        }
    }

    pub fn rational_transform(&self) -> Option<RationalTransform> {
        RationalTransform::of(self)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Law::Exponential { rate } => exp_draw(*rate, rng),
            Law::Erlang { shape, rate } => (0..*shape).map(|_| exp_draw(*rate, rng)).sum(),
            Law::Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut phase = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        phase = i;
                        break;
                    }
                }
                exp_draw(rates[phase], rng)
            }
            Law::Uniform { b } => rng.random::<f64>() * b,
            Law::Deterministic { d } => *d,
        }
    }
}

impl fmt::Display for Law {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Law::Exponential { rate } => write!(f, "Exp({rate})"),
            Law::Erlang { shape, rate } => write!(f, "Erlang({shape}, {rate})"),
            Law::Hyperexponential { weights, rates } => write!(f, "H({weights:?}, {rates:?})"),
            Law::Uniform { b } => write!(f, "U(0, {b})"),
            Law::Deterministic { d } => write!(f, "D({d})"),
        }
    }
}

fn exp_draw<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    Exp::new(rate).expect("validated rate").sample(rng)
}

/// `sum_{k<m} x^k / k!`
fn poisson_head(m: u32, x: f64) -> f64 {
    let mut term = 1.0;
    let mut acc = 1.0;
    for k in 1..m {
        term *= x / k as f64;
        acc += term;
    }
    acc
}

fn erlang_density(m: u32, rate: f64, t: f64) -> f64 {
    if m == 1 {
        return rate * (-rate * t).exp();
    }
    if t == 0.0 {
        return 0.0;
    }
    let ln = m as f64 * rate.ln() + (m - 1) as f64 * t.ln() - rate * t - factorial(m - 1).ln();
    ln.exp()
}

/// Interarrival law: bounded density required.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Law", into = "Law")]
pub struct InterarrivalModel(Law);

impl InterarrivalModel {
    pub fn new(law: Law) -> Result<Self> {
        law.validate()?;
        if let Law::Deterministic { .. } = law {
            return Err(Error::UnsupportedFamily(
                "deterministic interarrival times have no density".into(),
            ));
        }
        Ok(Self(law))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Law::Exponential { rate })
    }

    pub fn law(&self) -> &Law {
        &self.0
    }

    pub fn density_value(&self, t: f64) -> f64 {
        self.0.density(t).expect("interarrival laws have densities")
    }

    pub fn f0(&self) -> f64 {
        self.0.density_at_zero().expect("interarrival laws have densities")
    }

    /// Supremum of the density.
    pub fn density_max(&self) -> f64 {
        match &self.0 {
            Law::Exponential { rate } => *rate,
            Law::Erlang { shape, rate } => {
                if *shape == 1 {
                    *rate
                } else {
                    erlang_density(*shape, *rate, (*shape - 1) as f64 / rate)
                }
            }
            Law::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(w, r)| w * r).sum()
            }
            Law::Uniform { b } => 1.0 / b,
            Law::Deterministic { .. } => unreachable!("rejected at construction"),
        }
    }

    /// A constant `C` with `u(t) <= C` for the renewal density `u`, and `C >= sup f`.
    pub fn density_sup(&self) -> f64 {
        let renewal_sup = match &self.0 {
            Law::Exponential { rate } => *rate,
            // u decreases from f(0) for mixtures of exponentials.
            Law::Hyperexponential { .. } => self.f0(),
            Law::Erlang { shape, rate } => erlang_renewal_density_sup(*shape, *rate),
            // u(t) = e^{t/b}/b on [0, b], maximal at t = b.
            Law::Uniform { b } => E / b,
            Law::Deterministic { .. } => unreachable!("rejected at construction"),
        };
        renewal_sup.max(self.density_max()).max(1.0 / self.mean())
    }
}

impl TryFrom<Law> for InterarrivalModel {
    type Error = Error;
    fn try_from(law: Law) -> Result<Self> {
        Self::new(law)
    }
}

impl From<InterarrivalModel> for Law {
    fn from(m: InterarrivalModel) -> Law {
        m.0
    }
}

impl Deref for InterarrivalModel {
    type Target = Law;
    fn deref(&self) -> &Law {
        &self.0
    }
}

/// Renewal density of Erlang(m, beta):
/// `u(t) = (beta/m) sum_k w_k exp(-beta (1 - w_k) t)` over the m-th roots of unity.
pub fn erlang_renewal_density(shape: u32, rate: f64, t: f64) -> f64 {
    let m = shape as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for k in 0..shape {
        let w = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / m);
        acc += w * (-(Complex64::new(1.0, 0.0) - w) * rate * t).exp();
    }
    rate / m * acc.re
}

fn erlang_renewal_density_sup(shape: u32, rate: f64) -> f64 {
    if shape == 1 {
        return rate;
    }
    // Transient dies out like exp(-beta (1 - cos(2 pi / m)) t).
    let decay = rate * (1.0 - (2.0 * std::f64::consts::PI / shape as f64).cos());
    let horizon = 40.0 / decay;
    let steps = 200_000;
    let mut sup = rate / shape as f64;
    for i in 0..=steps {
        let t = horizon * i as f64 / steps as f64;
        sup = sup.max(erlang_renewal_density(shape, rate, t));
    }
    sup
}

/// Delay (reporting lag / service time) law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Law", into = "Law")]
pub struct DelayModel(Law);

impl DelayModel {
    pub fn new(law: Law) -> Result<Self> {
        law.validate()?;
        Ok(Self(law))
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(Law::Exponential { rate })
    }

    pub fn law(&self) -> &Law {
        &self.0
    }

    pub fn exponential_rate(&self) -> Option<f64> {
        match self.0 {
            Law::Exponential { rate } => Some(rate),
            _ => None,
        }
    }
}

impl TryFrom<Law> for DelayModel {
    type Error = Error;
    fn try_from(law: Law) -> Result<Self> {
        Self::new(law)
    }
}

impl From<DelayModel> for Law {
    fn from(m: DelayModel) -> Law {
        m.0
    }
}

impl Deref for DelayModel {
    type Target = Law;
    fn deref(&self) -> &Law {
        &self.0
    }
}

/// Analytic continuation of `z -> E[e^{z X}]` as a ratio of real polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTransform {
    pub numerator: Poly,
    pub denominator: Poly,
    /// Real poles (rates), ascending.
    pub poles: Vec<f64>,
}

impl RationalTransform {
    fn of(law: &Law) -> Option<Self> {
        let (numerator, denominator, mut poles) = match law {
            Law::Exponential { rate } => (
                Poly::constant(*rate),
                Poly::linear(*rate, -1.0),
                vec![*rate],
            ),
            Law::Erlang { shape, rate } => (
                Poly::constant(rate.powi(*shape as i32)),
                Poly::linear(*rate, -1.0).pow(*shape),
                vec![*rate],
            ),
            Law::Hyperexponential { weights, rates } => {
                let factors: Vec<Poly> = rates.iter().map(|r| Poly::linear(*r, -1.0)).collect();
                let den = factors.iter().fold(Poly::constant(1.0), |acc, p| acc.mul(p));
                let mut num = Poly::constant(0.0);
                for (i, (w, r)) in weights.iter().zip(rates).enumerate() {
                    let others = factors
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .fold(Poly::constant(w * r), |acc, (_, p)| acc.mul(p));
                    num = num.add(&others);
                }
                (num, den, rates.clone())
            }
            Law::Uniform { .. } | Law::Deterministic { .. } => return None,
        };
        poles.sort_by(f64::total_cmp);
        poles.dedup();
        Some(Self {
            numerator,
            denominator,
            poles,
        })
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        self.numerator.eval(z) / self.denominator.eval(z)
    }

    pub fn derivative(&self, z: Complex64) -> Complex64 {
        let n = self.numerator.eval(z);
        let d = self.denominator.eval(z);
        let dn = self.numerator.derivative().eval(z);
        let dd = self.denominator.derivative().eval(z);
        (dn * d - n * dd) / (d * d)
    }

    pub fn smallest_pole(&self) -> f64 {
        self.poles[0]
    }
}

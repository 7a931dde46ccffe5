//! Interpolation schedules `phi: [0, 1] -> [0, 1]` with closed-form
//! derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{AdiaError, Result};

/// Largest supported boundary-cancellation order for [`Schedule::beta`].
pub const MAX_BETA_ORDER: u32 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    Linear,
    /// Local adiabatic schedule for the search problem in dimension `n_dim`.
    LocalAdiabatic { n_dim: usize },
    /// Normalized incomplete integral of `x^m (1-x)^m`.
    Beta(BetaSchedule),
}

/// `phi(s) = int_0^s x^m (1-x)^m dx / int_0^1 x^m (1-x)^m dx`, stored as the
/// monomial coefficients of the integrand.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    m: u32,
    /// Coefficients of `x^m (1-x)^m`, index = power.
    integrand: Vec<f64>,
    /// `int_0^1 x^m (1-x)^m dx = (m!)^2 / (2m+1)!`
    normalization: f64,
}

impl BetaSchedule {
    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }
}

impl Schedule {
    pub fn linear() -> Self {
        Schedule::Linear
    }

    pub fn local(n_dim: usize) -> Result<Self> {
        if n_dim < 2 {
            return Err(AdiaError::Validation(format!(
                "local schedule needs dimension N >= 2, got {n_dim}"
            )));
        }
        Ok(Schedule::LocalAdiabatic { n_dim })
    }

    pub fn beta(m: u32) -> Result<Self> {
        if m > MAX_BETA_ORDER {
            return Err(AdiaError::Validation(format!(
                "beta schedule order m = {m} exceeds the supported maximum {MAX_BETA_ORDER}"
            )));
        }
        let m_us = m as usize;
        let mut integrand = vec![0.0; 2 * m_us + 1];
        let mut binom = 1.0_f64;
        for k in 0..=m_us {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            integrand[m_us + k] = sign * binom;
            binom = binom * (m_us - k) as f64 / (k + 1) as f64;
        }
        let mut normalization = 1.0 / (2 * m_us + 1) as f64;
        for k in 1..=m_us {
            normalization *= k as f64 / (m_us + k) as f64;
        }
        Ok(Schedule::Beta(BetaSchedule {
            m,
            integrand,
            normalization,
        }))
    }

    /// Number of derivatives that vanish at both boundaries.
    pub fn boundary_order(&self) -> u32 {
        match self {
            Schedule::Beta(b) => b.m,
            _ => 0,
        }
    }

    pub fn eval(&self, s: f64) -> Result<f64> {
        check_domain(s)?;
        Ok(match self {
            Schedule::Linear => s,
            Schedule::LocalAdiabatic { n_dim } => {
                if s == 0.0 {
                    0.0
                } else if s == 1.0 {
                    1.0
                } else {
                    let r = ((*n_dim - 1) as f64).sqrt();
                    (r - (r.atan() * (1.0 - 2.0 * s)).tan()) / (2.0 * r)
                }
            }
            Schedule::Beta(b) => {
                // The alternating monomial sum is only well conditioned on the
                // lower half; use phi(s) = 1 - phi(1 - s) above it.
                if s <= 0.5 {
                    b.antiderivative(s)
                } else {
                    1.0 - b.antiderivative(1.0 - s)
                }
            }
        })
    }

    /// `p`-th derivative of the schedule; `p = 0` is the value itself.
    pub fn derivative(&self, s: f64, p: u32) -> Result<f64> {
        check_domain(s)?;
        if p == 0 {
            return self.eval(s);
        }
        match self {
            Schedule::Linear => Ok(if p == 1 { 1.0 } else { 0.0 }),
            Schedule::LocalAdiabatic { n_dim } => {
                let r = ((*n_dim - 1) as f64).sqrt();
                let a = r.atan();
                let u = a * (1.0 - 2.0 * s);
                let tan = u.tan();
                let sec2 = 1.0 + tan * tan;
                match p {
                    1 => Ok(a * sec2 / r),
                    2 => Ok(-4.0 * a * a * sec2 * tan / r),
                    _ => Err(AdiaError::Capability(format!(
                        "local schedule has closed-form derivatives up to order 2 only \
                         (requested {p}); use numeric differentiation"
                    ))),
                }
            }
            Schedule::Beta(b) => {
                if s <= 0.5 {
                    Ok(b.derivative(s, p))
                } else {
                    let sign = if p % 2 == 1 { 1.0 } else { -1.0 };
                    Ok(sign * b.derivative(1.0 - s, p))
                }
            }
        }
    }
}

impl BetaSchedule {
    fn antiderivative(&self, s: f64) -> f64 {
        // int_0^s sum_j c_j x^j dx = sum_j c_j s^{j+1} / (j+1), Horner form.
        let mut acc = 0.0;
        for (j, c) in self.integrand.iter().enumerate().rev() {
            acc = acc * s + c / (j + 1) as f64;
        }
        acc * s / self.normalization
    }

    fn derivative(&self, s: f64, p: u32) -> f64 {
        // phi^{(p)} = (d/ds)^{p-1} integrand / normalization
        let order = (p - 1) as usize;
        if order >= self.integrand.len() {
            return 0.0;
        }
        // Horner in s over the terms j >= order, each carrying s^{j - order}.
        let mut acc = 0.0;
        for j in (order..self.integrand.len()).rev() {
            let falling: f64 = (0..order).map(|k| (j - k) as f64).product();
            acc = acc * s + self.integrand[j] * falling;
        }
        acc / self.normalization
    }
}

fn check_domain(s: f64) -> Result<()> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(AdiaError::Domain(format!(
            "reduced time s = {s} lies outside [0, 1]"
        )))
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Linear => write!(f, "linear"),
            Schedule::LocalAdiabatic { n_dim } => write!(f, "local:N={n_dim}"),
            Schedule::Beta(b) => write!(f, "beta:m={}", b.m),
        }
    }
}

impl FromStr for Schedule {
    type Err = AdiaError;

    fn from_str(text: &str) -> Result<Self> {
        let text = text.trim();
        let bad = || {
            AdiaError::Validation(format!(
                "unrecognized schedule '{text}' (expected linear, local:N=<int> or beta:m=<int>)"
            ))
        };
        if text.eq_ignore_ascii_case("linear") {
            return Ok(Schedule::Linear);
        }
        let (kind, param) = text.split_once(':').ok_or_else(bad)?;
        let (key, value) = param.split_once('=').ok_or_else(bad)?;
        match (kind.trim().to_ascii_lowercase().as_str(), key.trim()) {
            ("local", "N") | ("local", "n") => {
                Schedule::local(value.trim().parse().map_err(|_| bad())?)
            }
            ("beta", "m") => Schedule::beta(value.trim().parse().map_err(|_| bad())?),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for Schedule {
    type Error = AdiaError;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<Schedule> for String {
    fn from(value: Schedule) -> Self {
        value.to_string()
    }
}

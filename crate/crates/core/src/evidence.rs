//! Directional likelihood ratios against a dividing hypothesis.
//!
//! A one-sided p-value `p` against `θ = Δ` maps to the likelihood ratio
//! `0.25 / (p - p²)`, which is at least 1 and symmetric under `p ↔ 1 - p`.
//! Direction is carried by orientation: the ratio as computed when the
//! observed effect exceeds Δ, its reciprocal otherwise. Everything is kept as
//! a natural log so the extreme tails neither overflow nor round to zero.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::normal::sf_log;

/// Smallest tail probability fed into the likelihood ratio.
pub const P_FLOOR: f64 = 1e-300;
/// Largest probability retained as a linear value.
pub const P_CEIL: f64 = 1.0 - 1e-16;

const LN_QUARTER: f64 = -std::f64::consts::LN_2 * 2.0;

/// A probability strictly inside (0, 1).
///
/// Both the value and its complement are stored, each computed on the side
/// where it is accurate, so an upper-tail p-value of `1 - 1e-20` still knows
/// its complement is `1e-20`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Probability {
    value: f64,
    complement: f64,
}

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_nan() || value <= 0.0 || value >= 1.0 {
            return Err(domain(format!("probability must lie in (0, 1), got {value}")));
        }
        Ok(Self {
            value,
            complement: 1.0 - value,
        })
    }

    /// Builds a probability from a lower-tail value and its complement,
    /// clamping both away from 0 and 1. NaN is rejected.
    pub fn from_tails(value: f64, complement: f64) -> Result<Self> {
        if value.is_nan() || complement.is_nan() {
            return Err(domain("probability is NaN"));
        }
        Ok(Self {
            value: value.clamp(P_FLOOR, P_CEIL),
            complement: complement.clamp(P_FLOOR, P_CEIL),
        })
    }

    pub fn value(self) -> f64 {
        self.value
    }

    /// `1 - value`, without cancellation.
    pub fn complement(self) -> f64 {
        self.complement
    }

    /// The probability `1 - p`.
    pub fn flipped(self) -> Self {
        Self {
            value: self.complement,
            complement: self.value,
        }
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.value.fmt(f)
    }
}

/// A strictly positive likelihood ratio, stored as its natural log.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LikelihoodRatio {
    log_value: f64,
}

impl LikelihoodRatio {
    pub const ONE: Self = Self { log_value: 0.0 };

    pub fn from_log(log_value: f64) -> Result<Self> {
        if !log_value.is_finite() {
            return Err(domain(format!("log likelihood ratio must be finite, got {log_value}")));
        }
        Ok(Self { log_value })
    }

    pub fn from_value(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(domain(format!(
                "likelihood ratio must be positive and finite, got {value}"
            )));
        }
        Self::from_log(value.ln())
    }

    pub fn log_value(self) -> f64 {
        self.log_value
    }

    /// Linear value; saturates to infinity only if the log exceeds ~709.
    pub fn value(self) -> f64 {
        self.log_value.exp()
    }

    pub fn inverse(self) -> Self {
        Self {
            log_value: -self.log_value,
        }
    }

    /// `max(LR, 1/LR)`: evidence magnitude irrespective of direction.
    pub fn folded(self) -> Self {
        Self {
            log_value: self.log_value.abs(),
        }
    }
}

impl fmt::Display for LikelihoodRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.value().fmt(f)
    }
}

/// An effect expressed in standard-error units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StandardizedEffect(f64);

impl StandardizedEffect {
    pub fn new(z: f64) -> Result<Self> {
        if !z.is_finite() {
            return Err(domain(format!("standardized effect must be finite, got {z}")));
        }
        Ok(Self(z))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

fn standardize(theta_obs: f64, delta: f64, se: f64) -> Result<f64> {
    if !(se.is_finite() && se > 0.0) {
        return Err(domain(format!("standard error must be positive, got {se}")));
    }
    if !theta_obs.is_finite() || !delta.is_finite() {
        return Err(domain("effect and dividing value must be finite"));
    }
    let z = (theta_obs - delta) / se;
    if !z.is_finite() {
        return Err(domain("standardized effect overflowed"));
    }
    Ok(z)
}

/// Upper-tail probability `1 - Φ(z)` with its complement, both from the
/// log-survival function of |z|.
fn upper_tail(z: f64) -> Probability {
    let small = sf_log(z.abs()).exp();
    let large = 1.0 - small;
    let (value, complement) = if z >= 0.0 { (small, large) } else { (large, small) };
    Probability::from_tails(value, complement).expect("tails of a finite z are never NaN")
}

/// One-sided p-value of the observed effect against the dividing value:
/// `1 - Φ((θ_obs - Δ) / se)`.
pub fn one_sided_p(theta_obs: f64, delta: f64, se: f64) -> Result<Probability> {
    standardize(theta_obs, delta, se).map(upper_tail)
}

/// `0.25 / (p - p²)`, always ≥ 1, evaluated as `ln 0.25 - ln p - ln(1 - p)`.
pub fn lr_from_p(p: Probability) -> LikelihoodRatio {
    // Summing the two logs in a fixed order keeps lr_from_p(p) == lr_from_p(1 - p).
    let (lo, hi) = if p.value <= p.complement {
        (p.value, p.complement)
    } else {
        (p.complement, p.value)
    };
    let log_value = LN_QUARTER - lo.ln() - hi.ln();
    // p - p² ≤ 0.25 makes this non-negative; rounding can push it a hair below
    LikelihoodRatio {
        log_value: log_value.max(0.0),
    }
}

/// Directional likelihood ratio of `θ_T > Δ` versus the dividing hypothesis:
/// the ratio itself when the observed effect is above Δ, its reciprocal
/// below, and exactly 1 on the boundary.
pub fn directional_lr(theta_obs: f64, delta: f64, se: f64) -> Result<LikelihoodRatio> {
    let z = standardize(theta_obs, delta, se)?;
    Ok(oriented(z, lr_from_p(upper_tail(z))))
}

/// Likelihood ratio from a standardized effect `Z` and a dividing value in
/// the same standard-error units: `0.25 / (Φ(Z - Δ) - Φ(Z - Δ)²)`.
///
/// Not oriented; callers attach direction from the sign of `z - delta_std`.
pub fn lr_from_z(z: StandardizedEffect, delta_std: f64) -> Result<LikelihoodRatio> {
    one_sided_p(z.get(), delta_std, 1.0).map(lr_from_p)
}

/// Directional generalized likelihood ratio for the normal model: the
/// likelihood maximized on the observed side of Δ over the likelihood at Δ,
/// `exp(z² / 2)`, oriented like [`directional_lr`].
///
/// Diagnostic only; the stopping rule never consults it.
pub fn supremum_glr(theta_obs: f64, delta: f64, se: f64) -> Result<LikelihoodRatio> {
    let z = standardize(theta_obs, delta, se)?;
    LikelihoodRatio::from_log(0.5 * z * z).map(|lr| oriented(z, lr))
}

fn oriented(z: f64, lr: LikelihoodRatio) -> LikelihoodRatio {
    if z > 0.0 {
        lr
    } else if z < 0.0 {
        lr.inverse()
    } else {
        LikelihoodRatio::ONE
    }
}

/// Boundary of the stopping region in standard-error units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopBoundary {
    /// Smallest |z| at which the ratio reaches the threshold.
    pub z: f64,
    /// One-sided p-value at that z.
    pub p: f64,
}

/// Finds the standardized distance from Δ at which the (unoriented) ratio
/// first reaches `lr_threshold`, by bisection on the ratio itself.
pub fn stop_boundary(lr_threshold: f64) -> Result<StopBoundary> {
    if !(lr_threshold.is_finite() && lr_threshold > 1.0) {
        return Err(domain(format!("threshold must exceed 1, got {lr_threshold}")));
    }
    let target = lr_threshold.ln();
    let log_lr = |z: f64| lr_from_p(upper_tail(z)).log_value;
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while log_lr(hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > 64.0 {
            return Err(domain("threshold beyond representable tail"));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_lr(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(StopBoundary {
        z: hi,
        p: upper_tail(hi).value,
    })
}

//! Closed-form limits for indicator terminal functions.
//!
//! Every two-sided limit is evaluated on the centered interval `[-κ, κ]`
//! after shifting the endpoints by the midpoint `(μ̲ + μ̄)/2`; the literal
//! uncentered formulas are kept as `*_direct` for cross-checking.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::AmbiguityInterval;

/// `P(N(mu, 1) <= x)`.
pub fn normal_cdf(mu: f64, x: f64) -> f64 {
    if x == f64::INFINITY {
        return 1.0;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-(x - mu) * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `P(N(0,1) > z)`.
pub fn normal_sf(z: f64) -> f64 {
    normal_cdf(0.0, -z)
}

pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// `ln P(N(0,1) <= z)`, accurate deep into the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    if z > -8.0 {
        return normal_cdf(0.0, z).ln();
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    // Mills ratio continued fraction: Φ(-x) = pdf(x) / (x + 1/(x + 2/(x + 3/(x + ...)))).
    let x = -z;
    let mut tail = x;
    for k in (1..=60).rev() {
        tail = x + k as f64 / tail;
    }
    -0.5 * x * x - 0.5 * (2.0 * PI).ln() - tail.ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Upper,
    Lower,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    /// `I_{(-∞, b]}`
    Left,
    /// `I_{[a, ∞)}`
    Right,
}

/// Which piece of the closed form produced a value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `a + b >= μ̲ + μ̄`
    AtOrAboveCenter,
    /// `a + b < μ̲ + μ̄`
    BelowCenter,
    LeftTail,
    RightTail,
    WholeLine,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LimitValue {
    pub value: f64,
    pub branch: Branch,
    pub kappa: f64,
    pub center: f64,
}

/// Upper or lower limit of `I_{[a,b]}` over the drift interval. Either endpoint
/// may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IndicatorLimit {
    pub interval: AmbiguityInterval,
    pub a: f64,
    pub b: f64,
    pub side: Side,
}

impl IndicatorLimit {
    pub fn new(interval: AmbiguityInterval, a: f64, b: f64, side: Side) -> Self {
        IndicatorLimit { interval, a, b, side }
    }

    pub fn evaluate(&self) -> Result<LimitValue> {
        let (a, b) = (self.a, self.b);
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(Error::BadInterval { a, b });
        }
        let (kappa, center) = shift_reduce(&self.interval);
        let result = |value: f64, branch| LimitValue { value: value.clamp(0.0, 1.0), branch, kappa, center };
        match (a.is_finite(), b.is_finite()) {
            (false, false) => return Ok(result(1.0, Branch::WholeLine)),
            (false, true) => {
                let v = one_sided_limit(&self.interval, b, Tail::Left, self.side);
                return Ok(result(v, Branch::LeftTail));
            }
            (true, false) => {
                let v = one_sided_limit(&self.interval, a, Tail::Right, self.side);
                return Ok(result(v, Branch::RightTail));
            }
            (true, true) => {}
        }
        let branch = if (a - center) + (b - center) >= 0.0 { Branch::AtOrAboveCenter } else { Branch::BelowCenter };
        Ok(result(self.branch_value(branch)?, branch))
    }

    /// Value of one of the two finite-interval formulas, regardless of which
    /// one applies to `[a, b]`. Not clamped.
    pub fn branch_value(&self, branch: Branch) -> Result<f64> {
        let (kappa, center) = shift_reduce(&self.interval);
        let (lo, hi) = (self.a - center, self.b - center);
        let width = hi - lo;
        Ok(match (self.side, branch) {
            (Side::Upper, Branch::AtOrAboveCenter) => {
                normal_cdf(-kappa, -lo) - (-kappa * width).exp() * normal_cdf(-kappa, -hi)
            }
            (Side::Upper, Branch::BelowCenter) => {
                normal_cdf(-kappa, hi) - (-kappa * width).exp() * normal_cdf(-kappa, lo)
            }
            (Side::Lower, Branch::AtOrAboveCenter) => {
                normal_cdf(kappa, -lo) - (kappa * width + ln_normal_cdf(-hi - kappa)).exp()
            }
            (Side::Lower, Branch::BelowCenter) => {
                normal_cdf(kappa, hi) - (kappa * width + ln_normal_cdf(lo - kappa)).exp()
            }
            _ => return Err(Error::BadParameters(format!("{branch:?} is not a finite-interval branch"))),
        })
    }
}

/// Upper limit `E_[μ̲,μ̄][I_[a,b](B₁)]`.
pub fn upper_indicator_limit(iv: &AmbiguityInterval, a: f64, b: f64) -> Result<f64> {
    Ok(IndicatorLimit::new(*iv, a, b, Side::Upper).evaluate()?.value)
}

/// Lower limit `ℰ_[μ̲,μ̄][I_[a,b](B₁)]`.
pub fn lower_indicator_limit(iv: &AmbiguityInterval, a: f64, b: f64) -> Result<f64> {
    Ok(IndicatorLimit::new(*iv, a, b, Side::Lower).evaluate()?.value)
}

/// Upper limit evaluated with the uncentered formula, without shifting.
pub fn upper_indicator_limit_direct(iv: &AmbiguityInterval, a: f64, b: f64) -> Result<f64> {
    check_finite_interval(a, b)?;
    let (lo, hi) = (iv.mu_lower, iv.mu_upper);
    let damp = (-(hi - lo) * (b - a) / 2.0).exp();
    Ok(if a + b >= hi + lo {
        normal_cdf(-hi, -a) - damp * normal_cdf(-hi, -b)
    } else {
        normal_cdf(lo, b) - damp * normal_cdf(lo, a)
    })
}

/// Lower limit evaluated with the uncentered formula, without shifting.
pub fn lower_indicator_limit_direct(iv: &AmbiguityInterval, a: f64, b: f64) -> Result<f64> {
    check_finite_interval(a, b)?;
    let (lo, hi) = (iv.mu_lower, iv.mu_upper);
    let grow = ((hi - lo) * (b - a) / 2.0).exp();
    Ok(if a + b >= hi + lo {
        normal_cdf(-lo, -a) - grow * normal_cdf(-lo, -b)
    } else {
        normal_cdf(hi, b) - grow * normal_cdf(hi, a)
    })
}

fn check_finite_interval(a: f64, b: f64) -> Result<()> {
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::BadInterval { a, b });
    }
    Ok(())
}

/// Limits for one-sided indicators, where a constant extreme drift is optimal.
///
/// `Tail::Left` is `I_{(-∞, bound]}`, `Tail::Right` is `I_{[bound, ∞)}`.
pub fn one_sided_limit(iv: &AmbiguityInterval, bound: f64, tail: Tail, side: Side) -> f64 {
    let (kappa, center) = shift_reduce(iv);
    let x = bound - center;
    match (tail, side) {
        (Tail::Left, Side::Upper) => normal_cdf(-kappa, x),
        (Tail::Left, Side::Lower) => normal_cdf(kappa, x),
        (Tail::Right, Side::Upper) => normal_cdf(-kappa, -x),
        (Tail::Right, Side::Lower) => normal_cdf(kappa, -x),
    }
}

/// `(κ, c) = ((μ̄ - μ̲)/2, (μ̄ + μ̲)/2)`.
pub fn shift_reduce(iv: &AmbiguityInterval) -> (f64, f64) {
    (iv.kappa(), iv.center())
}

/// Transition density at time `t` of the diffusion started at `x` with drift
/// `-κ·sgn(X)` (pulled toward the origin).
pub fn reflected_density(x: f64, kappa: f64, t: f64, z: f64) -> Result<f64> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::BadTime(t));
    }
    if !(kappa >= 0.0) {
        return Err(Error::BadParameters(format!("kappa must be >= 0, got {kappa}")));
    }
    let sqrt_t = t.sqrt();
    let exponent = ((x - z).powi(2) + 2.0 * kappa * t * (z.abs() - x.abs()) + kappa * kappa * t * t) / (2.0 * t);
    let kernel = (-exponent).exp() / (2.0 * PI * t).sqrt();
    let boundary = if kappa == 0.0 {
        0.0
    } else {
        kappa * (-2.0 * kappa * z.abs()).exp() * normal_sf((x.abs() + z.abs() - kappa * t) / sqrt_t)
    };
    Ok(kernel + boundary)
}

use std::cmp::Ordering;

use num_traits::{One, Zero};
use serde::Serialize;

use crate::closed_form::normal_cdf;
use crate::error::{Error, Result};
use crate::exact::{rationalize, Rational, SurdPoint};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminalKind {
    /// `I_[a,b]`; either endpoint may be infinite.
    Indicator {
        a: f64,
        b: f64,
    },
    /// Gaussian mollification of `I_[a,b]` with bandwidth `h`.
    SmoothedIndicator {
        a: f64,
        b: f64,
        h: f64,
    },
    /// Piecewise-linear interpolation through `(xs, ys)`, flat outside.
    Tabulated {
        xs: Vec<f64>,
        ys: Vec<f64>,
    },
    Constant {
        value: f64,
    },
}

/// A bounded terminal function `φ` with an optional symmetry center.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TerminalFunction {
    pub kind: TerminalKind,
    pub center: Option<f64>,
}

/// Terminal functions that take rational values at every point and can be
/// evaluated with exact comparisons only.
#[derive(Clone, Debug, PartialEq)]
pub enum ExactTerminal {
    Indicator { lo: Option<Rational>, hi: Option<Rational> },
    Constant(Rational),
}

impl ExactTerminal {
    /// `cmp(r)` must return the ordering of the evaluation point relative to `r`.
    pub fn eval(&self, cmp: impl Fn(&Rational) -> Ordering) -> Rational {
        match self {
            ExactTerminal::Constant(k) => k.clone(),
            ExactTerminal::Indicator { lo, hi } => {
                let above = lo.as_ref().is_none_or(|r| cmp(r) != Ordering::Less);
                let below = hi.as_ref().is_none_or(|r| cmp(r) != Ordering::Greater);
                if above && below {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            }
        }
    }
}

impl TerminalFunction {
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        check_interval(a, b)?;
        let center = (a.is_finite() && b.is_finite()).then_some(0.5 * (a + b));
        Ok(TerminalFunction { kind: TerminalKind::Indicator { a, b }, center })
    }

    /// `I_(-∞, b]`
    pub fn left(b: f64) -> Result<Self> {
        Self::indicator(f64::NEG_INFINITY, b)
    }

    /// `I_[a, ∞)`
    pub fn right(a: f64) -> Result<Self> {
        Self::indicator(a, f64::INFINITY)
    }

    pub fn smoothed_indicator(a: f64, b: f64, h: f64) -> Result<Self> {
        check_interval(a, b)?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::BadParameters(format!("bandwidth must be positive, got {h}")));
        }
        let center = (a.is_finite() && b.is_finite()).then_some(0.5 * (a + b));
        Ok(TerminalFunction { kind: TerminalKind::SmoothedIndicator { a, b, h }, center })
    }

    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.is_empty() || xs.len() != ys.len() {
            return Err(Error::BadParameters("tabulated function needs matching nonempty xs and ys".into()));
        }
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::BadParameters("tabulated xs must be strictly increasing".into()));
        }
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::BadParameters("tabulated ys must be finite".into()));
        }
        Ok(TerminalFunction { kind: TerminalKind::Tabulated { xs, ys }, center: None })
    }

    pub fn constant(value: f64) -> Self {
        TerminalFunction { kind: TerminalKind::Constant { value }, center: None }
    }

    pub fn with_center(mut self, center: f64) -> Self {
        self.center = Some(center);
        self
    }

    pub fn center(&self) -> Option<f64> {
        self.center
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            TerminalKind::Indicator { a, b } => {
                if *a <= x && x <= *b {
                    1.0
                } else {
                    0.0
                }
            }
            TerminalKind::SmoothedIndicator { a, b, h } => {
                (normal_cdf(0.0, (b - x) / h) - normal_cdf(0.0, (a - x) / h)).max(0.0)
            }
            TerminalKind::Tabulated { xs, ys } => interpolate(xs, ys, x),
            TerminalKind::Constant { value } => *value,
        }
    }

    pub fn sample(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter().map(|&x| self.eval(x)).collect()
    }

    /// `(inf φ, sup φ)`.
    pub fn bounds(&self) -> (f64, f64) {
        match &self.kind {
            TerminalKind::Indicator { a, b } => {
                if a.is_infinite() && b.is_infinite() {
                    (1.0, 1.0)
                } else {
                    (0.0, 1.0)
                }
            }
            TerminalKind::SmoothedIndicator { .. } => (0.0, 1.0),
            TerminalKind::Tabulated { ys, .. } => {
                ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)))
            }
            TerminalKind::Constant { value } => (*value, *value),
        }
    }

    /// Points where `φ` or its derivative jumps, for splitting quadrature.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            TerminalKind::Indicator { a, b } | TerminalKind::SmoothedIndicator { a, b, .. } => {
                [*a, *b].into_iter().filter(|x| x.is_finite()).collect()
            }
            TerminalKind::Tabulated { xs, .. } => xs.clone(),
            TerminalKind::Constant { .. } => Vec::new(),
        }
    }

    /// Indicator endpoints, if `φ` is a (possibly one-sided) indicator.
    pub fn indicator_bounds(&self) -> Option<(f64, f64)> {
        match self.kind {
            TerminalKind::Indicator { a, b } => Some((a, b)),
            _ => None,
        }
    }

    /// Mollified version of an indicator; other kinds are returned unchanged.
    pub fn smoothed(&self, h: f64) -> Result<Self> {
        match self.kind {
            TerminalKind::Indicator { a, b } => {
                let mut out = Self::smoothed_indicator(a, b, h)?;
                out.center = self.center;
                Ok(out)
            }
            _ => Ok(self.clone()),
        }
    }

    /// Exact form for lattice evaluation, or `None` if `φ` takes irrational values.
    pub fn exact_form(&self) -> Option<ExactTerminal> {
        match &self.kind {
            TerminalKind::Indicator { a, b } => {
                let lo = if a.is_finite() { Some(rationalize(*a, "a").ok()?) } else { None };
                let hi = if b.is_finite() { Some(rationalize(*b, "b").ok()?) } else { None };
                Some(ExactTerminal::Indicator { lo, hi })
            }
            TerminalKind::Constant { value } => Some(ExactTerminal::Constant(rationalize(*value, "constant").ok()?)),
            _ => None,
        }
    }

    pub fn eval_exact(&self, point: &SurdPoint) -> Option<Rational> {
        Some(self.exact_form()?.eval(|r| point.cmp_rational(r)))
    }
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if a.is_nan() || b.is_nan() || a >= b {
        return Err(Error::BadInterval { a, b });
    }
    Ok(())
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    if x <= xs[0] {
        return ys[0];
    }
    let last = xs.len() - 1;
    if x >= xs[last] {
        return ys[last];
    }
    let i = xs.partition_point(|&v| v <= x);
    let (x0, x1, y0, y1) = (xs[i - 1], xs[i], ys[i - 1], ys[i]);
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

//! The drift-switching statistics `M_{m,n}`, `M̃_{m,n}` and their selected means.

use std::cmp::Ordering;
use std::io::{Read, Write};

use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{rationalize, surd_sign, to_f64, Rational, SurdPoint};
use crate::measures::{AmbiguityInterval, ExactInterval};

pub use crate::worst_case::condition1_diagnostic;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    /// `M_{m,n}`: the upper mean is selected while the statistic is at or below the threshold.
    #[serde(rename = "M")]
    M,
    /// `M̃_{m,n}`: the upper mean is selected while the statistic is at or above the threshold.
    #[serde(rename = "M-tilde")]
    Tilde,
}

/// Threshold rule choosing `μ̄` or `μ̲` from the running statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SwitchRule {
    /// Symmetry center `c`; `±∞` gives a constant selection.
    pub center: f64,
    pub interval: AmbiguityInterval,
}

impl SwitchRule {
    pub fn new(center: f64, interval: AmbiguityInterval) -> Self {
        SwitchRule { center, interval }
    }

    /// `-((μ̄+μ̲)/2)(1 - (m-1)/n) + c`
    pub fn threshold(&self, m: usize, n: usize) -> f64 {
        if self.center.is_infinite() {
            return self.center;
        }
        let d = self.interval.mu_lower + self.interval.mu_upper;
        -(d / 2.0) * (1.0 - (m as f64 - 1.0) / n as f64) + self.center
    }

    /// Mean used at step `m` given `M_{m-1,n}` (or `M̃_{m-1,n}`).
    pub fn select(&self, variant: Variant, m: usize, n: usize, previous: f64) -> f64 {
        let thr = self.threshold(m, n);
        let upper = match variant {
            Variant::M => previous <= thr,
            Variant::Tilde => previous >= thr,
        };
        if upper {
            self.interval.mu_upper
        } else {
            self.interval.mu_lower
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StatState {
    /// Number of observations absorbed so far.
    pub m: usize,
    pub n: usize,
    pub value: f64,
    pub variant: Variant,
}

impl StatState {
    pub fn new(n: usize, variant: Variant) -> Self {
        StatState { m: 0, n, value: 0.0, variant }
    }
}

/// `μ_{m+1}^n` for the state holding `M_{m,n}`.
pub fn step_mu(state: &StatState, rule: &SwitchRule) -> f64 {
    rule.select(Variant::M, state.m + 1, state.n, state.value)
}

/// `μ̃_{m+1}^n` for the state holding `M̃_{m,n}`.
pub fn step_mu_tilde(state: &StatState, rule: &SwitchRule) -> f64 {
    rule.select(Variant::Tilde, state.m + 1, state.n, state.value)
}

/// Absorbs one observation: `M_{m,n} = M_{m-1,n} + x/n + (x - μ_m^n)/(σ√n)`.
pub fn update_statistic(state: &StatState, x: f64, rule: &SwitchRule) -> Result<StatState> {
    if state.m >= state.n {
        return Err(Error::HorizonExceeded { m: state.m + 1, n: state.n });
    }
    let mu = rule.select(state.variant, state.m + 1, state.n, state.value);
    let n = state.n as f64;
    let value = state.value + x / n + (x - mu) / (rule.interval.sigma * n.sqrt());
    Ok(StatState { m: state.m + 1, value, ..*state })
}

/// `M_{n,n}` (or `M̃_{n,n}`) for the observations `xs`.
pub fn path_statistic(xs: &[f64], n: usize, rule: &SwitchRule, variant: Variant) -> Result<f64> {
    Ok(path_trace(xs, n, rule, variant)?.last().map_or(0.0, |row| row.value))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub m: usize,
    pub mu_m: f64,
    #[serde(rename = "M_m")]
    pub value: f64,
}

/// Every intermediate `(m, μ_m, M_m)` along the path.
pub fn path_trace(xs: &[f64], n: usize, rule: &SwitchRule, variant: Variant) -> Result<Vec<TraceRow>> {
    if xs.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: xs.len() });
    }
    let mut state = StatState::new(n, variant);
    let mut rows = Vec::with_capacity(n);
    for &x in xs {
        let mu = rule.select(variant, state.m + 1, n, state.value);
        state = update_statistic(&state, x, rule)?;
        rows.push(TraceRow { m: state.m, mu_m: mu, value: state.value });
    }
    Ok(rows)
}

/// Symmetry center in exact arithmetic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExactCenter {
    NegInf,
    Finite(Rational),
    PosInf,
}

impl ExactCenter {
    pub fn from_f64(c: f64) -> Result<Self> {
        Ok(if c == f64::INFINITY {
            ExactCenter::PosInf
        } else if c == f64::NEG_INFINITY {
            ExactCenter::NegInf
        } else {
            ExactCenter::Finite(rationalize(c, "center")?)
        })
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            ExactCenter::NegInf => f64::NEG_INFINITY,
            ExactCenter::Finite(r) => to_f64(r),
            ExactCenter::PosInf => f64::INFINITY,
        }
    }
}

/// Exact switching rule over rational means.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactSwitchRule {
    pub center: ExactCenter,
    pub interval: ExactInterval,
}

impl ExactSwitchRule {
    /// Finite threshold at step `m`, or `None` for an infinite center.
    pub fn threshold(&self, m: usize, n: usize) -> Option<Rational> {
        let ExactCenter::Finite(c) = &self.center else {
            return None;
        };
        let d = &self.interval.mu_lower + &self.interval.mu_upper;
        let frac = Rational::new((n as i64 - m as i64 + 1).into(), (n as i64).into());
        Some(-(d / Rational::from_integer(2.into())) * frac + c)
    }

    /// Upper-mean selection given how the previous statistic compares to the threshold.
    pub fn pick_upper(&self, variant: Variant, m: usize, n: usize, cmp: impl FnOnce(&Rational) -> Ordering) -> bool {
        match (&self.center, variant) {
            (ExactCenter::PosInf, Variant::M) | (ExactCenter::NegInf, Variant::Tilde) => true,
            (ExactCenter::NegInf, Variant::M) | (ExactCenter::PosInf, Variant::Tilde) => false,
            _ => {
                let thr = self.threshold(m, n).expect("finite center");
                match variant {
                    Variant::M => cmp(&thr) != Ordering::Greater,
                    Variant::Tilde => cmp(&thr) != Ordering::Less,
                }
            }
        }
    }

    pub fn select(&self, variant: Variant, m: usize, n: usize, cmp: impl FnOnce(&Rational) -> Ordering) -> Rational {
        if self.pick_upper(variant, m, n, cmp) {
            self.interval.mu_upper.clone()
        } else {
            self.interval.mu_lower.clone()
        }
    }
}

/// Exact statistic `M = u + v/(σ√n)` with rational `u`, `v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactStatState {
    pub m: usize,
    pub n: usize,
    pub u: Rational,
    pub v: Rational,
    pub variant: Variant,
}

impl ExactStatState {
    pub fn new(n: usize, variant: Variant) -> Self {
        ExactStatState { m: 0, n, u: Rational::zero(), v: Rational::zero(), variant }
    }

    pub fn point(&self, sigma_sq: &Rational) -> SurdPoint {
        SurdPoint {
            rational: self.u.clone(),
            coeff: self.v.clone(),
            radicand: (sigma_sq * Rational::from_integer((self.n as i64).into())).recip(),
        }
    }

    pub fn cmp_rational(&self, sigma_sq: &Rational, r: &Rational) -> Ordering {
        let p = self.point(sigma_sq);
        surd_sign(&(&p.rational - r), &p.coeff, &p.radicand)
    }

    pub fn update(&self, x: &Rational, rule: &ExactSwitchRule) -> Result<Self> {
        if self.m >= self.n {
            return Err(Error::HorizonExceeded { m: self.m + 1, n: self.n });
        }
        let sigma_sq = &rule.interval.sigma_sq;
        let mu = rule.select(self.variant, self.m + 1, self.n, |r| self.cmp_rational(sigma_sq, r));
        let n = Rational::from_integer((self.n as i64).into());
        Ok(ExactStatState { m: self.m + 1, n: self.n, u: &self.u + x / n, v: &self.v + x - mu, variant: self.variant })
    }

    pub fn to_f64(&self, sigma_sq: &Rational) -> f64 {
        self.point(sigma_sq).to_f64()
    }
}

/// Reads one observation per row from the first column; a non-numeric first row is a header.
pub fn read_path_csv<R: Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record?;
        let Some(field) = record.get(0) else { continue };
        let field = field.trim();
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            _ if i == 0 => continue,
            _ => return Err(Error::Parse(format!("row {}: not a finite number: {field:?}", i + 1))),
        }
    }
    Ok(out)
}

pub fn write_trace_csv<W: Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

//! Exact rational helpers.
//!
//! Statistic values have the form `r + s·√d` with `r`, `s`, `d` rational, so
//! comparisons against rational thresholds can be decided exactly by sign
//! analysis and squaring.

use std::cmp::Ordering;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

pub type Rational = BigRational;

/// Parses `"a/b"`, integers, and decimals (optionally with exponent) exactly.
pub fn parse_rational(text: &str) -> Result<Rational> {
    let s = text.trim();
    if s.is_empty() {
        return Err(Error::Parse("empty number".into()));
    }
    if let Some((num, den)) = s.split_once('/') {
        let num = parse_rational(num)?;
        let den = parse_rational(den)?;
        if den.is_zero() {
            return Err(Error::Parse(format!("zero denominator in {s:?}")));
        }
        return Ok(num / den);
    }
    let (mantissa, exponent) = match s.find(['e', 'E']) {
        Some(pos) => {
            let exp: i32 = s[pos + 1..].parse().map_err(|_| Error::Parse(format!("bad exponent in {s:?}")))?;
            (&s[..pos], exp)
        }
        None => (s, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(Error::Parse(format!("not a number: {s:?}")));
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Parse(format!("not a number: {s:?}")));
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if all_digits.is_empty() {
        BigInt::zero()
    } else {
        all_digits.parse().map_err(|_| Error::Parse(format!("not a number: {s:?}")))?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = Rational::from_integer(numer);
    if scale >= 0 {
        value *= Rational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= Rational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if negative { -value } else { value })
}

/// Converts a finite float to a rational, preferring the simplest fraction
/// within a few ulps (so `0.6` becomes `3/5`). Falls back to the exact dyadic
/// value when no short fraction is that close.
pub fn rational_from_f64(x: f64) -> Option<Rational> {
    let exact = Rational::from_float(x)?;
    if exact.is_integer() {
        return Some(exact);
    }
    let tol = Rational::from_float(x.abs().max(f64::MIN_POSITIVE) * 4.0 * f64::EPSILON)?;
    let limit = BigInt::from(1_000_000_000_000i64);
    // Continued-fraction convergents of the exact value.
    let (mut h_prev, mut h) = (BigInt::zero(), BigInt::one());
    let (mut k_prev, mut k) = (BigInt::one(), BigInt::zero());
    let mut rest = exact.clone();
    loop {
        let a = rest.floor().to_integer();
        let h_next = &a * &h + &h_prev;
        let k_next = &a * &k + &k_prev;
        if k_next > limit {
            return Some(exact);
        }
        let candidate = Rational::new(h_next.clone(), k_next.clone());
        if (&candidate - &exact).abs() <= tol {
            return Some(candidate);
        }
        let frac = &rest - Rational::from_integer(a);
        if frac.is_zero() {
            return Some(exact);
        }
        rest = frac.recip();
        h_prev = std::mem::replace(&mut h, h_next);
        k_prev = std::mem::replace(&mut k, k_next);
    }
}

/// Like [`rational_from_f64`] but reports non-finite inputs as errors.
pub fn rationalize(x: f64, what: &str) -> Result<Rational> {
    rational_from_f64(x).ok_or_else(|| Error::BadParameters(format!("{what} must be finite, got {x}")))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| if r.is_positive() { f64::INFINITY } else { f64::NEG_INFINITY })
}

fn ordering_of<T: Signed>(x: &T) -> Ordering {
    if x.is_positive() {
        Ordering::Greater
    } else if x.is_negative() {
        Ordering::Less
    } else {
        Ordering::Equal
    }
}

/// Exact sign of `a + b·√d` for `d ≥ 0`.
pub fn surd_sign(a: &Rational, b: &Rational, d: &Rational) -> Ordering {
    let sa = ordering_of(a);
    let sb = if d.is_zero() { Ordering::Equal } else { ordering_of(b) };
    combine_signs(sa, sb, || {
        let lhs = a * a;
        let rhs = b * b * d;
        lhs.cmp(&rhs)
    })
}

fn combine_signs(sa: Ordering, sb: Ordering, magnitude: impl FnOnce() -> Ordering) -> Ordering {
    match (sa, sb) {
        (_, Ordering::Equal) => sa,
        (Ordering::Equal, _) => sb,
        _ if sa == sb => sa,
        // Opposite signs: the larger magnitude wins.
        _ => match magnitude() {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        },
    }
}

/// Exact sign of `a + b·√(p/q)` for integers with `p ≥ 0`, `q > 0`.
///
/// Uses `i128` arithmetic and falls back to big integers on overflow.
pub fn int_surd_sign(a: i128, b: i128, p: i128, q: i128) -> Ordering {
    let sa = a.cmp(&0);
    let sb = if p == 0 { Ordering::Equal } else { b.cmp(&0) };
    combine_signs(sa, sb, || {
        // a² q  vs  b² p
        let fast =
            a.checked_mul(a).and_then(|a2| a2.checked_mul(q)).zip(b.checked_mul(b).and_then(|b2| b2.checked_mul(p)));
        match fast {
            Some((lhs, rhs)) => lhs.cmp(&rhs),
            None => {
                let (a, b, p, q) = (BigInt::from(a), BigInt::from(b), BigInt::from(p), BigInt::from(q));
                (&a * &a * q).cmp(&(&b * &b * p))
            }
        }
    })
}

/// Least common multiple of the denominators of `values`.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values.into_iter().fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// A number of the form `rational + coeff·√radicand`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SurdPoint {
    pub rational: Rational,
    pub coeff: Rational,
    pub radicand: Rational,
}

impl SurdPoint {
    pub fn rational(r: Rational) -> Self {
        SurdPoint { rational: r, coeff: Rational::zero(), radicand: Rational::zero() }
    }

    /// Exact comparison with a rational.
    pub fn cmp_rational(&self, r: &Rational) -> Ordering {
        surd_sign(&(&self.rational - r), &self.coeff, &self.radicand)
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.rational) + to_f64(&self.coeff) * to_f64(&self.radicand).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_rational("0.6").unwrap(), q(3, 5));
        assert_eq!(parse_rational("-3/10").unwrap(), q(-3, 10));
        assert_eq!(parse_rational("1.5e-1").unwrap(), q(3, 20));
        assert_eq!(parse_rational("  7 ").unwrap(), q(7, 1));
        assert_eq!(parse_rational(".25").unwrap(), q(1, 4));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("").is_err());
    }

    #[test]
    fn floats_recover_short_fractions() {
        assert_eq!(rational_from_f64(0.6).unwrap(), q(3, 5));
        assert_eq!(rational_from_f64(-0.3).unwrap(), q(-3, 10));
        assert_eq!(rational_from_f64(0.81).unwrap(), q(81, 100));
        assert_eq!(rational_from_f64(2.0).unwrap(), q(2, 1));
        let third = rational_from_f64(1.0 / 3.0).unwrap();
        assert_eq!(third, q(1, 3));
        assert!(rational_from_f64(f64::NAN).is_none());
        // an irrational float lands within a few ulps
        let pi = std::f64::consts::PI;
        let r = rational_from_f64(pi).unwrap();
        assert!((to_f64(&r) - pi).abs() <= 4.0 * f64::EPSILON * pi);
    }

    #[test]
    fn surd_signs() {
        // 1 - √2 < 0
        assert_eq!(surd_sign(&q(1, 1), &q(-1, 1), &q(2, 1)), Ordering::Less);
        // 3/2 - √2 > 0
        assert_eq!(surd_sign(&q(3, 2), &q(-1, 1), &q(2, 1)), Ordering::Greater);
        // 2 - √4 = 0
        assert_eq!(surd_sign(&q(2, 1), &q(-1, 1), &q(4, 1)), Ordering::Equal);
        assert_eq!(int_surd_sign(2, -1, 4, 1), Ordering::Equal);
        assert_eq!(int_surd_sign(-3, 2, 9, 4), Ordering::Equal);
        assert_eq!(int_surd_sign(i128::MAX / 2, -1, 3, 1), Ordering::Greater);
        assert_eq!(int_surd_sign(0, 0, 3, 1), Ordering::Equal);
    }
}

//! The one-step ambiguity model: a finite set `L` of equivalent discrete laws
//! on a common outcome space, all with the same variance.

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{self, Rational};

/// Default tolerance on the spread of per-law variances.
pub const DEFAULT_TOL_VAR: f64 = 1e-9;

const PROB_SUM_TOL: f64 = 1e-12;

/// A discrete law on a finite list of outcomes. Stored exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    values: Vec<Rational>,
    probs: Vec<Rational>,
}

impl DiscreteMeasure {
    /// Builds a law from exact values and probabilities. Probabilities that
    /// sum to one within `1e-12` are renormalized exactly.
    pub fn new(values: Vec<Rational>, probs: Vec<Rational>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidMeasure("a law needs at least one outcome".into()));
        }
        if values.len() != probs.len() {
            return Err(Error::InvalidMeasure(format!("{} values but {} probabilities", values.len(), probs.len())));
        }
        if probs.iter().any(|p| p.is_negative()) {
            return Err(Error::InvalidMeasure("negative probability".into()));
        }
        let total: Rational = probs.iter().sum();
        if (exact::to_f64(&total) - 1.0).abs() > PROB_SUM_TOL {
            return Err(Error::InvalidMeasure(format!("probabilities sum to {}", exact::to_f64(&total))));
        }
        let probs = if total.is_one() { probs } else { probs.into_iter().map(|p| p / &total).collect() };
        Ok(DiscreteMeasure { values, probs })
    }

    pub fn from_f64(values: &[f64], probs: &[f64]) -> Result<Self> {
        let conv = |xs: &[f64], what: &str| -> Result<Vec<Rational>> {
            xs.iter().map(|&x| exact::rationalize(x, what)).collect()
        };
        Self::new(conv(values, "outcome")?, conv(probs, "probability")?)
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn probs(&self) -> &[Rational] {
        &self.probs
    }

    pub fn values_f64(&self) -> Vec<f64> {
        self.values.iter().map(exact::to_f64).collect()
    }

    pub fn probs_f64(&self) -> Vec<f64> {
        self.probs.iter().map(exact::to_f64).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> Rational {
        self.values.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    pub fn variance(&self) -> Rational {
        let mean = self.mean();
        self.values
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| {
                let d = x - &mean;
                &d * &d * p
            })
            .sum()
    }

    fn shifted(&self, t: &Rational) -> Self {
        DiscreteMeasure { values: self.values.iter().map(|x| x + t).collect(), probs: self.probs.clone() }
    }

    /// Reorders outcomes to follow `order`, failing if the supports differ.
    fn aligned_to(&self, order: &[Rational]) -> Result<Self> {
        if order.len() != self.values.len() {
            return Err(Error::SupportMismatch(format!("{} outcomes vs {}", self.values.len(), order.len())));
        }
        let mut probs = Vec::with_capacity(order.len());
        for v in order {
            let pos = self
                .values
                .iter()
                .position(|x| x == v)
                .ok_or_else(|| Error::SupportMismatch(format!("outcome {} missing", exact::to_f64(v))))?;
            probs.push(self.probs[pos].clone());
        }
        Ok(DiscreteMeasure { values: order.to_vec(), probs })
    }
}

/// Mean interval and unambiguous standard deviation of a measure set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmbiguityInterval {
    pub mu_lower: f64,
    pub mu_upper: f64,
    pub sigma: f64,
}

impl AmbiguityInterval {
    pub fn new(mu_lower: f64, mu_upper: f64, sigma: f64) -> Result<Self> {
        if !(mu_lower.is_finite() && mu_upper.is_finite()) || mu_lower > mu_upper {
            return Err(Error::BadParameters(format!("mean interval [{mu_lower}, {mu_upper}] is not ordered")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::DegenerateSigma);
        }
        Ok(AmbiguityInterval { mu_lower, mu_upper, sigma })
    }

    /// Mean interval `[-kappa, kappa]` with unit sigma.
    pub fn symmetric(kappa: f64) -> Result<Self> {
        Self::new(-kappa, kappa, 1.0)
    }

    /// Half-width `(mu_upper - mu_lower) / 2`.
    pub fn kappa(&self) -> f64 {
        0.5 * (self.mu_upper - self.mu_lower)
    }

    /// Midpoint `(mu_upper + mu_lower) / 2`.
    pub fn center(&self) -> f64 {
        0.5 * (self.mu_upper + self.mu_lower)
    }
}

/// Exact counterpart of [`AmbiguityInterval`]; sigma is kept squared so it
/// stays rational.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactInterval {
    pub mu_lower: Rational,
    pub mu_upper: Rational,
    pub sigma_sq: Rational,
}

/// A nonempty set of mutually equivalent laws on the same outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSet {
    laws: Vec<DiscreteMeasure>,
}

impl MeasureSet {
    pub fn new(laws: Vec<DiscreteMeasure>) -> Result<Self> {
        let first = laws.first().ok_or_else(|| Error::InvalidMeasure("measure set is empty".into()))?;
        let order = first.values.clone();
        for (i, v) in order.iter().enumerate() {
            if order[..i].contains(v) {
                return Err(Error::InvalidMeasure(format!("duplicate outcome {}", exact::to_f64(v))));
            }
        }
        let laws = laws.iter().map(|law| law.aligned_to(&order)).collect::<Result<Vec<_>>>()?;
        if laws.iter().flat_map(|l| &l.probs).any(|p| !p.is_positive()) {
            return Err(Error::InvalidMeasure(
                "laws must be equivalent: every outcome needs positive probability".into(),
            ));
        }
        Ok(MeasureSet { laws })
    }

    pub fn singleton(law: DiscreteMeasure) -> Result<Self> {
        Self::new(vec![law])
    }

    pub fn laws(&self) -> &[DiscreteMeasure] {
        &self.laws
    }

    pub fn len(&self) -> usize {
        self.laws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.laws.is_empty()
    }

    /// The common outcome list.
    pub fn values(&self) -> &[Rational] {
        &self.laws[0].values
    }

    pub fn means(&self) -> Vec<Rational> {
        self.laws.iter().map(DiscreteMeasure::mean).collect()
    }

    /// Checks the common-variance assumption and returns the exact interval.
    /// The common variance is taken from the first law.
    pub fn exact_interval(&self, tol_var: f64) -> Result<ExactInterval> {
        let variances: Vec<Rational> = self.laws.iter().map(DiscreteMeasure::variance).collect();
        let lo = variances.iter().min().expect("nonempty");
        let hi = variances.iter().max().expect("nonempty");
        let spread = exact::to_f64(&(hi - lo));
        if spread > tol_var {
            return Err(Error::VarianceAmbiguous { spread, tol: tol_var });
        }
        let sigma_sq = variances[0].clone();
        if sigma_sq.is_zero() {
            return Err(Error::DegenerateSigma);
        }
        let means = self.means();
        Ok(ExactInterval {
            mu_lower: means.iter().min().expect("nonempty").clone(),
            mu_upper: means.iter().max().expect("nonempty").clone(),
            sigma_sq,
        })
    }

    /// Index of the first law attaining the largest mean.
    pub fn argmax_mean(&self) -> usize {
        let means = self.means();
        let mut best = 0;
        for (i, m) in means.iter().enumerate() {
            if *m > means[best] {
                best = i;
            }
        }
        best
    }

    /// Index of the first law attaining the smallest mean.
    pub fn argmin_mean(&self) -> usize {
        let means = self.means();
        let mut best = 0;
        for (i, m) in means.iter().enumerate() {
            if *m < means[best] {
                best = i;
            }
        }
        best
    }

    /// Adds `t` to every outcome.
    pub fn shifted(&self, t: &Rational) -> MeasureSet {
        MeasureSet { laws: self.laws.iter().map(|l| l.shifted(t)).collect() }
    }

    /// Parses a TOML document containing a `laws` array (optionally nested
    /// under `[measure_set]`).
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        let value = toml::Value::Table(doc);
        match value.get("measure_set") {
            Some(inner) => Self::from_toml_value(inner),
            None => Self::from_toml_value(&value),
        }
    }

    /// Reads `laws = [ [[value, prob], ...], ... ]`. Numbers may be TOML
    /// integers, floats, or strings such as `"3/10"` or `"0.3"`.
    pub fn from_toml_value(value: &toml::Value) -> Result<Self> {
        let laws = value
            .get("laws")
            .and_then(toml::Value::as_array)
            .ok_or_else(|| Error::Config("measure set needs a `laws` array".into()))?;
        let mut parsed = Vec::with_capacity(laws.len());
        for (i, law) in laws.iter().enumerate() {
            let pairs = law.as_array().ok_or_else(|| Error::Config(format!("law {i} is not an array of pairs")))?;
            let mut values = Vec::with_capacity(pairs.len());
            let mut probs = Vec::with_capacity(pairs.len());
            for pair in pairs {
                match pair.as_array().map(Vec::as_slice) {
                    Some([v, p]) => {
                        values.push(toml_number(v)?);
                        probs.push(toml_number(p)?);
                    }
                    _ => return Err(Error::Config(format!("law {i}: expected [value, prob] pairs"))),
                }
            }
            parsed.push(DiscreteMeasure::new(values, probs)?);
        }
        MeasureSet::new(parsed)
    }
}

fn toml_number(v: &toml::Value) -> Result<Rational> {
    match v {
        toml::Value::Integer(i) => Ok(Rational::from_integer((*i).into())),
        toml::Value::Float(f) => exact::rationalize(*f, "number"),
        toml::Value::String(s) => exact::parse_rational(s),
        other => Err(Error::Config(format!("expected a number, got {other}"))),
    }
}

/// Validates `L` and returns `(min mean, max mean, sigma)`.
pub fn validate_measure_set(set: &MeasureSet, tol_var: f64) -> Result<AmbiguityInterval> {
    let exact = set.exact_interval(tol_var)?;
    AmbiguityInterval::new(
        exact::to_f64(&exact.mu_lower),
        exact::to_f64(&exact.mu_upper),
        exact::to_f64(&exact.sigma_sq).sqrt(),
    )
}

/// Three-outcome coin on `(1, -1, 0)` with laws `(p, q, 1-p-q)` and
/// `(q, p, 1-p-q)`. Mean ambiguity `p - q`, variance `p + q - (p - q)²`.
pub fn coin_example(p: f64, q: f64) -> Result<MeasureSet> {
    let p = exact::rationalize(p, "p")?;
    let q = exact::rationalize(q, "q")?;
    coin_example_exact(p, q)
}

pub fn coin_example_exact(p: Rational, q: Rational) -> Result<MeasureSet> {
    let zero = Rational::zero();
    let one = Rational::one();
    if !(zero < q && q < p && &p + &q <= one) {
        return Err(Error::BadParameters(format!(
            "coin example needs 0 < q < p and p + q <= 1 (p = {}, q = {})",
            exact::to_f64(&p),
            exact::to_f64(&q)
        )));
    }
    let rest = &one - &p - &q;
    let values = vec![one.clone(), -one.clone(), zero.clone()];
    let (values, favorable, unfavorable) = if rest.is_zero() {
        // Outcome 0 would carry no mass; drop it so the laws stay equivalent.
        (values[..2].to_vec(), vec![p.clone(), q.clone()], vec![q, p])
    } else {
        (values, vec![p.clone(), q.clone(), rest.clone()], vec![q, p, rest])
    };
    MeasureSet::new(vec![DiscreteMeasure::new(values.clone(), favorable)?, DiscreteMeasure::new(values, unfavorable)?])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    #[test]
    fn coin_interval_matches_parametrization() {
        let set = coin_example(0.6, 0.3).unwrap();
        let iv = validate_measure_set(&set, DEFAULT_TOL_VAR).unwrap();
        assert_abs_diff_eq!(iv.mu_lower, -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(iv.mu_upper, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(iv.sigma, 0.9, epsilon = 1e-15);
        let exact = set.exact_interval(1e-12).unwrap();
        assert_eq!(exact.sigma_sq, r(81, 100));
        assert_eq!(set.laws()[0].probs_f64(), vec![0.6, 0.3, 0.1]);
        assert_eq!(set.laws()[1].probs_f64(), vec![0.3, 0.6, 0.1]);
    }

    #[test]
    fn coin_quarter_case() {
        let set = coin_example(0.5, 0.25).unwrap();
        let exact = set.exact_interval(1e-12).unwrap();
        assert_eq!(exact.mu_upper, r(1, 4));
        assert_eq!(exact.sigma_sq, r(11, 16)); // 0.6875
    }

    #[test]
    fn coin_rejects_bad_orderings() {
        assert!(matches!(coin_example(0.5, 0.5), Err(Error::BadParameters(_))));
        assert!(matches!(coin_example(0.8, 0.3), Err(Error::BadParameters(_))));
        assert!(matches!(coin_example(0.3, 0.0), Err(Error::BadParameters(_))));
    }

    #[test]
    fn fair_coin_singleton() {
        let law = DiscreteMeasure::from_f64(&[1.0, -1.0], &[0.5, 0.5]).unwrap();
        let iv = validate_measure_set(&MeasureSet::singleton(law).unwrap(), DEFAULT_TOL_VAR).unwrap();
        assert_eq!((iv.mu_lower, iv.mu_upper, iv.sigma), (0.0, 0.0, 1.0));
    }

    #[test]
    fn ambiguous_variance_rejected() {
        // variance 0.81 vs 0.80
        let a = DiscreteMeasure::from_f64(&[0.9, -0.9], &[0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::new(vec![r(9, 10), r(-9, 10)], vec![r(1, 2) + r(1, 18) * r(1, 1), r(1, 2) - r(1, 18)])
            .unwrap();
        let set = MeasureSet::new(vec![a, b]).unwrap();
        assert_abs_diff_eq!(exact::to_f64(&set.laws()[1].variance()), 0.80, epsilon = 1e-12);
        assert!(matches!(validate_measure_set(&set, 1e-9), Err(Error::VarianceAmbiguous { .. })));
    }

    #[test]
    fn support_mismatch_and_structure() {
        let a = DiscreteMeasure::from_f64(&[1.0, -1.0], &[0.5, 0.5]).unwrap();
        let b = DiscreteMeasure::from_f64(&[2.0, -1.0], &[0.5, 0.5]).unwrap();
        assert!(matches!(MeasureSet::new(vec![a.clone(), b]), Err(Error::SupportMismatch(_))));
        assert!(matches!(MeasureSet::new(vec![]), Err(Error::InvalidMeasure(_))));
        assert!(DiscreteMeasure::from_f64(&[1.0], &[0.5]).is_err());
        assert!(DiscreteMeasure::from_f64(&[1.0, 2.0], &[1.0]).is_err());
        // a zero-probability outcome breaks equivalence
        let c = DiscreteMeasure::from_f64(&[1.0, -1.0], &[1.0, 0.0]).unwrap();
        assert!(MeasureSet::new(vec![a, c]).is_err());
    }

    #[test]
    fn degenerate_sigma() {
        let law = DiscreteMeasure::from_f64(&[2.0], &[1.0]).unwrap();
        let set = MeasureSet::singleton(law).unwrap();
        assert!(matches!(validate_measure_set(&set, 1e-9), Err(Error::DegenerateSigma)));
    }

    #[test]
    fn outcome_order_is_normalized() {
        let a = DiscreteMeasure::from_f64(&[1.0, -1.0, 0.0], &[0.6, 0.3, 0.1]).unwrap();
        let b = DiscreteMeasure::from_f64(&[0.0, 1.0, -1.0], &[0.1, 0.3, 0.6]).unwrap();
        let set = MeasureSet::new(vec![a, b]).unwrap();
        assert_eq!(set.laws()[1].probs_f64(), vec![0.3, 0.6, 0.1]);
    }

    #[test]
    fn toml_loading_accepts_fractions_and_decimals() {
        let text = r#"
            [measure_set]
            laws = [
              [[1, "0.6"], [-1, "3/10"], [0, 0.1]],
              [[1, 0.3], [-1, "0.6"], [0, "1/10"]],
            ]
        "#;
        let set = MeasureSet::from_toml_str(text).unwrap();
        assert_eq!(set, coin_example(0.6, 0.3).unwrap());
        assert!(MeasureSet::from_toml_str("laws = 3").is_err());
        assert!(MeasureSet::from_toml_str("laws = [[[1]]]").is_err());
    }

    proptest! {
        #[test]
        fn coin_always_validates(p_num in 2u32..100, q_frac in 0.01f64..0.99) {
            let p = p_num as f64 / 100.0;
            let q = ((p * q_frac * 100.0).floor() / 100.0).max(0.01);
            prop_assume!(q < p && p + q <= 1.0);
            let set = coin_example(p, q).unwrap();
            let iv = validate_measure_set(&set, 1e-12).unwrap();
            prop_assert!((iv.mu_upper - (p - q)).abs() < 1e-12);
            prop_assert!((iv.sigma.powi(2) - (p + q - (p - q).powi(2))).abs() < 1e-12);
            for m in set.means() {
                let m = exact::to_f64(&m);
                prop_assert!(iv.mu_lower <= m && m <= iv.mu_upper);
            }
        }

        #[test]
        fn shifting_moves_means_only(t_num in -50i64..50, p_num in 2u32..66) {
            let p = p_num as f64 / 100.0;
            let set = coin_example(p, p / 2.0).unwrap();
            let t = r(t_num, 7);
            let base = set.exact_interval(1e-12).unwrap();
            let moved = set.shifted(&t).exact_interval(1e-12).unwrap();
            prop_assert_eq!(&moved.mu_lower, &(&base.mu_lower + &t));
            prop_assert_eq!(&moved.mu_upper, &(&base.mu_upper + &t));
            prop_assert_eq!(moved.sigma_sq, base.sigma_sq);
        }
    }
}

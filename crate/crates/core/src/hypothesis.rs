//! Robust tests for a location parameter under mean ambiguity of the errors.
//!
//! Observations are `X_i = θ + Y_i` where the errors `Y_i` have means in
//! `[-κ, κ]` and standard deviation `σ`. The test accepts `θ₀` when the
//! interval `[M_n - b, M_n - a]` meets the null set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{one_sided_limit, upper_indicator_limit, Side, Tail};
use crate::error::{Error, Result};
use crate::measures::{AmbiguityInterval, DiscreteMeasure, MeasureSet, DEFAULT_TOL_VAR};
use crate::statistics::{path_statistic, update_statistic, StatState, SwitchRule, Variant};
use crate::worst_case::DriftPolicy;

/// Target for the calibration residual `|coverage - (1 - α)|`.
pub const CALIBRATION_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    pub kappa: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub theta0: f64,
    pub xi: f64,
}

impl TestSpec {
    pub fn new(kappa: f64, sigma: f64, alpha: f64, theta0: f64, xi: f64) -> Result<Self> {
        let spec = TestSpec { kappa, sigma, alpha, theta0, xi };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::BadParameters(format!("kappa must be finite and >= 0, got {}", self.kappa)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::DegenerateSigma);
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::BadParameters(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.theta0.is_finite() && self.xi.is_finite()) {
            return Err(Error::BadParameters("theta0 and xi must be finite".into()));
        }
        Ok(())
    }

    /// Limit drift interval `[-κ, κ]` of the normalized statistic.
    pub fn limit_interval(&self) -> Result<AmbiguityInterval> {
        AmbiguityInterval::symmetric(self.kappa)
    }

    /// Error-mean interval `[-κ, κ]` with the error standard deviation.
    pub fn error_interval(&self) -> Result<AmbiguityInterval> {
        AmbiguityInterval::new(-self.kappa, self.kappa, self.sigma)
    }

    fn bracket(&self) -> f64 {
        20.0 + 10.0 * self.kappa
    }
}

/// How the acceptance interval is pinned down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// `a = -b`.
    Symmetric,
    /// `a` fixed, `b` solved.
    GivenLower(f64),
}

/// Upper limiting coverage `ℰ_[-κ,κ][I_[a,b](B₁)]`.
pub fn coverage(spec: &TestSpec, a: f64, b: f64) -> Result<f64> {
    upper_indicator_limit(&spec.limit_interval()?, a, b)
}

/// Bisection for an increasing `f` on `[lo, hi]` with `f(lo) < target <= f(hi)`.
fn bisect(f: impl Fn(f64) -> Result<f64>, target: f64, mut lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // both ends are within one ulp; take whichever is closer
    let (fl, fh) = (f(lo)?, f(hi)?);
    Ok(if (fl - target).abs() < (fh - target).abs() { lo } else { hi })
}

/// Solves `coverage(a, b) = 1 - α`.
pub fn calibrate_interval(spec: &TestSpec, mode: Calibration) -> Result<(f64, f64)> {
    spec.validate()?;
    let target = 1.0 - spec.alpha;
    let (a, b) = match mode {
        Calibration::Symmetric => {
            let hi = spec.bracket();
            if coverage(spec, -hi, hi)? < target {
                return Err(Error::Infeasible(format!("coverage {target} needs |b| > {hi}")));
            }
            let b = bisect(|b| if b <= 0.0 { Ok(0.0) } else { coverage(spec, -b, b) }, target, 0.0, hi)?;
            (-b, b)
        }
        Calibration::GivenLower(a) => {
            if !a.is_finite() {
                return Err(Error::BadParameters(format!("lower endpoint must be finite, got {a}")));
            }
            let hi = a.max(0.0) + spec.bracket();
            if coverage(spec, a, hi)? < target {
                return Err(Error::Infeasible(format!("coverage {target} unattainable with a = {a}")));
            }
            let b = bisect(|b| if b <= a { Ok(0.0) } else { coverage(spec, a, b) }, target, a, hi)?;
            (a, b)
        }
    };
    let residual = (coverage(spec, a, b)? - target).abs();
    if residual > CALIBRATION_TOL {
        return Err(Error::NoConvergence(format!("calibration residual {residual:e}")));
    }
    Ok((a, b))
}

/// Upper limiting probability of accepting `θ₀` when the truth is `θ₀ + ξ`.
pub fn wrong_acceptance(spec: &TestSpec, a: f64, b: f64, xi: f64) -> Result<f64> {
    if !(a < b) {
        return Err(Error::BadInterval { a, b });
    }
    coverage(spec, a - xi, b - xi)
}

/// `(ξ, wrong_acceptance)` for each offset.
pub fn power_curve(spec: &TestSpec, a: f64, b: f64, xis: &[f64]) -> Result<Vec<(f64, f64)>> {
    xis.iter().map(|&xi| Ok((xi, wrong_acceptance(spec, a, b, xi)?))).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OptimalInterval {
    pub a: f64,
    pub b: f64,
    pub objective: f64,
    pub coverage: f64,
    /// Shrinking `b` at the optimum lowers the objective, so the coverage
    /// constraint is active there.
    pub constraint_binds: bool,
}

/// Largest `a` for which `1 - α` coverage is still reachable (`b → ∞`).
fn lower_endpoint_sup(spec: &TestSpec) -> Result<f64> {
    let iv = spec.limit_interval()?;
    let target = 1.0 - spec.alpha;
    let tail = |a: f64| Ok(-one_sided_limit(&iv, a, Tail::Right, Side::Upper));
    let r = spec.bracket();
    bisect(tail, -target, -r, r)
}

/// Minimizes `wrong_acceptance(a, b(a), ξ)` over `a`, with `b(a)` the
/// calibrated upper endpoint.
pub fn optimize_ab(spec: &TestSpec, xi: f64) -> Result<OptimalInterval> {
    spec.validate()?;
    if xi == 0.0 || !xi.is_finite() {
        return Err(Error::BadParameters(format!("xi must be finite and nonzero, got {xi}")));
    }
    let a_lo = -spec.bracket();
    // b(a) blows up at the supremum; stay clear of it
    let a_hi = lower_endpoint_sup(spec)? - 1e-3;
    if a_hi <= a_lo {
        return Err(Error::Infeasible("no admissible lower endpoint".into()));
    }
    let objective = |a: f64| -> Result<f64> {
        let (_, b) = calibrate_interval(spec, Calibration::GivenLower(a))?;
        wrong_acceptance(spec, a, b, xi)
    };

    const GRID: usize = 400;
    let step = (a_hi - a_lo) / GRID as f64;
    let mut best = (a_lo, f64::INFINITY);
    for i in 0..=GRID {
        let a = a_lo + step * i as f64;
        let v = objective(a)?;
        if v < best.1 {
            best = (a, v);
        }
    }

    // golden-section refinement in the neighbouring cells
    let (mut lo, mut hi) = ((best.0 - step).max(a_lo), (best.0 + step).min(a_hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (objective(x1)?, objective(x2)?);
    let mut iters = 0;
    while hi - lo > 1e-6 {
        iters += 1;
        if iters > 200 {
            return Err(Error::NoConvergence("interval optimization did not settle".into()));
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = objective(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = objective(x2)?;
        }
    }
    let mut a = 0.5 * (lo + hi);
    let mut obj = objective(a)?;
    if best.1 < obj {
        a = best.0;
        obj = best.1;
    }
    let (_, b) = calibrate_interval(spec, Calibration::GivenLower(a))?;
    let shrunk = wrong_acceptance(spec, a, b - 1e-4 * (b - a), xi)?;
    Ok(OptimalInterval { a, b, objective: obj, coverage: coverage(spec, a, b)?, constraint_binds: shrunk < obj })
}

/// Null set for the parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Theta {
    Point { value: f64 },
    Interval { lo: f64, hi: f64 },
    Finite { values: Vec<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// Accepts iff `[M_n - b, M_n - a]` meets `Θ`.
pub fn test_decision(m_n: f64, a: f64, b: f64, theta: &Theta) -> Result<Decision> {
    if !(a < b) {
        return Err(Error::BadInterval { a, b });
    }
    let (lo, hi) = (m_n - b, m_n - a);
    let hit = |t: f64| lo <= t && t <= hi;
    let accept = match theta {
        Theta::Point { value } => hit(*value),
        Theta::Interval { lo: tl, hi: th } => {
            if tl > th {
                return Err(Error::EmptyTheta);
            }
            *tl <= hi && lo <= *th
        }
        Theta::Finite { values } => {
            if values.is_empty() {
                return Err(Error::EmptyTheta);
            }
            values.iter().any(|&t| hit(t))
        }
    };
    Ok(if accept { Decision::Accept } else { Decision::Reject })
}

/// Switching rule for the centered errors, symmetric about the middle of `[a, b]`.
pub fn test_rule(spec: &TestSpec, a: f64, b: f64) -> Result<SwitchRule> {
    Ok(SwitchRule::new(0.5 * (a + b), spec.error_interval()?))
}

/// `M_n` for the observations, computed as `θ₀ + M_n(X - θ₀)`.
pub fn test_statistic(data: &[f64], spec: &TestSpec, a: f64, b: f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::BadParameters("no observations".into()));
    }
    let centered: Vec<f64> = data.iter().map(|x| x - spec.theta0).collect();
    let rule = test_rule(spec, a, b)?;
    Ok(spec.theta0 + path_statistic(&centered, data.len(), &rule, Variant::M)?)
}

/// Four-point error laws on `s·{-3,-1,1,3}` with means `±κ` and variance `σ²`.
///
/// Needs `κ < √5 σ / 2` for positive weights; `κ = 0` gives the single
/// uniform law.
pub fn symmetric_error_model(kappa: f64, sigma: f64) -> Result<MeasureSet> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::DegenerateSigma);
    }
    if !(kappa >= 0.0 && 4.0 * kappa * kappa < 5.0 * sigma * sigma) {
        return Err(Error::BadParameters(format!("kappa {kappa} too large for sigma {sigma}")));
    }
    let s = ((sigma * sigma + kappa * kappa) / 5.0).sqrt();
    let xs = [-3.0 * s, -s, s, 3.0 * s];
    let law = |lambda: f64| {
        let ps: Vec<f64> = xs.iter().map(|x| 0.25 * (1.0 + lambda * x)).collect();
        DiscreteMeasure::from_f64(&xs, &ps)
    };
    if kappa == 0.0 {
        return MeasureSet::singleton(law(0.0)?);
    }
    let lambda = kappa / (5.0 * s * s);
    MeasureSet::new(vec![law(-lambda)?, law(lambda)?])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SizeEstimate {
    pub accept_rate: f64,
    pub stderr: f64,
    pub paths: usize,
}

/// Monte Carlo acceptance rate of the test of `θ₀` when the data are
/// `θ_true + Y` with errors drawn from `errors` under `policy`.
///
/// The statistic is evaluated through `M_n - θ₀ = (θ_true - θ₀) + M_n(Y)`,
/// with `M_n(Y)` the error-process statistic under the rule on `[-κ, κ]`.
#[allow(clippy::too_many_arguments)]
pub fn size_power_simulation(
    errors: &MeasureSet,
    spec: &TestSpec,
    a: f64,
    b: f64,
    theta_true: f64,
    n: usize,
    paths: usize,
    seed: u64,
    policy: &DriftPolicy,
) -> Result<SizeEstimate> {
    spec.validate()?;
    if !(a < b) {
        return Err(Error::BadInterval { a, b });
    }
    if n == 0 || paths == 0 {
        return Err(Error::BadParameters("need n >= 1 and at least one path".into()));
    }
    crate::measures::validate_measure_set(errors, DEFAULT_TOL_VAR)?;
    let rule = test_rule(spec, a, b)?;
    let iv = rule.interval;
    let shift = theta_true - spec.theta0;
    let values: Vec<f64> = errors.laws()[0].values_f64();
    let cumulative: Vec<Vec<f64>> = errors
        .laws()
        .iter()
        .map(|law| {
            law.probs_f64()
                .iter()
                .scan(0.0, |acc, &p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let (upper, lower) = (errors.argmax_mean(), errors.argmin_mean());

    let hits: Vec<u8> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut state = StatState::new(n, Variant::M);
            for m in 1..=n {
                let thr = |c: f64| SwitchRule::new(c, iv).threshold(m, n);
                let law = policy.pick(m, state.value, thr, upper, lower, errors.len())?;
                let u: f64 = rng.random();
                let cum = &cumulative[law];
                let j = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
                state = update_statistic(&state, values[j], &rule)?;
            }
            let centered = shift + state.value;
            Ok(u8::from(a <= centered && centered <= b))
        })
        .collect::<Result<Vec<u8>>>()?;
    let accepted: usize = hits.iter().map(|&h| h as usize).sum();
    let rate = accepted as f64 / paths as f64;
    Ok(SizeEstimate { accept_rate: rate, stderr: (rate * (1.0 - rate) / paths as f64).sqrt(), paths })
}

/// Acceptance rate under each built-in policy, keyed by policy name.
#[allow(clippy::too_many_arguments)]
pub fn policy_sweep(
    errors: &MeasureSet,
    spec: &TestSpec,
    a: f64,
    b: f64,
    theta_true: f64,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<Vec<(String, SizeEstimate)>> {
    DriftPolicy::builtins(0.5 * (a + b))
        .into_iter()
        .filter(|p| !matches!(p, DriftPolicy::Constant(i) if *i >= errors.len()))
        .map(|p| Ok((p.name(), size_power_simulation(errors, spec, a, b, theta_true, n, paths, seed, &p)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(kappa: f64) -> TestSpec {
        TestSpec::new(kappa, 1.0, 0.05, 0.0, 1.0).unwrap()
    }

    #[test]
    fn classical_quantile() {
        let (a, b) = calibrate_interval(&spec(0.0), Calibration::Symmetric).unwrap();
        assert_abs_diff_eq!(b, 1.959963984540054, epsilon = 1e-7);
        assert_eq!(a, -b);
    }

    #[test]
    fn upper_coverage_narrows_with_ambiguity() {
        // the upper expectation lets the drift pull toward the interval
        let mut last = f64::INFINITY;
        for k in [0.0, 0.1, 0.3, 0.6] {
            let (_, b) = calibrate_interval(&spec(k), Calibration::Symmetric).unwrap();
            assert!(b < last);
            last = b;
        }
        let (_, b) = calibrate_interval(&spec(0.3), Calibration::Symmetric).unwrap();
        assert_abs_diff_eq!(b, 1.715145140371489, epsilon = 1e-8);
    }

    #[test]
    fn alpha_near_one_shrinks() {
        let s = TestSpec::new(0.2, 1.0, 0.999, 0.0, 1.0).unwrap();
        let (_, b) = calibrate_interval(&s, Calibration::Symmetric).unwrap();
        assert!(b > 0.0 && b < 0.01);
    }

    #[test]
    fn given_lower_endpoint() {
        let s = spec(0.3);
        let (a, b) = calibrate_interval(&s, Calibration::GivenLower(-3.0)).unwrap();
        assert_eq!(a, -3.0);
        assert!((coverage(&s, a, b).unwrap() - 0.95).abs() <= CALIBRATION_TOL);
        assert!(matches!(calibrate_interval(&s, Calibration::GivenLower(5.0)), Err(Error::Infeasible(_))));
    }

    #[test]
    fn wrong_acceptance_shape() {
        let s = spec(0.3);
        let (a, b) = calibrate_interval(&s, Calibration::Symmetric).unwrap();
        assert_eq!(wrong_acceptance(&s, a, b, 0.0).unwrap(), coverage(&s, a, b).unwrap());
        let w = wrong_acceptance(&s, a, b, 1.0).unwrap();
        assert!(w > 0.0 && w < 0.95);
        assert!(wrong_acceptance(&s, a, b, 40.0).unwrap() < 1e-12);
        assert!(matches!(wrong_acceptance(&s, 1.0, 1.0, 0.0), Err(Error::BadInterval { .. })));
    }

    #[test]
    fn optimum_beats_symmetric() {
        let s = spec(0.0);
        let opt = optimize_ab(&s, 1.0).unwrap();
        let (a, b) = calibrate_interval(&s, Calibration::Symmetric).unwrap();
        assert!(opt.objective <= wrong_acceptance(&s, a, b, 1.0).unwrap() + 1e-12);
        assert!(opt.a < a, "interval moves away from the alternative");
        assert!(opt.constraint_binds);
        assert!((opt.coverage - 0.95).abs() <= CALIBRATION_TOL);
    }

    #[test]
    fn decisions() {
        let th = Theta::Point { value: 0.0 };
        let (a, b) = (-1.96, 1.96);
        assert_eq!(test_decision(0.0, a, b, &th).unwrap(), Decision::Accept);
        assert_eq!(test_decision(b + 0.01, a, b, &th).unwrap(), Decision::Reject);
        assert_eq!(test_decision(b, a, b, &th).unwrap(), Decision::Accept);
        let iv = Theta::Interval { lo: 2.5, hi: 3.0 };
        assert_eq!(test_decision(0.6, a, b, &iv).unwrap(), Decision::Accept);
        assert_eq!(test_decision(0.5, a, b, &iv).unwrap(), Decision::Reject);
        let fin = Theta::Finite { values: vec![-10.0, 2.0] };
        assert_eq!(test_decision(0.1, a, b, &fin).unwrap(), Decision::Accept);
        assert!(matches!(test_decision(0.0, a, b, &Theta::Finite { values: vec![] }), Err(Error::EmptyTheta)));
        assert!(matches!(test_decision(0.0, a, b, &Theta::Interval { lo: 1.0, hi: 0.0 }), Err(Error::EmptyTheta)));
    }

    #[test]
    fn error_model_moments() {
        for (k, sigma) in [(0.0, 1.0), (0.3, 1.0), (0.5, 2.0)] {
            let set = symmetric_error_model(k, sigma).unwrap();
            let iv = crate::measures::validate_measure_set(&set, DEFAULT_TOL_VAR).unwrap();
            assert_abs_diff_eq!(iv.mu_upper, k, epsilon = 1e-12);
            assert_abs_diff_eq!(iv.mu_lower, -k, epsilon = 1e-12);
            assert_abs_diff_eq!(iv.sigma, sigma, epsilon = 1e-9);
        }
        assert!(symmetric_error_model(1.2, 1.0).is_err());
    }

    #[test]
    fn statistic_shift() {
        let s = TestSpec::new(0.2, 1.0, 0.05, 3.0, 1.0).unwrap();
        let ys = [0.4, -1.1, 0.7, 2.0, -0.3];
        let xs: Vec<f64> = ys.iter().map(|y| y + 3.0).collect();
        let shifted = test_statistic(&xs, &s, -2.0, 2.0).unwrap();
        let base = test_statistic(&ys, &TestSpec { theta0: 0.0, ..s }, -2.0, 2.0).unwrap();
        assert_abs_diff_eq!(shifted, 3.0 + base, epsilon = 1e-12);
    }

    #[test]
    fn gross_misspecification_rejects() {
        let s = spec(0.0);
        let errs = symmetric_error_model(0.0, 1.0).unwrap();
        let est = size_power_simulation(&errs, &s, -1.96, 1.96, 10.0, 100, 500, 1, &DriftPolicy::Constant(0)).unwrap();
        assert_eq!(est.accept_rate, 0.0);
    }

    #[test]
    fn simulation_is_deterministic() {
        let s = spec(0.3);
        let errs = symmetric_error_model(0.3, 1.0).unwrap();
        let p = DriftPolicy::Threshold { center: 0.0 };
        let r1 = size_power_simulation(&errs, &s, -2.0, 2.0, 0.0, 50, 300, 9, &p).unwrap();
        let r2 = size_power_simulation(&errs, &s, -2.0, 2.0, 0.0, 50, 300, 9, &p).unwrap();
        assert_eq!(r1, r2);
    }
}

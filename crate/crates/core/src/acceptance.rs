//! The acceptance matrix: thirteen numerical checks with fixed tolerances,
//! seeds and runtime limits.

use std::time::Instant;

use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::brute_force::{brute_force_value, policy_enumeration_value};
use crate::closed_form::{
    lower_indicator_limit, lower_indicator_limit_direct, reflected_density, upper_indicator_limit,
    upper_indicator_limit_direct, Branch, IndicatorLimit, Side,
};
use crate::error::Result;
use crate::exact::Rational;
use crate::hypothesis::{
    calibrate_interval, coverage, size_power_simulation, symmetric_error_model, Calibration, TestSpec,
};
use crate::measures::{coin_example, coin_example_exact, validate_measure_set, AmbiguityInterval, MeasureSet};
use crate::pde::{
    dpp_check, indicator_estimate, symmetry_report, GeneratorSpec, PdeGrid, DEFAULT_BANDWIDTHS, DEFAULT_EPSILONS,
};
use crate::quadrature::{gaussian_expectation, integrate_pieces};
use crate::terminal::TerminalFunction;
use crate::worst_case::{
    convergence_report, mc_policy_value, sup_dp_deviation, sup_dp_lln, worst_case_value, DpConfig, DriftPolicy,
    LatticeModel, Sense, Statistic,
};

/// Outcome of one numerical check, before the runtime limit is applied.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub passed: bool,
    /// The quantity compared against `tolerance` (worst case over sub-checks).
    pub metric: f64,
    pub tolerance: f64,
    pub detail: String,
}

#[derive(Clone, Copy)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub limit_s: f64,
    pub run: fn() -> Result<Check>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub metric: f64,
    pub tolerance: f64,
    pub runtime_s: f64,
    pub limit_s: f64,
    pub detail: String,
}

impl CriterionResult {
    pub fn status(&self) -> &'static str {
        if self.passed {
            "PASS"
        } else {
            "FAIL"
        }
    }

    /// `PASS 07 oracle-equivalence: ...`
    pub fn line(&self) -> String {
        format!(
            "{} {:02} {}: metric={:e} tol={:e} runtime={:.2}s/{}s {}",
            self.status(),
            self.id,
            self.name,
            self.metric,
            self.tolerance,
            self.runtime_s,
            self.limit_s,
            self.detail
        )
    }
}

pub fn criteria() -> Vec<Criterion> {
    vec![
        Criterion { id: 1, name: "closed-form-reduction", limit_s: 1.0, run: closed_form_reduction },
        Criterion { id: 2, name: "branch-continuity", limit_s: 1.0, run: branch_continuity },
        Criterion { id: 3, name: "shift-identity", limit_s: 1.0, run: shift_identity },
        Criterion { id: 4, name: "density-consistency", limit_s: 10.0, run: density_consistency },
        Criterion { id: 5, name: "pde-vs-closed-form", limit_s: 90.0, run: pde_vs_closed_form },
        Criterion { id: 6, name: "dpp-self-check", limit_s: 60.0, run: dpp_self_check },
        Criterion { id: 7, name: "oracle-equivalence", limit_s: 60.0, run: oracle_equivalence },
        Criterion { id: 8, name: "clt-convergence-trend", limit_s: 300.0, run: clt_convergence },
        Criterion { id: 9, name: "normal-limit", limit_s: 300.0, run: normal_limit },
        Criterion { id: 10, name: "lln", limit_s: 60.0, run: lln },
        Criterion { id: 11, name: "mc-sandwich", limit_s: 120.0, run: mc_sandwich },
        Criterion { id: 12, name: "hypothesis-calibration", limit_s: 120.0, run: hypothesis_calibration },
        Criterion { id: 13, name: "pde-symmetry", limit_s: 30.0, run: pde_symmetry },
    ]
}

/// Runs one criterion; errors count as failures and are reported in `detail`.
pub fn run_criterion(c: &Criterion) -> CriterionResult {
    let start = Instant::now();
    let outcome = (c.run)();
    let runtime_s = start.elapsed().as_secs_f64();
    let (check_passed, metric, tolerance, mut detail) = match outcome {
        Ok(ch) => (ch.passed, ch.metric, ch.tolerance, ch.detail),
        Err(e) => (false, f64::NAN, f64::NAN, format!("error {}: {e}", e.kind())),
    };
    let in_time = runtime_s <= c.limit_s;
    if !in_time {
        detail.push_str(&format!(" (over time limit {}s)", c.limit_s));
    }
    CriterionResult {
        id: c.id,
        name: c.name,
        passed: check_passed && in_time,
        metric,
        tolerance,
        runtime_s,
        limit_s: c.limit_s,
        detail,
    }
}

pub fn run_by_id(id: u8) -> Option<CriterionResult> {
    criteria().iter().find(|c| c.id == id).map(run_criterion)
}

/// Runs the selected criteria (all when `ids` is empty) in id order.
pub fn run_suite(ids: &[u8]) -> Vec<CriterionResult> {
    criteria().iter().filter(|c| ids.is_empty() || ids.contains(&c.id)).map(run_criterion).collect()
}

fn check(metric: f64, tolerance: f64, detail: String) -> Check {
    Check { passed: metric <= tolerance, metric, tolerance, detail }
}

/// `Φ(b) - Φ(a)` through `erf`, independent of the library's normal CDF.
fn phi_diff(a: f64, b: f64) -> f64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    0.5 * (libm::erf(b * s) - libm::erf(a * s))
}

fn random_interval(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> (f64, f64) {
    loop {
        let (x, y) = (rng.random_range(lo..hi), rng.random_range(lo..hi));
        if (x - y).abs() > 1e-3 {
            return (x.min(y), x.max(y));
        }
    }
}

fn closed_form_reduction() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let iv = AmbiguityInterval::new(0.0, 0.0, 1.0)?;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (a, b) = random_interval(&mut rng, -6.0, 6.0);
        worst = worst.max((upper_indicator_limit(&iv, a, b)? - phi_diff(a, b)).abs());
    }
    Ok(check(worst, 1e-12, "100 random intervals, unambiguous mean".into()))
}

fn branch_continuity() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (lo, hi) = random_interval(&mut rng, -1.0, 1.0);
        let iv = AmbiguityInterval::new(lo, hi, 1.0)?;
        // a + b = μ̲ + μ̄ exactly after centering
        let half = rng.random_range(0.05..4.0);
        let c = iv.center();
        for side in [Side::Upper, Side::Lower] {
            let lim = IndicatorLimit::new(iv, c - half, c + half, side);
            let above = lim.branch_value(Branch::AtOrAboveCenter)?;
            let below = lim.branch_value(Branch::BelowCenter)?;
            worst = worst.max((above - below).abs());
        }
    }
    Ok(check(worst, 1e-10, "50 random intervals on the branch boundary, both sides".into()))
}

fn shift_identity() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (lo, hi) = random_interval(&mut rng, -1.0, 1.0);
        let iv = AmbiguityInterval::new(lo, hi, 1.0)?;
        let (a, b) = random_interval(&mut rng, -4.0, 4.0);
        worst = worst.max((upper_indicator_limit(&iv, a, b)? - upper_indicator_limit_direct(&iv, a, b)?).abs());
        worst = worst.max((lower_indicator_limit(&iv, a, b)? - lower_indicator_limit_direct(&iv, a, b)?).abs());
    }
    Ok(check(worst, 1e-12, "100 random cases, upper and lower".into()))
}

fn density_consistency() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut mass_err, mut part_err) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let kappa = rng.random_range(0.0..1.0);
        let (a, b) = random_interval(&mut rng, -3.0, 3.0);
        let x = -(a + b) / 2.0;
        let w = (b - a) / 2.0;
        let q = |z: f64| reflected_density(x, kappa, 1.0, z).unwrap_or(f64::NAN);
        let total = integrate_pieces(q, -40.0, 40.0, &[0.0, x, -x], 1e-13);
        let part = integrate_pieces(q, -w, w, &[0.0, x, -x], 1e-14);
        let closed = upper_indicator_limit(&AmbiguityInterval::symmetric(kappa)?, a, b)?;
        mass_err = mass_err.max((total - 1.0).abs());
        part_err = part_err.max((part - closed).abs());
    }
    Ok(Check {
        passed: mass_err <= 1e-6 && part_err <= 1e-8,
        metric: part_err.max(mass_err * 1e-2),
        tolerance: 1e-8,
        detail: format!("max |mass-1| = {mass_err:e} (tol 1e-6), max |partial-closed| = {part_err:e} (tol 1e-8)"),
    })
}

fn pde_vs_closed_form() -> Result<Check> {
    let grid = PdeGrid::default();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for kappa in [0.0, 0.3, 0.6] {
        let start = Instant::now();
        let iv = AmbiguityInterval::symmetric(kappa)?;
        let est = indicator_estimate(&iv, -1.0, 1.0, Side::Upper, &grid, &DEFAULT_EPSILONS, &DEFAULT_BANDWIDTHS)?;
        let secs = start.elapsed().as_secs_f64();
        if secs > 30.0 {
            return Ok(Check {
                passed: false,
                metric: est.gap,
                tolerance: 5e-3,
                detail: format!("kappa={kappa} took {secs:.1}s (limit 30s)"),
            });
        }
        worst = worst.max(est.gap);
        parts.push(format!("kappa={kappa}: gap {:.3e}", est.gap));
    }
    Ok(check(worst, 5e-3, parts.join(", ")))
}

fn dpp_self_check() -> Result<Check> {
    let grid = PdeGrid::default();
    let gen = GeneratorSpec::new(0.3, 0.05)?;
    let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05)?;
    let probes: Vec<f64> = (-40..=40).map(|i| i as f64 * 0.05).collect();
    let mut worst = 0.0f64;
    for m in 1..=4 {
        worst = worst.max(dpp_check(&phi, &gen, &grid, 4, m, &probes)?);
    }
    Ok(check(worst, 5e-4, "kappa=0.3, eps=0.05, n=4, all split points m".into()))
}

fn oracle_equivalence() -> Result<Check> {
    let set = coin_example_exact(Rational::new(6.into(), 10.into()), Rational::new(3.into(), 10.into()))?;
    let model = LatticeModel::new(&set)?;
    let cfg = DpConfig::default();
    let phis = [TerminalFunction::indicator(-1.0, 1.0)?, TerminalFunction::indicator(-0.5, 1.5)?];
    let stats = [
        Statistic::Clt,
        Statistic::Special { center: 0.0 },
        Statistic::Tilde { center: 0.0 },
        Statistic::Special { center: 0.5 },
        Statistic::Deviation,
        Statistic::Lln,
        Statistic::Scaled { alpha: 0.5, beta: 2.0 },
    ];
    let (mut cases, mut mismatches, mut max_diff) = (0usize, Vec::new(), 0.0f64);
    for phi in &phis {
        for stat in stats {
            for sense in [Sense::Sup, Sense::Inf] {
                for n in 1..=6 {
                    let dp = worst_case_value::<Rational>(&model, stat, phi, n, sense, &cfg)?.value;
                    let tree = brute_force_value(&set, stat, phi, n, sense)?;
                    let mut equal = dp == tree;
                    if n <= 3 {
                        equal &= policy_enumeration_value(&set, stat, phi, n, sense)? == tree;
                    }
                    cases += 1;
                    if !equal {
                        max_diff = max_diff.max((&dp - &tree).to_f64().unwrap_or(f64::INFINITY).abs());
                        mismatches.push(format!("{} {:?} n={n}", stat.name(), sense));
                    }
                }
            }
        }
    }
    let detail = if mismatches.is_empty() {
        format!("{cases} cases equal exactly (n <= 6; explicit policy enumeration for n <= 3)")
    } else {
        format!("{} of {cases} cases differ: {}", mismatches.len(), mismatches.join("; "))
    };
    Ok(Check { passed: mismatches.is_empty(), metric: max_diff, tolerance: 0.0, detail })
}

fn coin() -> Result<MeasureSet> {
    coin_example(0.6, 0.3)
}

fn clt_convergence() -> Result<Check> {
    let set = coin()?;
    let iv = validate_measure_set(&set, crate::measures::DEFAULT_TOL_VAR)?;
    let limit = upper_indicator_limit(&iv, -1.0, 1.0)?;
    let phi = TerminalFunction::indicator(-1.0, 1.0)?;
    let report = convergence_report(
        &LatticeModel::new(&set)?,
        Statistic::Special { center: 0.0 },
        Sense::Sup,
        &phi,
        &[10, 20, 30, 40],
        limit,
        &DpConfig::default(),
        false,
    )?;
    let gaps: Vec<String> = report.rows.iter().map(|r| format!("n={}: {:.4}", r.n, r.gap)).collect();
    let last = report.rows.last().map_or(f64::NAN, |r| r.gap);
    Ok(Check {
        passed: report.monotone_gaps && last <= 0.05,
        metric: last,
        tolerance: 0.05,
        detail: format!("limit {limit:.6}; gaps {}; decreasing={}", gaps.join(", "), report.monotone_gaps),
    })
}

fn normal_limit() -> Result<Check> {
    let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05)?;
    let dp = sup_dp_deviation(&coin()?, &phi, 40)?;
    let reference = gaussian_expectation(|x| phi.eval(x), 0.0, &phi.breakpoints());
    let gap = (dp - reference).abs();
    Ok(check(gap, 0.05, format!("dp {dp:.6} vs quadrature {reference:.6} at n=40")))
}

fn lln() -> Result<Check> {
    let set = coin()?;
    let inside = sup_dp_lln(&set, &TerminalFunction::indicator(0.1, 0.5)?, 400)?;
    let outside = sup_dp_lln(&set, &TerminalFunction::indicator(0.5, 1.0)?, 400)?;
    Ok(Check {
        passed: inside >= 0.95 && outside <= 0.05,
        metric: (1.0 - inside).max(outside),
        tolerance: 0.05,
        detail: format!("means [-0.3, 0.3], n=400: I[0.1,0.5] -> {inside:.6}, I[0.5,1] -> {outside:.6}"),
    })
}

fn mc_sandwich() -> Result<Check> {
    let set = coin()?;
    let model = LatticeModel::new(&set)?;
    let configs = [
        (Statistic::Special { center: 0.0 }, TerminalFunction::indicator(-1.0, 1.0)?, 0.0),
        (Statistic::Clt, TerminalFunction::indicator(-1.0, 1.0)?, 0.0),
        (Statistic::Special { center: 0.5 }, TerminalFunction::indicator(0.0, 1.0)?, 0.5),
    ];
    let n = 20;
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for (k, (stat, phi, center)) in configs.iter().enumerate() {
        let dp = worst_case_value::<f64>(&model, *stat, phi, n, Sense::Sup, &DpConfig::default())?.value;
        for policy in DriftPolicy::builtins(*center) {
            let est = mc_policy_value(&model, &policy, phi, *stat, n, 100_000, 17 + k as u64)?;
            // standardized excess over the DP bound
            let z = (est.estimate - dp) / est.stderr.max(1e-12);
            worst = worst.max(z);
            if est.estimate > dp + 3.0 * est.stderr {
                failures.push(format!("{} {}: {:.5} > {:.5}", stat.name(), policy.name(), est.estimate, dp));
            }
        }
    }
    let detail = if failures.is_empty() {
        "15 policy/configuration pairs below DP + 3 stderr".to_string()
    } else {
        failures.join("; ")
    };
    Ok(Check { passed: failures.is_empty(), metric: worst, tolerance: 3.0, detail })
}

/// `Φ⁻¹(p)` by Newton iteration on `erf`.
fn normal_quantile(p: f64) -> f64 {
    let mut x = 0.0;
    for _ in 0..100 {
        let f = 0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) - p;
        let d = (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let step = f / d;
        x -= step;
        if step.abs() < 1e-15 {
            break;
        }
    }
    x
}

fn hypothesis_calibration() -> Result<Check> {
    let spec0 = TestSpec::new(0.0, 1.0, 0.05, 0.0, 0.0)?;
    let (a, b) = calibrate_interval(&spec0, Calibration::Symmetric)?;
    let quantile_err = (b - normal_quantile(0.975)).abs();
    let mut residual = 0.0f64;
    for kappa in [0.0, 0.1, 0.3] {
        let spec = TestSpec { kappa, ..spec0 };
        let (a, b) = calibrate_interval(&spec, Calibration::Symmetric)?;
        residual = residual.max((coverage(&spec, a, b)? - 0.95).abs());
    }
    let errors = symmetric_error_model(0.0, 1.0)?;
    let sim = size_power_simulation(&errors, &spec0, a, b, 0.0, 400, 10_000, 12, &DriftPolicy::Constant(0))?;
    let rate_err = (sim.accept_rate - 0.95).abs();
    Ok(Check {
        passed: quantile_err <= 1e-5 && residual <= 1e-9 && rate_err <= 0.02,
        metric: rate_err,
        tolerance: 0.02,
        detail: format!(
            "b = {b:.7} (|err| {quantile_err:.1e}, tol 1e-5); max residual {residual:.1e} (tol 1e-9); accept rate {:.4} +- {:.4} at n=400",
            sim.accept_rate, sim.stderr
        ),
    })
}

fn pde_symmetry() -> Result<Check> {
    let grid = PdeGrid::default();
    let mut worst = 0.0f64;
    let mut violations = 0usize;
    for (kappa, eps) in [(0.3, 0.05), (0.6, 0.0)] {
        for (a, b) in [(-1.0, 1.0), (0.0, 2.0)] {
            let phi = TerminalFunction::smoothed_indicator(a, b, 0.05)?;
            let rep = symmetry_report(&phi, &GeneratorSpec::new(kappa, eps)?, &grid, 0.5 * (a + b))?;
            worst = worst.max(rep.max_symmetry_error);
            violations += rep.sign_violations;
        }
    }
    Ok(Check {
        passed: worst <= 1e-10 && violations == 0,
        metric: worst,
        tolerance: 1e-10,
        detail: format!("4 symmetric mollified indicators; sign violations {violations}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_oracle() {
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((normal_quantile(0.5)).abs() < 1e-15);
    }

    #[test]
    fn ids_are_ordered() {
        let ids: Vec<u8> = criteria().iter().map(|c| c.id).collect();
        assert_eq!(ids, (1..=13).collect::<Vec<u8>>());
    }

    #[test]
    fn fast_criteria_pass() {
        for r in run_suite(&[1, 2, 3]) {
            assert!(r.passed, "{}", r.line());
        }
    }
}

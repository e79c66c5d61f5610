use ambiclt_core::brute_force::brute_force_value;
use ambiclt_core::exact::{to_f64, Rational};
use ambiclt_core::measures::{coin_example, AmbiguityInterval, DiscreteMeasure, MeasureSet};
use ambiclt_core::statistics::{path_statistic, SwitchRule, Variant};
use ambiclt_core::terminal::TerminalFunction;
use ambiclt_core::worst_case::{worst_case_value, DpConfig, LatticeModel, Sense, Statistic};

/// `P(a <= f(S) <= b)` for `S` a sum of `n` fair ±1 steps.
fn binomial_prob(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut total = 0.0;
    let mut c = 1.0f64;
    for k in 0..=n {
        if k > 0 {
            c *= (n - k + 1) as f64 / k as f64;
        }
        let s = 2.0 * k as f64 - n as f64;
        let v = f(s);
        if a <= v && v <= b {
            total += c;
        }
    }
    total / 2f64.powi(n as i32)
}

fn fair_coin() -> MeasureSet {
    MeasureSet::singleton(DiscreteMeasure::from_f64(&[-1.0, 1.0], &[0.5, 0.5]).unwrap()).unwrap()
}

#[test]
fn singleton_dp_matches_binomial_law() {
    let set = fair_coin();
    let model = LatticeModel::new(&set).unwrap();
    let cfg = DpConfig::default();
    let (a, b) = (-0.7, 1.3);
    let phi = TerminalFunction::indicator(a, b).unwrap();
    for n in [1, 2, 5, 13, 30] {
        let nf = n as f64;
        let clt = worst_case_value::<f64>(&model, Statistic::Clt, &phi, n, Sense::Sup, &cfg).unwrap().value;
        let want = binomial_prob(n, a, b, |s| s / nf + s / nf.sqrt());
        assert!((clt - want).abs() < 1e-12, "clt n={n}: {clt} vs {want}");

        let dev = worst_case_value::<f64>(&model, Statistic::Deviation, &phi, n, Sense::Inf, &cfg).unwrap().value;
        let want = binomial_prob(n, a, b, |s| s / nf.sqrt());
        assert!((dev - want).abs() < 1e-12, "deviation n={n}");

        let lln = worst_case_value::<Rational>(&model, Statistic::Lln, &phi, n, Sense::Sup, &cfg).unwrap().value;
        let want = binomial_prob(n, a, b, |s| s / nf);
        assert!((to_f64(&lln) - want).abs() < 1e-12, "lln n={n}");
    }
}

#[test]
fn exact_dp_matches_history_tree_on_other_coins() {
    let cfg = DpConfig::default();
    for (p, q) in [(0.5, 0.2), (0.7, 0.3), (0.45, 0.35)] {
        let set = coin_example(p, q).unwrap();
        let model = LatticeModel::new(&set).unwrap();
        assert!(model.is_exact());
        for (a, b) in [(-1.0, 1.0), (-0.5, 2.0), (0.0, 0.75)] {
            let phi = TerminalFunction::indicator(a, b).unwrap();
            for stat in [
                Statistic::Clt,
                Statistic::Special { center: 0.5 * (a + b) },
                Statistic::Tilde { center: 0.5 * (a + b) },
                Statistic::Scaled { alpha: 0.5, beta: 2.0 },
            ] {
                for sense in [Sense::Sup, Sense::Inf] {
                    for n in 1..=5 {
                        let dp = worst_case_value::<Rational>(&model, stat, &phi, n, sense, &cfg).unwrap().value;
                        let tree = brute_force_value(&set, stat, &phi, n, sense).unwrap();
                        assert_eq!(dp, tree, "coin ({p},{q}) [{a},{b}] {stat:?} {sense:?} n={n}");
                    }
                }
            }
        }
    }
}

#[test]
fn float_and_exact_dp_agree() {
    let set = coin_example(0.6, 0.3).unwrap();
    let model = LatticeModel::new(&set).unwrap();
    let phi = TerminalFunction::indicator(-1.0, 1.0).unwrap();
    let cfg = DpConfig::default();
    for n in [7, 15, 24] {
        let stat = Statistic::Special { center: 0.0 };
        let f = worst_case_value::<f64>(&model, stat, &phi, n, Sense::Sup, &cfg).unwrap().value;
        let r = worst_case_value::<Rational>(&model, stat, &phi, n, Sense::Sup, &cfg).unwrap().value;
        assert!((f - to_f64(&r)).abs() < 1e-12, "n={n}");
    }
}

#[test]
fn statistic_without_ambiguity_is_the_plain_sum() {
    let xs = [0.3, -1.2, 0.8, 0.05, -0.4, 1.7];
    let (mu, sigma) = (0.25, 1.5);
    let iv = AmbiguityInterval::new(mu, mu, sigma).unwrap();
    let n = xs.len() as f64;
    let sum: f64 = xs.iter().sum();
    let want = sum / n + (sum - n * mu) / (sigma * n.sqrt());
    for variant in [Variant::M, Variant::Tilde] {
        let got = path_statistic(&xs, xs.len(), &SwitchRule::new(0.7, iv), variant).unwrap();
        assert!((got - want).abs() < 1e-12, "{variant:?}");
    }
}

#[test]
fn no_builtin_policy_beats_the_limit_acceptance_by_much() {
    use ambiclt_core::hypothesis::{
        calibrate_interval, policy_sweep, symmetric_error_model, wrong_acceptance, Calibration, TestSpec,
    };
    let spec = TestSpec::new(0.3, 1.0, 0.05, 0.0, 1.0).unwrap();
    let (a, b) = calibrate_interval(&spec, Calibration::Symmetric).unwrap();
    let errors = symmetric_error_model(0.3, 1.0).unwrap();
    for xi in [0.0, 1.0, 2.5] {
        let limit = wrong_acceptance(&spec, a, b, xi).unwrap();
        let sweep = policy_sweep(&errors, &spec, a, b, xi, 400, 2000, 11).unwrap();
        let worst = sweep.iter().map(|(_, s)| s.accept_rate).fold(0.0, f64::max);
        assert!(worst <= limit + 0.05, "xi={xi}: {worst} vs limit {limit} ({sweep:?})");
    }
}

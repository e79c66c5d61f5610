use ambiclt_core::closed_form::{lower_indicator_limit, normal_cdf, reflected_density, upper_indicator_limit};
use ambiclt_core::hypothesis::{
    calibrate_interval, coverage, test_decision, wrong_acceptance, Calibration, Decision, TestSpec, Theta,
};
use ambiclt_core::measures::AmbiguityInterval;
use ambiclt_core::quadrature::integrate_pieces;
use proptest::prelude::*;

fn interval() -> impl Strategy<Value = (f64, f64)> {
    (-3.0..3.0f64, 0.05..3.0f64).prop_map(|(a, w)| (a, a + w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn limits_bracket_every_constant_drift(
        lo in -1.0..1.0f64,
        width in 0.0..1.5f64,
        t in 0.0..1.0f64,
        (a, b) in interval(),
    ) {
        let iv = AmbiguityInterval::new(lo, lo + width, 1.0).unwrap();
        let up = upper_indicator_limit(&iv, a, b).unwrap();
        let down = lower_indicator_limit(&iv, a, b).unwrap();
        let mu = lo + t * width;
        let fixed = normal_cdf(mu, b) - normal_cdf(mu, a);
        prop_assert!((0.0..=1.0).contains(&up) && (0.0..=1.0).contains(&down));
        prop_assert!(down <= fixed + 1e-12 && fixed <= up + 1e-12, "{down} {fixed} {up}");
    }

    #[test]
    fn limits_are_translation_invariant(
        kappa in 0.0..1.0f64,
        (a, b) in interval(),
        shift in -2.0..2.0f64,
    ) {
        let base = AmbiguityInterval::symmetric(kappa).unwrap();
        let moved = AmbiguityInterval::new(shift - kappa, shift + kappa, 1.0).unwrap();
        let u0 = upper_indicator_limit(&base, a, b).unwrap();
        let u1 = upper_indicator_limit(&moved, a + shift, b + shift).unwrap();
        let l0 = lower_indicator_limit(&base, a, b).unwrap();
        let l1 = lower_indicator_limit(&moved, a + shift, b + shift).unwrap();
        prop_assert!((u0 - u1).abs() < 1e-10 && (l0 - l1).abs() < 1e-10);
    }

    #[test]
    fn more_ambiguity_widens_the_limits(
        k1 in 0.0..0.8f64,
        dk in 0.0..0.8f64,
        (a, b) in interval(),
    ) {
        let narrow = AmbiguityInterval::symmetric(k1).unwrap();
        let wide = AmbiguityInterval::symmetric(k1 + dk).unwrap();
        prop_assert!(upper_indicator_limit(&wide, a, b).unwrap() >= upper_indicator_limit(&narrow, a, b).unwrap() - 1e-12);
        prop_assert!(lower_indicator_limit(&wide, a, b).unwrap() <= lower_indicator_limit(&narrow, a, b).unwrap() + 1e-12);
    }

    #[test]
    fn reflected_density_integrates_to_the_upper_limit(kappa in 0.0..1.0f64, (a, b) in interval()) {
        let x = -(a + b) / 2.0;
        let w = (b - a) / 2.0;
        let q = |z: f64| reflected_density(x, kappa, 1.0, z).unwrap();
        let part = integrate_pieces(q, -w, w, &[0.0, x, -x], 1e-13);
        let closed = upper_indicator_limit(&AmbiguityInterval::symmetric(kappa).unwrap(), a, b).unwrap();
        prop_assert!((part - closed).abs() < 1e-8, "{part} vs {closed}");
    }

    #[test]
    fn calibrated_interval_attains_the_nominal_coverage(kappa in 0.0..1.0f64, alpha in 0.01..0.3f64) {
        let spec = TestSpec::new(kappa, 1.0, alpha, 0.0, 1.0).unwrap();
        let (a, b) = calibrate_interval(&spec, Calibration::Symmetric).unwrap();
        prop_assert!((a + b).abs() < 1e-12);
        prop_assert!((coverage(&spec, a, b).unwrap() - (1.0 - alpha)).abs() < 1e-8);
    }

    #[test]
    fn wrong_acceptance_is_symmetric_and_decays(kappa in 0.0..0.8f64, xi in 0.0..4.0f64, dxi in 0.01..2.0f64) {
        let spec = TestSpec::new(kappa, 1.0, 0.05, 0.0, 1.0).unwrap();
        let (a, b) = calibrate_interval(&spec, Calibration::Symmetric).unwrap();
        let near = wrong_acceptance(&spec, a, b, xi).unwrap();
        let mirrored = wrong_acceptance(&spec, a, b, -xi).unwrap();
        let far = wrong_acceptance(&spec, a, b, xi + dxi).unwrap();
        prop_assert!((near - mirrored).abs() < 1e-12);
        prop_assert!(far <= near + 1e-12, "{far} > {near}");
    }

    #[test]
    fn decision_matches_the_acceptance_interval(m in -5.0..5.0f64, theta0 in -2.0..2.0f64, (a, b) in interval()) {
        let d = test_decision(m, a, b, &Theta::Point { value: theta0 }).unwrap();
        let inside = a <= m - theta0 && m - theta0 <= b;
        prop_assert_eq!(d == Decision::Accept, inside);
        // a finite set accepts iff one of its points does
        let set = Theta::Finite { values: vec![theta0 - 10.0, theta0] };
        prop_assert_eq!(test_decision(m, a, b, &set).unwrap(), d);
    }
}

#[test]
fn calibrated_half_width_shrinks_with_ambiguity() {
    let b = |kappa: f64| {
        let spec = TestSpec::new(kappa, 1.0, 0.05, 0.0, 1.0).unwrap();
        calibrate_interval(&spec, Calibration::Symmetric).unwrap().1
    };
    let widths: Vec<f64> = [0.0, 0.1, 0.3, 0.6].into_iter().map(b).collect();
    assert!((widths[0] - 1.959963984540054).abs() < 1e-8);
    assert!(widths.windows(2).all(|w| w[1] < w[0]), "{widths:?}");
}

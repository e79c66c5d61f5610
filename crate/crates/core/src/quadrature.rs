//! Adaptive Gauss–Kronrod (7/15) quadrature.

use crate::closed_form::normal_pdf;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * half, ((k - g) * half).abs())
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, err: f64, tol: f64, depth: u32) -> f64 {
    if err <= tol.max(1e-15 * whole.abs()) || depth == 0 || (b - a).abs() < 1e-12 {
        return whole;
    }
    let mid = 0.5 * (a + b);
    let (left, el) = kronrod(f, a, mid);
    let (right, er) = kronrod(f, mid, b);
    adapt(f, a, mid, left, el, tol / 2.0, depth - 1) + adapt(f, mid, b, right, er, tol / 2.0, depth - 1)
}

/// `∫_a^b f` to absolute tolerance `tol`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (whole, err) = kronrod(&f, a, b);
    adapt(&f, a, b, whole, err, tol, 40)
}

/// Integrates over consecutive pieces split at the sorted `breakpoints` inside `(a, b)`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breakpoints: &[f64], tol: f64) -> f64 {
    let mut cuts: Vec<f64> = breakpoints.iter().copied().filter(|&x| x > a && x < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut nodes = vec![a];
    nodes.extend(cuts);
    nodes.push(b);
    let pieces = (nodes.len() - 1) as f64;
    nodes.windows(2).map(|w| integrate(&f, w[0], w[1], tol / pieces)).sum()
}

/// `E[f(Z)]` for `Z ~ N(mean, 1)`, truncated to `mean ± 12` with splits at `breakpoints`.
pub fn gaussian_expectation<F: Fn(f64) -> f64>(f: F, mean: f64, breakpoints: &[f64]) -> f64 {
    let lo = mean - 12.0;
    let hi = mean + 12.0;
    let mut cuts = breakpoints.to_vec();
    cuts.push(mean);
    integrate_pieces(|x| f(x) * normal_pdf(x - mean), lo, hi, &cuts, 1e-13)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::normal_cdf;
    use approx::assert_abs_diff_eq;

    #[test]
    fn polynomials_and_transcendentals() {
        assert_abs_diff_eq!(integrate(|x| x * x, 0.0, 3.0, 1e-12), 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate(f64::sin, 0.0, std::f64::consts::PI, 1e-12), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate(|x| x.sqrt(), 0.0, 1.0, 1e-10), 2.0 / 3.0, epsilon = 1e-9);
    }

    #[test]
    fn gaussian_moments() {
        assert_abs_diff_eq!(gaussian_expectation(|_| 1.0, 0.7, &[]), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(gaussian_expectation(|x| x, 0.7, &[]), 0.7, epsilon = 1e-13);
        assert_abs_diff_eq!(gaussian_expectation(|x| x * x, 0.0, &[]), 1.0, epsilon = 1e-12);
        let ind = |x: f64| if (-1.0..=1.0).contains(&x) { 1.0 } else { 0.0 };
        assert_abs_diff_eq!(
            gaussian_expectation(ind, 0.0, &[-1.0, 1.0]),
            normal_cdf(0.0, 1.0) - normal_cdf(0.0, -1.0),
            epsilon = 1e-13
        );
    }
}

//! Finite-difference solver for `u_τ = ½u_xx + g_ε(u_x)`, `u(0,·) = φ`, whose
//! value at `τ = 1` is the g-expectation `E_{g_ε}[φ(x + B₁)]`.
//!
//! Diffusion is implicit (Neumann boundaries), the nonlinearity explicit.

use rayon::prelude::*;
use serde::Serialize;

use crate::closed_form::{IndicatorLimit, Side};
use crate::error::{Error, Result};
use crate::measures::AmbiguityInterval;
use crate::quadrature::gaussian_expectation;
use crate::terminal::TerminalFunction;

pub const DEFAULT_EPSILONS: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const DEFAULT_BANDWIDTHS: [f64; 2] = [0.05, 0.02];

/// `g_ε(z) = κ(√(z²+ε²) - ε)`; `ε = 0` gives `κ|z|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GeneratorSpec {
    pub kappa: f64,
    pub epsilon: f64,
}

impl GeneratorSpec {
    pub fn new(kappa: f64, epsilon: f64) -> Result<Self> {
        if !(kappa >= 0.0 && kappa.is_finite()) || !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::BadParameters(format!(
                "generator needs kappa >= 0 and epsilon >= 0, got ({kappa}, {epsilon})"
            )));
        }
        Ok(GeneratorSpec { kappa, epsilon })
    }

    #[inline]
    pub fn g(&self, z: f64) -> f64 {
        if self.epsilon == 0.0 {
            self.kappa * z.abs()
        } else {
            self.kappa * (z.hypot(self.epsilon) - self.epsilon)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PdeGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    /// Time steps on `[0, 1]`.
    pub nt: usize,
}

impl Default for PdeGrid {
    fn default() -> Self {
        PdeGrid { x_min: -10.0, x_max: 10.0, nx: 2001, nt: 2000 }
    }
}

impl PdeGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, nt: usize) -> Result<Self> {
        if !(x_min < 0.0 && 0.0 < x_max) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::BadParameters(format!("grid needs x_min < 0 < x_max, got [{x_min}, {x_max}]")));
        }
        if nx < 3 || nt < 1 {
            return Err(Error::BadParameters(format!("grid needs nx >= 3 and nt >= 1, got ({nx}, {nt})")));
        }
        Ok(PdeGrid { x_min, x_max, nx, nt })
    }

    /// Default resolution on a symmetric domain wide enough for `[a, b]`.
    pub fn recommended(a: f64, b: f64, kappa: f64) -> Self {
        let reach = [a, b].iter().filter(|v| v.is_finite()).fold(0.0f64, |m, v| m.max(v.abs()));
        let half = (6.0 + reach + kappa).max(10.0).ceil();
        let dx = 0.01;
        let nx = (2.0 * half / dx).round() as usize + 1;
        PdeGrid { x_min: -half, x_max: half, nx, nt: 2000 }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        let w = self.x_max - self.x_min;
        let last = (self.nx - 1) as f64;
        (0..self.nx).map(|i| self.x_min + w * (i as f64 / last)).collect()
    }

    /// Index of the node at `x`, if `x` is (numerically) a grid node.
    pub fn node_index(&self, x: f64) -> Option<usize> {
        let pos = (x - self.x_min) / self.dx();
        let i = pos.round();
        ((pos - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < self.nx).then_some(i as usize)
    }

    fn check_stability(&self, gen: &GeneratorSpec, dt: f64) -> Result<()> {
        let courant = dt * gen.kappa / self.dx();
        if courant > 0.5 {
            return Err(Error::UnstableGrid(format!(
                "dt·kappa/dx = {courant:.4} exceeds 0.5 for the explicit gradient term"
            )));
        }
        Ok(())
    }

    fn interpolate(&self, values: &[f64], x: f64) -> Result<f64> {
        if !(x >= self.x_min && x <= self.x_max) {
            return Err(Error::OutOfDomain { x, x_min: self.x_min, x_max: self.x_max });
        }
        let pos = (x - self.x_min) / self.dx();
        let i = (pos.floor() as usize).min(self.nx - 2);
        let w = pos - i as f64;
        if w.abs() < 1e-12 {
            return Ok(values[i]);
        }
        if (1.0 - w).abs() < 1e-12 {
            return Ok(values[i + 1]);
        }
        Ok(values[i] * (1.0 - w) + values[i + 1] * w)
    }
}

/// Discretization of the gradient inside `g_ε`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientScheme {
    Centered,
    /// Engquist–Osher upwinding; monotone under the stability bound.
    Upwind,
    /// Centered, rerun with upwinding if the discrete maximum principle fails.
    #[default]
    Auto,
}

/// Prefactored `(I - r·Δ)` with Neumann rows.
struct Implicit {
    r: f64,
    c_prime: Vec<f64>,
    denom: Vec<f64>,
}

impl Implicit {
    fn new(n: usize, r: f64) -> Self {
        let diag = 1.0 + 2.0 * r;
        let mut c_prime = vec![0.0; n];
        let mut denom = vec![0.0; n];
        // row 0: (1+2r, -2r); interior: (-r, 1+2r, -r); last: (-2r, 1+2r)
        denom[0] = diag;
        c_prime[0] = -2.0 * r / diag;
        for i in 1..n {
            let lower = if i == n - 1 { -2.0 * r } else { -r };
            let upper = if i == n - 1 { 0.0 } else { -r };
            denom[i] = diag - lower * c_prime[i - 1];
            c_prime[i] = upper / denom[i];
        }
        Implicit { r, c_prime, denom }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let n = rhs.len();
        rhs[0] /= self.denom[0];
        for i in 1..n {
            let lower = if i == n - 1 { -2.0 * self.r } else { -self.r };
            rhs[i] = (rhs[i] - lower * rhs[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
    }
}

fn explicit_term(u: &[f64], out: &mut [f64], gen: &GeneratorSpec, dx: f64, dt: f64, scheme: GradientScheme) {
    let n = u.len();
    out[0] = u[0];
    out[n - 1] = u[n - 1];
    match scheme {
        GradientScheme::Upwind => {
            for i in 1..n - 1 {
                let fwd = (u[i + 1] - u[i]) / dx;
                let bwd = (u[i] - u[i - 1]) / dx;
                out[i] = u[i] + dt * (gen.g(fwd.max(0.0)) + gen.g(bwd.min(0.0)));
            }
        }
        _ => {
            let inv = 0.5 / dx;
            for i in 1..n - 1 {
                out[i] = u[i] + dt * gen.g((u[i + 1] - u[i - 1]) * inv);
            }
        }
    }
}

/// Called with `(step, values)` after every time step.
pub type Observer<'a> = &'a mut dyn FnMut(usize, &[f64]);

/// Advances `init` over a time span with `steps` steps. `observer` sees every
/// intermediate profile, starting with step 1.
pub fn solve_profile(
    init: &[f64],
    gen: &GeneratorSpec,
    grid: &PdeGrid,
    span: f64,
    steps: usize,
    scheme: GradientScheme,
    mut observer: Option<Observer<'_>>,
) -> Result<Vec<f64>> {
    if init.len() != grid.nx {
        return Err(Error::LengthMismatch { expected: grid.nx, got: init.len() });
    }
    if span == 0.0 {
        return Ok(init.to_vec());
    }
    if !(span > 0.0) || steps == 0 {
        return Err(Error::BadParameters(format!("need a positive span and step count, got ({span}, {steps})")));
    }
    let dt = span / steps as f64;
    grid.check_stability(gen, dt)?;
    if scheme == GradientScheme::Auto {
        let centered = march(init, gen, grid, dt, steps, GradientScheme::Centered, None, true);
        return match centered {
            Some(profile) if observer.is_none() => Ok(profile),
            Some(_) => {
                Ok(march(init, gen, grid, dt, steps, GradientScheme::Centered, observer, false).expect("unchecked"))
            }
            None => Ok(march(init, gen, grid, dt, steps, GradientScheme::Upwind, observer, false).expect("unchecked")),
        };
    }
    Ok(march(init, gen, grid, dt, steps, scheme, observer.take(), false).expect("unchecked"))
}

#[allow(clippy::too_many_arguments)]
fn march(
    init: &[f64],
    gen: &GeneratorSpec,
    grid: &PdeGrid,
    dt: f64,
    steps: usize,
    scheme: GradientScheme,
    mut observer: Option<Observer<'_>>,
    check_bounds: bool,
) -> Option<Vec<f64>> {
    let dx = grid.dx();
    let implicit = Implicit::new(grid.nx, dt / (2.0 * dx * dx));
    let (lo, hi) = init.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let slack = 1e-10 * (1.0 + hi.abs().max(lo.abs()));
    let mut u = init.to_vec();
    let mut next = vec![0.0; grid.nx];
    for step in 1..=steps {
        explicit_term(&u, &mut next, gen, dx, dt, scheme);
        implicit.solve(&mut next);
        std::mem::swap(&mut u, &mut next);
        if check_bounds && u.iter().any(|&v| v < lo - slack || v > hi + slack || !v.is_finite()) {
            return None;
        }
        if let Some(obs) = observer.as_mut() {
            obs(step, &u);
        }
    }
    Some(u)
}

/// `u(1, x0)`: the upper g-expectation of `φ(x0 + B₁)`.
pub fn solve_g_expectation(phi: &TerminalFunction, gen: &GeneratorSpec, grid: &PdeGrid, x0: f64) -> Result<f64> {
    solve_side(phi, gen, grid, x0, Side::Upper)
}

/// Upper or lower g-expectation; the lower one is `-E_g[-φ]`.
pub fn solve_side(phi: &TerminalFunction, gen: &GeneratorSpec, grid: &PdeGrid, x0: f64, side: Side) -> Result<f64> {
    grid.interpolate(&vec![0.0; grid.nx], x0)?;
    let sign = if side == Side::Upper { 1.0 } else { -1.0 };
    let init: Vec<f64> = grid.xs().iter().map(|&x| sign * phi.eval(x)).collect();
    let out = solve_profile(&init, gen, grid, 1.0, grid.nt, GradientScheme::Auto, None)?;
    Ok(sign * grid.interpolate(&out, x0)?)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonSweep {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    /// Linear extrapolation to `ε = 0` through the last two points.
    pub extrapolated: f64,
    /// Whether the values never decrease as `ε` shrinks (upper side).
    pub monotone: bool,
}

/// Solves for each `ε` (in parallel) and extrapolates linearly to `ε = 0`.
pub fn epsilon_extrapolate(
    phi: &TerminalFunction,
    kappa: f64,
    grid: &PdeGrid,
    epsilons: &[f64],
    x0: f64,
    side: Side,
) -> Result<EpsilonSweep> {
    if epsilons.is_empty() {
        return Err(Error::BadParameters("empty epsilon sequence".into()));
    }
    if epsilons.iter().any(|e| !(*e >= 0.0)) || epsilons.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::BadParameters("epsilon sequence must be nonnegative and strictly decreasing".into()));
    }
    let values = epsilons
        .par_iter()
        .map(|&eps| solve_side(phi, &GeneratorSpec::new(kappa, eps)?, grid, x0, side))
        .collect::<Result<Vec<f64>>>()?;
    let k = values.len();
    let extrapolated = if k == 1 || epsilons[k - 1] == 0.0 {
        values[k - 1]
    } else {
        let (e1, e2) = (epsilons[k - 2], epsilons[k - 1]);
        let (v1, v2) = (values[k - 2], values[k - 1]);
        v2 + (v2 - v1) * e2 / (e1 - e2)
    };
    let tol = 1e-12;
    let monotone = values.windows(2).all(|w| match side {
        Side::Upper => w[1] >= w[0] - tol,
        Side::Lower => w[1] <= w[0] + tol,
    });
    Ok(EpsilonSweep { epsilons: epsilons.to_vec(), values, extrapolated, monotone })
}

/// Richardson extrapolation in `h²` through the last two bandwidths.
pub fn bandwidth_extrapolate(hs: &[f64], values: &[f64]) -> f64 {
    let k = values.len();
    if k < 2 {
        return values[k - 1];
    }
    let (h1, h2) = (hs[k - 2], hs[k - 1]);
    let (v1, v2) = (values[k - 2], values[k - 1]);
    v2 + (v2 - v1) * h2 * h2 / (h1 * h1 - h2 * h2)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IndicatorEstimate {
    pub bandwidths: Vec<f64>,
    pub sweeps: Vec<EpsilonSweep>,
    /// Bandwidth- and ε-extrapolated estimate.
    pub extrapolated: f64,
    pub closed_form: f64,
    pub gap: f64,
}

/// PDE estimate of the upper (or lower) limit of `I_[a,b]` via mollification
/// with each bandwidth, ε-extrapolation and then `h → 0` extrapolation.
pub fn indicator_estimate(
    iv: &AmbiguityInterval,
    a: f64,
    b: f64,
    side: Side,
    grid: &PdeGrid,
    epsilons: &[f64],
    bandwidths: &[f64],
) -> Result<IndicatorEstimate> {
    if bandwidths.is_empty() || bandwidths.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::BadParameters("bandwidths must be nonempty and strictly decreasing".into()));
    }
    let closed_form = IndicatorLimit::new(*iv, a, b, side).evaluate()?.value;
    let sweeps = bandwidths
        .par_iter()
        .map(|&h| {
            let phi = TerminalFunction::smoothed_indicator(a, b, h)?;
            epsilon_extrapolate(&phi, iv.kappa(), grid, epsilons, iv.center(), side)
        })
        .collect::<Result<Vec<_>>>()?;
    let per_h: Vec<f64> = sweeps.iter().map(|s| s.extrapolated).collect();
    let extrapolated = bandwidth_extrapolate(bandwidths, &per_h);
    Ok(IndicatorEstimate {
        bandwidths: bandwidths.to_vec(),
        sweeps,
        extrapolated,
        closed_form,
        gap: (extrapolated - closed_form).abs(),
    })
}

/// Compares one solve over `[(m-1)/n, 1]` with the composition of solves over
/// `[m/n, 1]` and `[(m-1)/n, m/n]`, each using `grid.nt` steps. Returns the
/// largest discrepancy at the probe points.
pub fn dpp_check(
    phi: &TerminalFunction,
    gen: &GeneratorSpec,
    grid: &PdeGrid,
    n: usize,
    m: usize,
    probes: &[f64],
) -> Result<f64> {
    if !(1 <= m && m <= n) {
        return Err(Error::BadParameters(format!("need 1 <= m <= n, got m = {m}, n = {n}")));
    }
    let init = phi.sample(&grid.xs());
    let nf = n as f64;
    let direct = solve_profile(&init, gen, grid, (n - m + 1) as f64 / nf, grid.nt, GradientScheme::Auto, None)?;
    let tail = if m == n {
        init.clone()
    } else {
        solve_profile(&init, gen, grid, (n - m) as f64 / nf, grid.nt, GradientScheme::Auto, None)?
    };
    let composed = if m == n && n == 1 {
        direct.clone()
    } else {
        solve_profile(&tail, gen, grid, 1.0 / nf, grid.nt, GradientScheme::Auto, None)?
    };
    probes.iter().try_fold(0.0f64, |acc, &x| {
        Ok(acc.max((grid.interpolate(&direct, x)? - grid.interpolate(&composed, x)?).abs()))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotonicity {
    Increasing,
    Decreasing,
    Constant,
}

/// Detects global monotonicity from sampled differences on `[-30, 30]`.
pub fn detect_monotonicity(phi: &TerminalFunction) -> Result<Monotonicity> {
    let mut xs: Vec<f64> = (0..=6000).map(|i| -30.0 + i as f64 * 0.01).collect();
    for b in phi.breakpoints() {
        xs.extend([b - 1e-9, b, b + 1e-9]);
    }
    xs.sort_by(f64::total_cmp);
    let ys: Vec<f64> = xs.iter().map(|&x| phi.eval(x)).collect();
    let tol = 1e-14;
    let up = ys.windows(2).any(|w| w[1] > w[0] + tol);
    let down = ys.windows(2).any(|w| w[1] < w[0] - tol);
    match (up, down) {
        (true, true) => Err(Error::NotMonotone),
        (true, false) => Ok(Monotonicity::Increasing),
        (false, true) => Ok(Monotonicity::Decreasing),
        (false, false) => Ok(Monotonicity::Constant),
    }
}

/// Limit for monotone `φ`: `∫φ dΦ_{μ̲}` if decreasing, `∫φ dΦ_{μ̄}` if increasing.
pub fn monotone_reduction(phi: &TerminalFunction, iv: &AmbiguityInterval) -> Result<f64> {
    let mean = match detect_monotonicity(phi)? {
        Monotonicity::Constant => return Ok(phi.eval(0.0)),
        Monotonicity::Decreasing => iv.mu_lower,
        Monotonicity::Increasing => iv.mu_upper,
    };
    Ok(gaussian_expectation(|x| phi.eval(x), mean, &phi.breakpoints()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub max_symmetry_error: f64,
    pub sign_violations: usize,
    pub steps_checked: usize,
}

/// Tracks `|u(t, c+x) - u(t, c-x)|` and the sign of forward differences
/// (nonnegative left of `c`, nonpositive right of it) at every time step.
pub fn symmetry_report(
    phi: &TerminalFunction,
    gen: &GeneratorSpec,
    grid: &PdeGrid,
    center: f64,
) -> Result<SymmetryReport> {
    let Some(ic) = grid.node_index(center) else {
        return Err(Error::BadParameters(format!("center {center} is not a grid node")));
    };
    let xs = grid.xs();
    let init: Vec<f64> = xs.iter().map(|&x| phi.eval(x)).collect();
    let reach = ic.min(grid.nx - 1 - ic);
    let mut max_err = 0.0f64;
    let mut violations = 0usize;
    let mut steps = 0usize;
    // differences below this are rounding noise in the flat tails
    let noise = 1e-13;
    let mut observe = |_: usize, u: &[f64]| {
        steps += 1;
        for k in 1..=reach {
            max_err = max_err.max((u[ic + k] - u[ic - k]).abs());
        }
        for i in 0..grid.nx - 1 {
            let diff = u[i + 1] - u[i];
            let wrong = if i < ic {
                diff < -noise
            } else if i >= ic {
                diff > noise
            } else {
                false
            };
            if wrong {
                violations += 1;
            }
        }
    };
    solve_profile(&init, gen, grid, 1.0, grid.nt, GradientScheme::Centered, Some(&mut observe))?;
    Ok(SymmetryReport { max_symmetry_error: max_err, sign_violations: violations, steps_checked: steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_form::{normal_cdf, upper_indicator_limit};
    use approx::assert_abs_diff_eq;

    fn coarse() -> PdeGrid {
        PdeGrid::new(-8.0, 8.0, 801, 400).unwrap()
    }

    #[test]
    fn generator_bounds() {
        let gen = GeneratorSpec::new(0.3, 0.1).unwrap();
        let g0 = GeneratorSpec::new(0.3, 0.0).unwrap();
        assert_eq!(gen.g(0.0), 0.0);
        for &z in &[-5.0, -0.3, 0.01, 2.0] {
            let gap = g0.g(z) - gen.g(z);
            assert!((0.0..=0.3 * 0.1 + 1e-15).contains(&gap));
        }
        assert!(GeneratorSpec::new(-0.1, 0.0).is_err());
    }

    #[test]
    fn heat_equation_matches_quadrature() {
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05).unwrap();
        let gen = GeneratorSpec::new(0.0, 0.0).unwrap();
        let v = solve_g_expectation(&phi, &gen, &PdeGrid::default(), 0.0).unwrap();
        let reference = gaussian_expectation(|x| phi.eval(x), 0.0, &[-1.0, 1.0]);
        assert_abs_diff_eq!(v, reference, epsilon = 2e-3);
    }

    #[test]
    fn constants_are_fixed_points() {
        let phi = TerminalFunction::constant(0.37);
        let gen = GeneratorSpec::new(0.6, 0.0).unwrap();
        let init = phi.sample(&coarse().xs());
        let out = solve_profile(&init, &gen, &coarse(), 1.0, 400, GradientScheme::Auto, None).unwrap();
        assert!(out.iter().all(|&v| (v - 0.37).abs() < 1e-14));
    }

    #[test]
    fn translation_and_comparison() {
        let grid = coarse();
        let gen = GeneratorSpec::new(0.3, 0.05).unwrap();
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.1).unwrap();
        let init = phi.sample(&grid.xs());
        let base = solve_profile(&init, &gen, &grid, 1.0, 400, GradientScheme::Auto, None).unwrap();
        let lifted: Vec<f64> = init.iter().map(|v| v + 2.0).collect();
        let moved = solve_profile(&lifted, &gen, &grid, 1.0, 400, GradientScheme::Auto, None).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            assert_abs_diff_eq!(a + 2.0, *b, epsilon = 1e-12);
        }
        let wider = TerminalFunction::smoothed_indicator(-1.5, 1.0, 0.1).unwrap().sample(&grid.xs());
        let big = solve_profile(&wider, &gen, &grid, 1.0, 400, GradientScheme::Auto, None).unwrap();
        assert!(base.iter().zip(&big).all(|(s, l)| *s <= l + 1e-10));
    }

    #[test]
    fn stability_and_domain_errors() {
        let grid = PdeGrid::new(-1.0, 1.0, 2001, 1).unwrap();
        let gen = GeneratorSpec::new(1.0, 0.0).unwrap();
        let phi = TerminalFunction::constant(1.0);
        assert!(matches!(solve_g_expectation(&phi, &gen, &grid, 0.0), Err(Error::UnstableGrid(_))));
        assert!(matches!(solve_g_expectation(&phi, &gen, &PdeGrid::default(), 12.0), Err(Error::OutOfDomain { .. })));
    }

    #[test]
    fn kappa_zero_sweep_is_flat() {
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.1).unwrap();
        let sweep = epsilon_extrapolate(&phi, 0.0, &coarse(), &[0.2, 0.1], 0.0, Side::Upper).unwrap();
        assert_eq!(sweep.values[0], sweep.values[1]);
        assert_eq!(sweep.extrapolated, sweep.values[1]);
        assert!(epsilon_extrapolate(&phi, 0.0, &coarse(), &[0.1, 0.2], 0.0, Side::Upper).is_err());
    }

    #[test]
    fn sweep_increases_as_epsilon_shrinks() {
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05).unwrap();
        let sweep = epsilon_extrapolate(&phi, 0.3, &coarse(), &DEFAULT_EPSILONS, 0.0, Side::Upper).unwrap();
        assert!(sweep.monotone, "{:?}", sweep.values);
        let target = upper_indicator_limit(&AmbiguityInterval::symmetric(0.3).unwrap(), -1.0, 1.0).unwrap();
        assert!((sweep.extrapolated - target).abs() < 1e-2);
    }

    #[test]
    fn dpp_trivial_case_is_exact() {
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05).unwrap();
        let gen = GeneratorSpec::new(0.3, 0.05).unwrap();
        assert_eq!(dpp_check(&phi, &gen, &coarse(), 1, 1, &[0.0, 0.5]).unwrap(), 0.0);
        let heat = GeneratorSpec::new(0.0, 0.0).unwrap();
        assert!(dpp_check(&phi, &heat, &PdeGrid::default(), 4, 2, &[-1.0, 0.0, 1.0]).unwrap() < 1e-4);
    }

    #[test]
    fn monotone_reductions() {
        let iv = AmbiguityInterval::symmetric(0.3).unwrap();
        let left = TerminalFunction::left(0.4).unwrap();
        assert_abs_diff_eq!(monotone_reduction(&left, &iv).unwrap(), normal_cdf(-0.3, 0.4), epsilon = 1e-10);
        assert_eq!(monotone_reduction(&TerminalFunction::constant(0.2), &iv).unwrap(), 0.2);
        let bump = TerminalFunction::indicator(-1.0, 1.0).unwrap();
        assert!(matches!(monotone_reduction(&bump, &iv), Err(Error::NotMonotone)));
        let rising = TerminalFunction::smoothed_indicator(0.5, f64::INFINITY, 0.05).unwrap();
        let reduced = monotone_reduction(&rising, &iv).unwrap();
        let solved =
            solve_g_expectation(&rising, &GeneratorSpec::new(0.3, 0.0).unwrap(), &PdeGrid::default(), 0.0).unwrap();
        assert_abs_diff_eq!(reduced, solved, epsilon = 5e-3);
    }

    #[test]
    fn lower_side_is_below_upper() {
        let iv = AmbiguityInterval::symmetric(0.3).unwrap();
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05).unwrap();
        let gen = GeneratorSpec::new(iv.kappa(), 0.0).unwrap();
        let hi = solve_side(&phi, &gen, &coarse(), 0.0, Side::Upper).unwrap();
        let lo = solve_side(&phi, &gen, &coarse(), 0.0, Side::Lower).unwrap();
        assert!(lo < hi);
    }

    #[test]
    fn symmetric_data_stays_symmetric() {
        let phi = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.05).unwrap();
        let gen = GeneratorSpec::new(0.3, 0.05).unwrap();
        let rep = symmetry_report(&phi, &gen, &coarse(), 0.0).unwrap();
        assert!(rep.max_symmetry_error <= 1e-10, "{rep:?}");
        assert_eq!(rep.sign_violations, 0);
        assert_eq!(rep.steps_checked, 400);
    }

    #[test]
    fn bandwidth_extrapolation_is_quadratic() {
        // v(h) = 1 + 3h² is reproduced exactly
        let hs = [0.05, 0.02];
        let vs: Vec<f64> = hs.iter().map(|h| 1.0 + 3.0 * h * h).collect();
        assert_abs_diff_eq!(bandwidth_extrapolate(&hs, &vs), 1.0, epsilon = 1e-14);
    }
}

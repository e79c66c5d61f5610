//! Exact finite-n worst-case expectations over the rectangular IID set.
//!
//! States live on an integer lattice: with `D` the common denominator of all
//! outcomes and means, a state is `(X, W)` where `X/D` is the running sum of
//! outcomes and `W/D` the running sum of compensated deviations. Any scaled
//! statistic is `β·X/(D·n) + α·W/(D·σ·√n)`, compared against rational
//! thresholds exactly by surd sign analysis.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::sync::Arc;
use std::time::Instant;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{common_denominator, int_surd_sign, rationalize, surd_sign, to_f64, Rational};
use crate::measures::{ExactInterval, MeasureSet, DEFAULT_TOL_VAR};
use crate::statistics::{ExactCenter, ExactSwitchRule, SwitchRule, Variant};
use crate::terminal::{ExactTerminal, TerminalFunction};

/// Lattice states are `(X, W)` integer pairs.
pub type StateKey = (i64, i64);

/// Quantization used when the exact common denominator is too large.
const ROUNDED_SCALE: i64 = 1 << 20;
/// Largest `D·max|value|` kept on the exact lattice.
const EXACT_MAGNITUDE_LIMIT: i64 = 1 << 40;

pub const DEFAULT_STATE_CAP: usize = 2_000_000;

/// The one-step model of a measure set, embedded in an integer lattice.
#[derive(Clone, Debug)]
pub struct LatticeModel {
    values: Vec<Rational>,
    probs: Vec<Vec<Rational>>,
    means: Vec<Rational>,
    interval: ExactInterval,
    exact: bool,
    denom: i64,
    x_int: Vec<i64>,
    mean_int: Vec<i64>,
    lo_int: i64,
    hi_int: i64,
    probs_f64: Vec<Vec<f64>>,
    means_f64: Vec<f64>,
    sigma: f64,
}

impl LatticeModel {
    pub fn new(set: &MeasureSet) -> Result<Self> {
        Self::with_tolerance(set, DEFAULT_TOL_VAR)
    }

    pub fn with_tolerance(set: &MeasureSet, tol_var: f64) -> Result<Self> {
        let interval = set.exact_interval(tol_var)?;
        let values = set.values().to_vec();
        let probs: Vec<Vec<Rational>> = set.laws().iter().map(|l| l.probs().to_vec()).collect();
        let means = set.means();
        let denom_big = common_denominator(values.iter().chain(means.iter()));
        let max_abs =
            values.iter().chain(means.iter()).map(|v| v.abs()).fold(Rational::zero(), |a, b| if b > a { b } else { a });
        let magnitude = Rational::from_integer(denom_big.clone()) * (&max_abs + Rational::one());
        let exact = magnitude < Rational::from_integer(EXACT_MAGNITUDE_LIMIT.into());
        let scale = |r: &Rational, d: i64| -> i64 {
            if exact {
                (r * Rational::from_integer(d.into())).to_integer().to_i64().expect("bounded")
            } else {
                (to_f64(r) * d as f64).round() as i64
            }
        };
        let denom = if exact { denom_big.to_i64().expect("bounded") } else { ROUNDED_SCALE };
        let x_int = values.iter().map(|v| scale(v, denom)).collect();
        let mean_int = means.iter().map(|v| scale(v, denom)).collect();
        let lo_int = scale(&interval.mu_lower, denom);
        let hi_int = scale(&interval.mu_upper, denom);
        let probs_f64 = probs.iter().map(|p| p.iter().map(to_f64).collect()).collect();
        let means_f64 = means.iter().map(to_f64).collect();
        let sigma = to_f64(&interval.sigma_sq).sqrt();
        Ok(LatticeModel {
            values,
            probs,
            means,
            interval,
            exact,
            denom,
            x_int,
            mean_int,
            lo_int,
            hi_int,
            probs_f64,
            means_f64,
            sigma,
        })
    }

    /// Keeps only law `law` while retaining the full set's mean interval.
    pub fn restricted(&self, law: usize) -> LatticeModel {
        LatticeModel {
            probs: vec![self.probs[law].clone()],
            means: vec![self.means[law].clone()],
            mean_int: vec![self.mean_int[law]],
            probs_f64: vec![self.probs_f64[law].clone()],
            means_f64: vec![self.means_f64[law]],
            ..self.clone()
        }
    }

    /// Whether states are merged by exact rational keys.
    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn num_laws(&self) -> usize {
        self.probs.len()
    }

    pub fn interval(&self) -> &ExactInterval {
        &self.interval
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn means_f64(&self) -> &[f64] {
        &self.means_f64
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    fn argmax_mean(&self) -> usize {
        first_extreme(&self.means, Ordering::Greater)
    }

    fn argmin_mean(&self) -> usize {
        first_extreme(&self.means, Ordering::Less)
    }
}

fn first_extreme(xs: &[Rational], want: Ordering) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if x.cmp(&xs[best]) == want {
            best = i;
        }
    }
    best
}

/// The statistic whose terminal law is being optimized.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "theorem", rename_all = "snake_case")]
pub enum Statistic {
    /// `(1/n)ΣX_i + (1/√n)Σ(X_i - E_Q[X_i|G_{i-1}])/σ`
    Clt,
    /// `M_{n,n}` with the switching rule at `center`.
    Special { center: f64 },
    /// `M̃_{n,n}` with the switching rule at `center`.
    Tilde { center: f64 },
    /// `(1/√n)Σ(X_i - E_Q[X_i|G_{i-1}])/σ`
    Deviation,
    /// `S_n/n`
    Lln,
    /// `(β/n)ΣX_i + (α/√n)Σ(X_i - E_Q[X_i|G_{i-1}])/σ`
    Scaled { alpha: f64, beta: f64 },
}

impl Statistic {
    /// Default largest `n` the exact engine accepts.
    pub fn default_horizon_cap(&self) -> usize {
        match self {
            Statistic::Special { .. } | Statistic::Tilde { .. } | Statistic::Lln => 2000,
            _ => 60,
        }
    }

    /// Parses `clt`, `special`, `tilde`, `deviation`, `lln` or `scaled`.
    pub fn from_name(theorem: &str, center: f64, alpha: f64, beta: f64) -> Option<Self> {
        Some(match theorem {
            "clt" => Statistic::Clt,
            "special" => Statistic::Special { center },
            "tilde" => Statistic::Tilde { center },
            "deviation" => Statistic::Deviation,
            "lln" => Statistic::Lln,
            "scaled" => Statistic::Scaled { alpha, beta },
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::Clt => "clt",
            Statistic::Special { .. } => "special",
            Statistic::Tilde { .. } => "tilde",
            Statistic::Deviation => "deviation",
            Statistic::Lln => "lln",
            Statistic::Scaled { .. } => "scaled",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Sup,
    Inf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DpConfig {
    /// Largest number of reachable states allowed in one layer.
    pub state_cap: usize,
    /// Overrides the per-statistic horizon cap.
    pub horizon_cap: Option<usize>,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig { state_cap: DEFAULT_STATE_CAP, horizon_cap: None }
    }
}

/// Numeric type carried through the backward recursion.
pub trait DpValue: Clone + Send + Sync + PartialOrd + Debug + Zero {
    fn from_rational(r: &Rational) -> Self;
    fn from_f64(x: f64) -> Result<Self>;
    fn add_product(&mut self, p: &Self, v: &Self);
    fn to_f64(&self) -> f64;
}

impl DpValue for f64 {
    fn from_rational(r: &Rational) -> Self {
        to_f64(r)
    }
    fn from_f64(x: f64) -> Result<Self> {
        Ok(x)
    }
    #[inline]
    fn add_product(&mut self, p: &Self, v: &Self) {
        *self += p * v;
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl DpValue for Rational {
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_f64(_: f64) -> Result<Self> {
        Err(Error::NotExact)
    }
    fn add_product(&mut self, p: &Self, v: &Self) {
        *self += p * v;
    }
    fn to_f64(&self) -> f64 {
        to_f64(self)
    }
}

/// Integer pieces of a rational, kept as `i128` when they fit.
#[derive(Clone, Debug)]
struct Frac {
    num: BigInt,
    den: BigInt,
}

impl Frac {
    fn of(r: &Rational) -> Self {
        Frac { num: r.numer().clone(), den: r.denom().clone() }
    }
}

/// Exact comparison of `β·X/(D·n) + α·W/(D·σ·√n)` against rationals.
#[derive(Clone, Debug)]
struct Comparator {
    exact: bool,
    n: usize,
    denom: i64,
    alpha: Frac,
    beta: Frac,
    sigma_sq: Frac,
    // i128 fast path: A = k1·rd·X - rn·k2, B = k3·rd·W, radicand p/q
    fast: Option<(i128, i128, i128, i128, i128)>,
    scale_x: f64,
    scale_w: f64,
}

impl Comparator {
    fn new(model: &LatticeModel, n: usize, alpha: &Rational, beta: &Rational) -> Self {
        let (a, b, s) = (Frac::of(alpha), Frac::of(beta), Frac::of(&model.interval.sigma_sq));
        let fast = (|| {
            let bn = b.num.to_i128()?;
            let bd = b.den.to_i128()?;
            let an = a.num.to_i128()?;
            let ad = a.den.to_i128()?;
            let sn = s.num.to_i128()?;
            let sd = s.den.to_i128()?;
            let d = model.denom as i128;
            let k1 = bn.checked_mul(ad)?;
            let k2 = d.checked_mul(n as i128)?.checked_mul(bd)?.checked_mul(ad)?;
            let k3 = an.checked_mul(bd)?;
            let p = (n as i128).checked_mul(sd)?;
            Some((k1, k2, k3, p, sn))
        })();
        let nf = n as f64;
        let alpha_f = to_f64(alpha);
        let beta_f = to_f64(beta);
        Comparator {
            exact: model.exact,
            n,
            denom: model.denom,
            alpha: a,
            beta: b,
            sigma_sq: s,
            fast,
            scale_x: beta_f / (model.denom as f64 * nf),
            scale_w: alpha_f / (model.denom as f64 * model.sigma * nf.sqrt()),
        }
    }

    #[inline]
    fn value(&self, key: StateKey) -> f64 {
        self.scale_x * key.0 as f64 + self.scale_w * key.1 as f64
    }

    /// Ordering of the statistic at `key` relative to `r`.
    fn cmp(&self, key: StateKey, r: &Rational) -> Ordering {
        if !self.exact {
            return self.value(key).partial_cmp(&to_f64(r)).unwrap_or(Ordering::Equal);
        }
        if let Some((k1, k2, k3, p, q)) = self.fast {
            let parts = (|| {
                let rn = r.numer().to_i128()?;
                let rd = r.denom().to_i128()?;
                let a = k1.checked_mul(rd)?.checked_mul(key.0 as i128)?.checked_sub(rn.checked_mul(k2)?)?;
                let b = k3.checked_mul(rd)?.checked_mul(key.1 as i128)?;
                Some((a, b))
            })();
            if let Some((a, b)) = parts {
                return int_surd_sign(a, b, p, q);
            }
        }
        self.cmp_big(key, r)
    }

    fn cmp_big(&self, key: StateKey, r: &Rational) -> Ordering {
        let d = BigInt::from(self.denom);
        let n = BigInt::from(self.n);
        let rational = Rational::new(&self.beta.num * BigInt::from(key.0), &self.beta.den * &d * &n) - r;
        let coeff = Rational::new(&self.alpha.num * BigInt::from(key.1), &self.alpha.den * &d);
        let radicand = Rational::new(self.sigma_sq.den.clone(), &self.sigma_sq.num * &n);
        surd_sign(&rational, &coeff, &radicand)
    }
}

/// How W is compensated at each step.
#[derive(Clone, Debug)]
enum Compensator {
    /// Mean of the law actually used.
    LawMean,
    /// Mean selected by the switching rule from the running statistic.
    Rule { variant: Variant, rule: Box<ExactSwitchRule> },
}

/// The reachable-state structure for one statistic and horizon.
#[derive(Clone, Debug)]
pub struct DpLattice {
    model: LatticeModel,
    n: usize,
    keep_x: bool,
    keep_w: bool,
    comp: Compensator,
    stat_cmp: Comparator,
    /// Comparator for the unscaled statistic driving the switching rule.
    rule_cmp: Comparator,
    thresholds: Vec<Option<Rational>>,
    layers: Vec<Vec<StateKey>>,
}

impl DpLattice {
    /// Statistic bookkeeping for horizon `n` with only the root layer.
    fn shell(model: &LatticeModel, stat: Statistic, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadParameters("horizon n must be at least 1".into()));
        }
        let one = Rational::one();
        let zero = Rational::zero();
        let (alpha, beta, comp) = match stat {
            Statistic::Clt => (one.clone(), one.clone(), Compensator::LawMean),
            Statistic::Deviation => (one.clone(), zero, Compensator::LawMean),
            Statistic::Lln => (zero, one.clone(), Compensator::LawMean),
            Statistic::Scaled { alpha, beta } => {
                if !(alpha > 0.0) || !(beta >= 0.0) {
                    return Err(Error::BadParameters(format!(
                        "scaled statistic needs alpha > 0 and beta >= 0, got ({alpha}, {beta})"
                    )));
                }
                (rationalize(alpha, "alpha")?, rationalize(beta, "beta")?, Compensator::LawMean)
            }
            Statistic::Special { center } | Statistic::Tilde { center } => {
                let variant = if matches!(stat, Statistic::Special { .. }) { Variant::M } else { Variant::Tilde };
                let rule = ExactSwitchRule { center: ExactCenter::from_f64(center)?, interval: model.interval.clone() };
                (one.clone(), one.clone(), Compensator::Rule { variant, rule: Box::new(rule) })
            }
        };
        let keep_x = !beta.is_zero();
        let keep_w = !alpha.is_zero();
        let stat_cmp = Comparator::new(model, n, &alpha, &beta);
        let rule_cmp = Comparator::new(model, n, &one, &one);
        let thresholds = match &comp {
            Compensator::Rule { rule, .. } => (1..=n).map(|m| rule.threshold(m, n)).collect(),
            Compensator::LawMean => vec![None; n],
        };
        Ok(DpLattice {
            model: model.clone(),
            n,
            keep_x,
            keep_w,
            comp,
            stat_cmp,
            rule_cmp,
            thresholds,
            layers: vec![vec![(0, 0)]],
        })
    }

    pub fn build(model: &LatticeModel, stat: Statistic, n: usize, cfg: &DpConfig) -> Result<Self> {
        let cap = cfg.horizon_cap.unwrap_or_else(|| stat.default_horizon_cap());
        if n > cap {
            return Err(Error::HorizonCap { n, cap });
        }
        let mut lattice = Self::shell(model, stat, n)?;
        for m in 1..=n {
            let prev = &lattice.layers[m - 1];
            let mut next: Vec<StateKey> = prev
                .par_iter()
                .flat_map_iter(|&key| {
                    let mut out = Vec::new();
                    lattice.for_each_successor(m, key, |_, _, s| out.push(s));
                    out
                })
                .collect();
            next.par_sort_unstable();
            next.dedup();
            if next.len() > cfg.state_cap {
                return Err(Error::StateExplosion { states: next.len(), cap: cfg.state_cap, step: m });
            }
            lattice.layers.push(next);
        }
        Ok(lattice)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn layer(&self, m: usize) -> &[StateKey] {
        &self.layers[m]
    }

    pub fn total_states(&self) -> usize {
        self.layers.iter().map(Vec::len).sum()
    }

    pub fn max_layer(&self) -> usize {
        self.layers.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_exact(&self) -> bool {
        self.model.exact
    }

    /// Float value of the optimized statistic at `key`.
    pub fn statistic_value(&self, key: StateKey) -> f64 {
        self.stat_cmp.value(key)
    }

    /// Ordering of the optimized statistic at `key` relative to `r`.
    pub fn statistic_cmp(&self, key: StateKey, r: &Rational) -> Ordering {
        self.stat_cmp.cmp(key, r)
    }

    /// Whether the rule (if any) picks the upper mean at step `m` from `key`.
    fn rule_mean(&self, m: usize, key: StateKey) -> Option<i64> {
        let Compensator::Rule { variant, rule } = &self.comp else {
            return None;
        };
        let upper = rule.pick_upper(*variant, m, self.n, |r| self.rule_cmp.cmp(key, r));
        Some(if upper { self.model.hi_int } else { self.model.lo_int })
    }

    /// Float mean the rule selects at step `m`, if the statistic has a rule.
    pub fn rule_mean_f64(&self, m: usize, key: StateKey) -> Option<f64> {
        self.rule_mean(m, key).map(|_| {
            let Compensator::Rule { variant, rule } = &self.comp else { unreachable!() };
            let upper = rule.pick_upper(*variant, m, self.n, |r| self.rule_cmp.cmp(key, r));
            if upper {
                to_f64(&rule.interval.mu_upper)
            } else {
                to_f64(&rule.interval.mu_lower)
            }
        })
    }

    /// Band indicator `|M - thr_m| <= δ` for the rule's statistic.
    fn in_band(&self, m: usize, key: StateKey, delta: &Rational) -> bool {
        let Some(Some(thr)) = self.thresholds.get(m - 1) else {
            return false;
        };
        let lo = thr - delta;
        let hi = thr + delta;
        self.rule_cmp.cmp(key, &lo) != Ordering::Less && self.rule_cmp.cmp(key, &hi) != Ordering::Greater
    }

    #[inline]
    fn project(&self, x: i64, w: i64) -> StateKey {
        (if self.keep_x { x } else { 0 }, if self.keep_w { w } else { 0 })
    }

    /// Calls `f(law, outcome, next_state)` for each transition out of `key` at step `m`.
    #[inline]
    fn for_each_successor(&self, m: usize, key: StateKey, mut f: impl FnMut(usize, usize, StateKey)) {
        let rule_mu = self.rule_mean(m, key);
        let model = &self.model;
        for q in 0..model.probs.len() {
            let mu = rule_mu.unwrap_or(model.mean_int[q]);
            for (j, &x) in model.x_int.iter().enumerate() {
                f(q, j, self.project(key.0 + x, key.1 + x - mu));
            }
        }
    }

    fn index_of(&self, m: usize, key: StateKey) -> usize {
        self.layers[m].binary_search(&key).expect("successor in next layer")
    }

    /// Exact or float terminal values at layer `n`.
    fn terminal_values<V: DpValue>(&self, phi: &TerminalFunction) -> Result<Vec<V>> {
        let exact = phi.exact_form();
        let layer = &self.layers[self.n];
        match exact {
            Some(form) => Ok(layer.par_iter().map(|&k| V::from_rational(&self.eval_exact(&form, k))).collect()),
            None => layer.iter().map(|&k| V::from_f64(phi.eval(self.statistic_value(k)))).collect(),
        }
    }

    fn eval_exact(&self, form: &ExactTerminal, key: StateKey) -> Rational {
        form.eval(|r| self.stat_cmp.cmp(key, r))
    }

    /// Float terminal value at a layer-`n` state (used by Monte Carlo).
    fn terminal_f64(&self, phi: &TerminalFunction, form: &Option<ExactTerminal>, key: StateKey) -> f64 {
        match form {
            Some(f) => to_f64(&self.eval_exact(f, key)),
            None => phi.eval(self.statistic_value(key)),
        }
    }

    /// Backward recursion from `values` at layer `top` down to layer 0.
    pub fn backward<V: DpValue>(&self, top: usize, mut values: Vec<V>, sense: Sense) -> V {
        let probs: Vec<Vec<V>> = self.model.probs.iter().map(|p| p.iter().map(V::from_rational).collect()).collect();
        let nq = probs.len();
        let nj = self.model.x_int.len();
        for m in (1..=top).rev() {
            values = self.layers[m - 1]
                .par_iter()
                .map(|&key| {
                    let mut succ = vec![0usize; nq * nj];
                    self.for_each_successor(m, key, |q, j, s| succ[q * nj + j] = self.index_of(m, s));
                    let mut best: Option<V> = None;
                    for (q, pq) in probs.iter().enumerate() {
                        let mut acc = V::zero();
                        for (j, p) in pq.iter().enumerate() {
                            acc.add_product(p, &values[succ[q * nj + j]]);
                        }
                        let better = match &best {
                            None => true,
                            Some(b) => match sense {
                                Sense::Sup => acc > *b,
                                Sense::Inf => acc < *b,
                            },
                        };
                        if better {
                            best = Some(acc);
                        }
                    }
                    best.expect("nonempty measure set")
                })
                .collect();
        }
        values.into_iter().next().expect("root state")
    }

    /// Worst-case expectation of `φ(statistic)` at horizon `n`.
    pub fn solve<V: DpValue>(&self, phi: &TerminalFunction, sense: Sense) -> Result<V> {
        let terminal = self.terminal_values::<V>(phi)?;
        Ok(self.backward(self.n, terminal, sense))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DpOutcome<V> {
    pub value: V,
    pub states: usize,
    pub max_layer: usize,
    pub exact: bool,
}

/// Builds the lattice and runs the backward recursion.
pub fn worst_case_value<V: DpValue>(
    model: &LatticeModel,
    stat: Statistic,
    phi: &TerminalFunction,
    n: usize,
    sense: Sense,
    cfg: &DpConfig,
) -> Result<DpOutcome<V>> {
    let lattice = DpLattice::build(model, stat, n, cfg)?;
    let value = lattice.solve::<V>(phi, sense)?;
    Ok(DpOutcome { value, states: lattice.total_states(), max_layer: lattice.max_layer(), exact: lattice.is_exact() })
}

fn run(set: &MeasureSet, stat: Statistic, phi: &TerminalFunction, n: usize, sense: Sense) -> Result<f64> {
    let model = LatticeModel::new(set)?;
    Ok(worst_case_value::<f64>(&model, stat, phi, n, sense, &DpConfig::default())?.value)
}

pub fn sup_dp_clt(set: &MeasureSet, phi: &TerminalFunction, n: usize) -> Result<f64> {
    run(set, Statistic::Clt, phi, n, Sense::Sup)
}

pub fn sup_dp_special(set: &MeasureSet, phi: &TerminalFunction, n: usize, rule: &SwitchRule) -> Result<f64> {
    run(set, Statistic::Special { center: rule.center }, phi, n, Sense::Sup)
}

pub fn inf_dp_special_tilde(set: &MeasureSet, phi: &TerminalFunction, n: usize, rule: &SwitchRule) -> Result<f64> {
    run(set, Statistic::Tilde { center: rule.center }, phi, n, Sense::Inf)
}

pub fn sup_dp_deviation(set: &MeasureSet, phi: &TerminalFunction, n: usize) -> Result<f64> {
    run(set, Statistic::Deviation, phi, n, Sense::Sup)
}

pub fn sup_dp_lln(set: &MeasureSet, phi: &TerminalFunction, n: usize) -> Result<f64> {
    run(set, Statistic::Lln, phi, n, Sense::Sup)
}

pub fn sup_dp_scaled(set: &MeasureSet, phi: &TerminalFunction, n: usize, alpha: f64, beta: f64) -> Result<f64> {
    run(set, Statistic::Scaled { alpha, beta }, phi, n, Sense::Sup)
}

/// A history-dependent choice of law.
#[derive(Clone)]
pub enum DriftPolicy {
    Constant(usize),
    /// Upper-mean law while the running statistic is at or below the
    /// switching threshold for `center`, lower-mean law otherwise.
    Threshold {
        center: f64,
    },
    /// The opposite selection to `Threshold`.
    ReverseThreshold {
        center: f64,
    },
    /// Upper-mean law on odd steps, lower-mean law on even steps.
    Alternating,
    /// `f(m, running statistic) -> law index`.
    Custom(Arc<dyn Fn(usize, f64) -> usize + Send + Sync>),
}

impl Debug for DriftPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DriftPolicy::Constant(i) => write!(f, "Constant({i})"),
            DriftPolicy::Threshold { center } => write!(f, "Threshold {{ center: {center} }}"),
            DriftPolicy::ReverseThreshold { center } => write!(f, "ReverseThreshold {{ center: {center} }}"),
            DriftPolicy::Alternating => write!(f, "Alternating"),
            DriftPolicy::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl DriftPolicy {
    /// The five built-in policies for a two-law set.
    pub fn builtins(center: f64) -> Vec<DriftPolicy> {
        vec![
            DriftPolicy::Constant(0),
            DriftPolicy::Constant(1),
            DriftPolicy::Threshold { center },
            DriftPolicy::ReverseThreshold { center },
            DriftPolicy::Alternating,
        ]
    }

    pub fn name(&self) -> String {
        match self {
            DriftPolicy::Constant(i) => format!("constant_{i}"),
            DriftPolicy::Threshold { .. } => "threshold".into(),
            DriftPolicy::ReverseThreshold { .. } => "reverse_threshold".into(),
            DriftPolicy::Alternating => "alternating".into(),
            DriftPolicy::Custom(_) => "custom".into(),
        }
    }

    fn choose(&self, model: &LatticeModel, m: usize, n: usize, stat: f64) -> Result<usize> {
        let iv = model.interval();
        let d = to_f64(&iv.mu_lower) + to_f64(&iv.mu_upper);
        let thr = |center: f64| {
            if center.is_infinite() {
                center
            } else {
                -(d / 2.0) * (1.0 - (m as f64 - 1.0) / n as f64) + center
            }
        };
        self.pick(m, stat, thr, model.argmax_mean(), model.argmin_mean(), model.num_laws())
    }

    /// Law index at step `m` given the running statistic, the switching
    /// threshold as a function of the center, and the extreme-mean laws.
    pub fn pick(
        &self,
        m: usize,
        stat: f64,
        threshold: impl Fn(f64) -> f64,
        upper_law: usize,
        lower_law: usize,
        num_laws: usize,
    ) -> Result<usize> {
        let law = match self {
            DriftPolicy::Constant(i) => *i,
            DriftPolicy::Threshold { center } => {
                if stat <= threshold(*center) {
                    upper_law
                } else {
                    lower_law
                }
            }
            DriftPolicy::ReverseThreshold { center } => {
                if stat <= threshold(*center) {
                    lower_law
                } else {
                    upper_law
                }
            }
            DriftPolicy::Alternating => {
                if m % 2 == 1 {
                    upper_law
                } else {
                    lower_law
                }
            }
            DriftPolicy::Custom(f) => f(m, stat),
        };
        if law >= num_laws {
            return Err(Error::BadParameters(format!("policy chose law {law} of {num_laws}")));
        }
        Ok(law)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub paths: usize,
}

/// Monte Carlo value of `E_Q[φ(statistic)]` for the law `Q` induced by `policy`.
///
/// Path `i` draws from its own ChaCha8 stream `(seed, i)`, and the reduction is
/// sequential, so results are reproducible regardless of thread count.
pub fn mc_policy_value(
    model: &LatticeModel,
    policy: &DriftPolicy,
    phi: &TerminalFunction,
    stat: Statistic,
    n: usize,
    paths: usize,
    seed: u64,
) -> Result<McEstimate> {
    if paths == 0 {
        return Err(Error::BadParameters("need at least one path".into()));
    }
    // Reuses the lattice bookkeeping for exact statistic evaluation; no layers are enumerated.
    let lattice = DpLattice::shell(model, stat, n)?;
    let form = phi.exact_form();
    let cumulative: Vec<Vec<f64>> = model
        .probs_f64
        .iter()
        .map(|p| {
            p.iter()
                .scan(0.0, |acc, &x| {
                    *acc += x;
                    Some(*acc)
                })
                .collect()
        })
        .collect();
    let samples: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut key: StateKey = (0, 0);
            for m in 1..=n {
                let running = lattice.rule_cmp.value(key);
                let law = policy.choose(model, m, n, running)?;
                let u: f64 = rng.random();
                let cum = &cumulative[law];
                let j = cum.iter().position(|&c| u < c).unwrap_or(cum.len() - 1);
                let x = model.x_int[j];
                let mu = lattice.rule_mean(m, key).unwrap_or(model.mean_int[law]);
                key = (key.0 + x, key.1 + x - mu);
            }
            let key = lattice.project(key.0, key.1);
            Ok(lattice.terminal_f64(phi, &form, key))
        })
        .collect::<Result<Vec<f64>>>()?;
    let nf = paths as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = if paths > 1 { samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0) } else { 0.0 };
    Ok(McEstimate { estimate: mean, stderr: (var / nf).sqrt(), paths })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub dp_value: f64,
    pub gap: f64,
    /// Best stationary product law `q^⊗n`; exploratory only.
    pub product_value: f64,
    pub states: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runtime_ms: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub statistic: Statistic,
    pub sense: Sense,
    pub limit_reference: f64,
    pub rows: Vec<ConvergenceRow>,
    /// False when some gap exceeds the gap at a smaller `n`.
    pub monotone_gaps: bool,
}

/// DP values and gaps to `limit_reference` for each horizon in `n_list`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_report(
    model: &LatticeModel,
    stat: Statistic,
    sense: Sense,
    phi: &TerminalFunction,
    n_list: &[usize],
    limit_reference: f64,
    cfg: &DpConfig,
    timings: bool,
) -> Result<ConvergenceReport> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::BadParameters("n_list must be strictly increasing".into()));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let start = Instant::now();
        let out = worst_case_value::<f64>(model, stat, phi, n, sense, cfg)?;
        let elapsed = start.elapsed().as_secs_f64() * 1e3;
        let mut product: Option<f64> = None;
        for law in 0..model.num_laws() {
            let v = worst_case_value::<f64>(&model.restricted(law), stat, phi, n, sense, cfg)?.value;
            product = Some(match (product, sense) {
                (None, _) => v,
                (Some(p), Sense::Sup) => p.max(v),
                (Some(p), Sense::Inf) => p.min(v),
            });
        }
        rows.push(ConvergenceRow {
            n,
            dp_value: out.value,
            gap: (out.value - limit_reference).abs(),
            product_value: product.unwrap_or(f64::NAN),
            states: out.states,
            runtime_ms: timings.then_some(elapsed),
        });
    }
    let monotone_gaps = rows.windows(2).all(|w| w[1].gap <= w[0].gap);
    Ok(ConvergenceReport { statistic: stat, sense, limit_reference, rows, monotone_gaps })
}

/// Finite-n value of `(1/n)Σ_m sup_Q E_Q[|E_Q[X_m|G_{m-1}] - μ̃_m| · I{|M̃_{m-1} - thr_m| ≤ δ}]`.
///
/// Each summand is its own worst-case problem: a supremum over laws up to
/// step `m-1` of a terminal payoff that already maximizes over the law at step `m`.
pub fn condition1_diagnostic(set: &MeasureSet, n: usize, delta: f64, rule: &SwitchRule) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::BadParameters(format!("delta must be positive, got {delta}")));
    }
    let model = LatticeModel::new(set)?;
    let stat = Statistic::Tilde { center: rule.center };
    let lattice = DpLattice::build(&model, stat, n, &DpConfig::default())?;
    let delta_r = rationalize(delta, "delta")?;
    let total: f64 = (1..=n)
        .map(|m| {
            let terminal: Vec<f64> = lattice.layers[m - 1]
                .iter()
                .map(|&key| {
                    if !lattice.in_band(m, key, &delta_r) {
                        return 0.0;
                    }
                    let mu = lattice.rule_mean_f64(m, key).expect("rule statistic");
                    model.means_f64.iter().fold(0.0f64, |acc, e| acc.max((e - mu).abs()))
                })
                .collect();
            lattice.backward(m - 1, terminal, Sense::Sup)
        })
        .sum();
    Ok(total / n as f64)
}

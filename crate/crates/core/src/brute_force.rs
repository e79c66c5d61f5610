//! Exhaustive enumeration over the full history tree, without state merging.
//!
//! Used as an independent oracle for the lattice dynamic program at small `n`.
//! Statistic values are rebuilt from exact prefix sums at every node.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::{rationalize, Rational, SurdPoint};
use crate::measures::{ExactInterval, MeasureSet, DEFAULT_TOL_VAR};
use crate::statistics::{ExactCenter, ExactStatState, ExactSwitchRule, Variant};
use crate::terminal::TerminalFunction;
use crate::worst_case::{Sense, Statistic};

/// Largest horizon the tree walk accepts (`(|L|·|Ω̄|)^n` leaves).
pub const MAX_TREE_HORIZON: usize = 8;

struct Tree<'a> {
    set: &'a MeasureSet,
    interval: ExactInterval,
    means: Vec<Rational>,
    n: usize,
    alpha: Rational,
    beta: Rational,
    rule: Option<(Variant, ExactSwitchRule)>,
    phi: &'a TerminalFunction,
    sense: Sense,
}

/// Running sums along one history.
#[derive(Clone)]
struct Node {
    sum_x: Rational,
    sum_dev: Rational,
    /// Rule-driven statistic, when the statistic has a switching rule.
    rule_state: Option<ExactStatState>,
}

impl Tree<'_> {
    fn leaf(&self, node: &Node) -> Result<Rational> {
        let n = Rational::from_integer((self.n as i64).into());
        let point = SurdPoint {
            rational: &self.beta * &node.sum_x / &n,
            coeff: &self.alpha * &node.sum_dev,
            radicand: (&self.interval.sigma_sq * &n).recip(),
        };
        self.phi.eval_exact(&point).ok_or(Error::NotExact)
    }

    fn walk(&self, depth: usize, node: &Node) -> Result<Rational> {
        if depth == self.n {
            return self.leaf(node);
        }
        let values = self.set.values();
        // under a switching rule the child statistic does not depend on the law
        let shared = match (&self.rule, &node.rule_state) {
            (Some((_, rule)), Some(state)) => Some(
                values
                    .iter()
                    .map(|x| {
                        let next = state.update(x, rule)?;
                        let child = Node { sum_x: &node.sum_x + x, sum_dev: next.v.clone(), rule_state: Some(next) };
                        self.walk(depth + 1, &child)
                    })
                    .collect::<Result<Vec<Rational>>>()?,
            ),
            _ => None,
        };
        let mut best: Option<Rational> = None;
        for (q, law) in self.set.laws().iter().enumerate() {
            let mut total = Rational::zero();
            for (j, p) in law.probs().iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                let v = match &shared {
                    Some(vals) => vals[j].clone(),
                    None => {
                        let x = &values[j];
                        let child = Node {
                            sum_x: &node.sum_x + x,
                            sum_dev: &node.sum_dev + x - &self.means[q],
                            rule_state: None,
                        };
                        self.walk(depth + 1, &child)?
                    }
                };
                total += p * v;
            }
            best = Some(match best {
                None => total,
                Some(b) => match self.sense {
                    Sense::Sup if total > b => total,
                    Sense::Inf if total < b => total,
                    _ => b,
                },
            });
        }
        Ok(best.expect("nonempty measure set"))
    }
}

/// Exact `sup_Q` (or `inf_Q`) of `E_Q[φ(statistic)]` by walking every history.
pub fn brute_force_value(
    set: &MeasureSet,
    stat: Statistic,
    phi: &TerminalFunction,
    n: usize,
    sense: Sense,
) -> Result<Rational> {
    if n == 0 || n > MAX_TREE_HORIZON {
        return Err(Error::HorizonCap { n, cap: MAX_TREE_HORIZON });
    }
    let PathContext { interval, means, alpha, beta, rule } = PathContext::new(set, stat)?;
    let root = Node {
        sum_x: Rational::zero(),
        sum_dev: Rational::zero(),
        rule_state: rule.as_ref().map(|(v, _)| ExactStatState::new(n, *v)),
    };
    let tree = Tree { set, means, interval, n, alpha, beta, rule, phi, sense };
    tree.walk(0, &root)
}

/// Enumerates every deterministic policy (a law for each non-terminal history)
/// explicitly and every outcome path under it. Feasible only for `n <= 3`.
pub fn policy_enumeration_value(
    set: &MeasureSet,
    stat: Statistic,
    phi: &TerminalFunction,
    n: usize,
    sense: Sense,
) -> Result<Rational> {
    if n == 0 || n > 3 {
        return Err(Error::HorizonCap { n, cap: 3 });
    }
    let k = set.values().len();
    let nodes: usize = (0..n).map(|d| k.pow(d as u32)).sum();
    let laws = set.len();
    let total_policies = laws.pow(nodes as u32);
    let ctx = PathContext::new(set, stat)?;
    let paths = k.pow(n as u32);
    let seqs = laws.pow(n as u32);
    // probability times payoff of each path under each law sequence
    let mut table = vec![Rational::zero(); paths * seqs];
    for path in 0..paths {
        let outcomes = digits(path, k, n);
        let xs: Vec<Rational> = outcomes.iter().map(|&j| set.values()[j].clone()).collect();
        for seq in 0..seqs {
            let chosen = digits(seq, laws, n);
            let prob =
                outcomes.iter().zip(&chosen).fold(Rational::one(), |acc, (&j, &q)| acc * &set.laws()[q].probs()[j]);
            if !prob.is_zero() {
                table[path * seqs + seq] = prob * ctx.payoff(phi, &xs, &chosen)?;
            }
        }
    }
    let mut best: Option<Rational> = None;
    let mut policy = vec![0usize; nodes];
    for code in 0..total_policies {
        // policy[node] for nodes numbered breadth-first
        let mut c = code;
        for slot in policy.iter_mut() {
            *slot = c % laws;
            c /= laws;
        }
        let mut v = Rational::zero();
        for path in 0..paths {
            let outcomes = digits(path, k, n);
            let (mut offset, mut index_in_level, mut seq) = (0, 0, 0);
            for (d, &j) in outcomes.iter().enumerate() {
                seq = seq * laws + policy[offset + index_in_level];
                offset += k.pow(d as u32);
                index_in_level = index_in_level * k + j;
            }
            v += &table[path * seqs + seq];
        }
        best = Some(match best {
            None => v,
            Some(b) => match sense {
                Sense::Sup if v > b => v,
                Sense::Inf if v < b => v,
                _ => b,
            },
        });
    }
    Ok(best.expect("at least one policy"))
}

/// Base-`base` digits of `code`, most significant first.
fn digits(code: usize, base: usize, len: usize) -> Vec<usize> {
    (0..len).map(|d| (code / base.pow((len - 1 - d) as u32)) % base).collect()
}

/// Per-path statistic evaluation shared by every policy.
struct PathContext {
    interval: ExactInterval,
    means: Vec<Rational>,
    alpha: Rational,
    beta: Rational,
    rule: Option<(Variant, ExactSwitchRule)>,
}

impl PathContext {
    fn new(set: &MeasureSet, stat: Statistic) -> Result<Self> {
        let interval = set.exact_interval(DEFAULT_TOL_VAR)?;
        let (one, zero) = (Rational::one(), Rational::zero());
        let (alpha, beta, rule) = match stat {
            Statistic::Clt => (one.clone(), one, None),
            Statistic::Deviation => (one, zero, None),
            Statistic::Lln => (zero, one, None),
            Statistic::Scaled { alpha, beta } => (rationalize(alpha, "alpha")?, rationalize(beta, "beta")?, None),
            Statistic::Special { center } | Statistic::Tilde { center } => {
                let variant = if matches!(stat, Statistic::Special { .. }) { Variant::M } else { Variant::Tilde };
                let rule = ExactSwitchRule { center: ExactCenter::from_f64(center)?, interval: interval.clone() };
                (one.clone(), one, Some((variant, rule)))
            }
        };
        Ok(PathContext { interval, means: set.means(), alpha, beta, rule })
    }

    fn payoff(&self, phi: &TerminalFunction, xs: &[Rational], laws: &[usize]) -> Result<Rational> {
        let n = xs.len();
        let nr = Rational::from_integer((n as i64).into());
        let sum_dev = match &self.rule {
            Some((variant, rule)) => {
                let mut st = ExactStatState::new(n, *variant);
                for x in xs {
                    st = st.update(x, rule)?;
                }
                st.v
            }
            None => xs.iter().zip(laws).fold(Rational::zero(), |acc, (x, &q)| acc + x - &self.means[q]),
        };
        let sum_x = xs.iter().fold(Rational::zero(), |acc, x| acc + x);
        let point = SurdPoint {
            rational: &self.beta * sum_x / &nr,
            coeff: &self.alpha * sum_dev,
            radicand: (&self.interval.sigma_sq * &nr).recip(),
        };
        phi.eval_exact(&point).ok_or(Error::NotExact)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::coin_example;

    #[test]
    fn tree_and_policy_enumeration_agree() {
        let set = coin_example(0.6, 0.3).unwrap();
        let phi = TerminalFunction::indicator(-1.0, 1.0).unwrap();
        for stat in
            [Statistic::Clt, Statistic::Special { center: 0.0 }, Statistic::Tilde { center: 0.0 }, Statistic::Lln]
        {
            for n in 1..=2 {
                for sense in [Sense::Sup, Sense::Inf] {
                    let tree = brute_force_value(&set, stat, &phi, n, sense).unwrap();
                    let pol = policy_enumeration_value(&set, stat, &phi, n, sense).unwrap();
                    assert_eq!(tree, pol, "{stat:?} n={n} {sense:?}");
                }
            }
        }
    }

    #[test]
    fn caps_and_exactness() {
        let set = coin_example(0.6, 0.3).unwrap();
        let phi = TerminalFunction::indicator(-1.0, 1.0).unwrap();
        assert!(brute_force_value(&set, Statistic::Clt, &phi, 9, Sense::Sup).is_err());
        let smooth = TerminalFunction::smoothed_indicator(-1.0, 1.0, 0.1).unwrap();
        assert!(matches!(brute_force_value(&set, Statistic::Clt, &smooth, 2, Sense::Sup), Err(Error::NotExact)));
    }
}

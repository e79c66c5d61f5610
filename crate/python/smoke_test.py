"""Smoke test for the ambiclt extension module.

Build and install first:
    pip install --no-build-isolation -e crates/python
"""

import math
from fractions import Fraction

import ambiclt


def phi(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


def main():
    # no ambiguity: the limit is a plain normal probability
    iv = ambiclt.AmbiguityInterval(0.0, 0.0)
    got = iv.indicator_limit(-1.0, 1.0)
    assert abs(got - (phi(1.0) - phi(-1.0))) < 1e-12, got

    iv = ambiclt.AmbiguityInterval(-0.3, 0.3)
    upper = iv.indicator_limit(-1.0, 1.0, "upper")
    lower = iv.indicator_limit(-1.0, 1.0, "lower")
    assert 0.0 <= lower < phi(1.0) - phi(-1.0) < upper <= 1.0, (lower, upper)

    coin = ambiclt.MeasureSet.coin(0.6, 0.3)
    assert len(coin) == 2
    assert coin.means == [0.3, -0.3]
    value, frac = coin.worst_case(3, theorem="special", exact=True)
    assert frac is not None and abs(float(Fraction(frac)) - value) < 1e-15
    est, se = coin.monte_carlo(3, policy="threshold", paths=20_000, seed=7)
    assert est <= value + 4.0 * se, (est, se, value)

    m = ambiclt.path_statistic([0.5, -0.2, 0.1, 0.4], -0.3, 0.3)
    trace = ambiclt.path_trace([0.5, -0.2, 0.1, 0.4], -0.3, 0.3)
    assert len(trace) == 4 and trace[-1][2] == m

    spec = ambiclt.TestSpec(kappa=0.0, alpha=0.05)
    a, b = spec.calibrate()
    assert abs(b - 1.959963984540054) < 1e-8 and abs(a + b) < 1e-12
    assert abs(spec.coverage(a, b) - 0.95) < 1e-9
    curve = spec.power_curve(a, b, [0.0, 1.0, 2.0, 4.0])
    probs = [p for _, p in curve]
    assert probs == sorted(probs, reverse=True), probs
    assert spec.accepts([0.1, -0.2, 0.05, 0.0], a, b)

    results = ambiclt.run_acceptance([1, 2, 3])
    assert all(passed for _, _, passed, _, _ in results), results
    print("smoke test passed")


if __name__ == "__main__":
    main()

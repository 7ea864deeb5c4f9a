"""Bundled instances and hand-built reference rules.

The reference rules are small closed-form two-priced rules with known
revenue. They double as regression fixtures and as feasible points that
any optimal LP solution must dominate.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .dist import AgentSpec, DiscreteTypeSpace, EqualRevenue, Exponential, Uniform, discretize
from .two_price import TwoPricedRule, utility_of_report

LARGE_CAPACITY = 1000.0
MATRIX_CAPACITIES = (0.05, 0.25, 1.0, LARGE_CAPACITY)
MATRIX_SIZES = (2, 3)


def matrix_distributions():
    return {"uniform": Uniform(0.0, 1.0), "equal_revenue": EqualRevenue(100.0),
            "exponential": Exponential(1.0)}


def instance_matrix():
    """Symmetric instances: three distributions, four capacities, two bidder counts.

    Yields ``(label, agents)``.
    """
    for name, d in matrix_distributions().items():
        for C in MATRIX_CAPACITIES:
            for n in MATRIX_SIZES:
                yield f"{name}-C{C:g}-n{n}", [AgentSpec(d, C)] * n


def asymmetric_instances():
    """Two-bidder instances with unequal capacities or unequal supports."""
    return [
        ("uniform-C0.2-C0.4", [AgentSpec(Uniform(0, 1), 0.2), AgentSpec(Uniform(0, 1), 0.4)]),
        ("uniform01-uniform02-C0.5", [AgentSpec(Uniform(0, 1), 0.5), AgentSpec(Uniform(0, 2), 0.5)]),
    ]


# -- reference rules ----------------------------------------------------------------


def two_type_rule() -> TwoPricedRule:
    """Types {3, 4}, capacity 2, exact rationals.

    BIC, yet the total winning probability falls from 5/6 to 2/3.
    """
    F = Fraction
    return TwoPricedRule(np.array([F(3), F(4)], dtype=object), np.array([F(1, 3), F(0)], dtype=object),
                         np.array([F(1, 2), F(2, 3)], dtype=object), 2)


def two_type_utilities(rule: TwoPricedRule | None = None) -> dict:
    """Utility of every (true type, report) pair of the two-type rule."""
    rule = rule or two_type_rule()
    return {(int(t), int(r)): utility_of_report(rule, t, r) for t in rule.grid for r in rule.grid}


def sell_always_rule(types: DiscreteTypeSpace, capacity: float) -> TwoPricedRule:
    """Always sell at value minus capacity."""
    k = len(types)
    return TwoPricedRule(types.values, np.zeros(k), np.ones(k), capacity)


def linear_rebate_rule(types: DiscreteTypeSpace, capacity: float, base: float = 0.6) -> TwoPricedRule:
    """``qc`` rising linearly from 0 at the lowest type, total ``min(qc + base, 1)``.

    The slope is ``base / capacity``, the largest that keeps the rule BIC
    while ``qv = base``.
    """
    v = types.values
    qc = base * (v - v[0]) / capacity
    q = np.minimum(qc + base, 1.0)
    return TwoPricedRule(v, q - qc, qc, capacity)


def risk_neutral_rule(types: DiscreteTypeSpace, price: float) -> TwoPricedRule:
    """Posted price charged in full: ``qv = 1`` at types at or above the price."""
    qv = (types.values >= price).astype(float)
    return TwoPricedRule(types.values, qv, np.zeros(len(types)), math.inf)


def posted_price_revenue(d, prices) -> np.ndarray:
    """Revenue ``p P(v >= p)`` of posting each price to one bidder."""
    p = np.asarray(prices, dtype=float)
    return p * (1.0 - np.asarray(d.left_cdf(p), dtype=float))


def monopoly_revenue(d, grid: int = 10_001) -> float:
    """Best posted-price revenue over a value grid (the risk-neutral optimum for regular d)."""
    hi = d.upper_support if math.isfinite(d.upper_support) else float(d.quantile(1 - 1e-9))
    p = np.linspace(d.lower_support, hi, grid)
    return float(np.max(posted_price_revenue(d, p)))


def equal_revenue_types(h: float, k: int = 10_000, scheme: str = "mean") -> DiscreteTypeSpace:
    return discretize(EqualRevenue(h), k, scheme)

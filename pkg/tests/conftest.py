import numpy as np
import pytest

from capauct.dist import AgentSpec, DiscreteTypeSpace, EqualRevenue, Exponential, Uniform
from capauct.optlp import optimal_two_priced
from capauct.two_price import TwoPricedRule, posted_price_rule


def random_bic_rule(types: DiscreteTypeSpace, capacity: float, rng) -> TwoPricedRule:
    """A random convex combination of BIC rules (IC constraints are linear).

    Ingredients: posted prices, selling always at value minus capacity, and the
    LP optimum for random type masses.
    """
    v = types.values
    parts = [posted_price_rule(v, float(rng.choice(v)), capacity) for _ in range(rng.integers(1, 4))]
    if rng.random() < 0.5:
        parts.append(TwoPricedRule(v, np.zeros(v.size), np.ones(v.size), capacity))
    masses = rng.dirichlet(np.ones(v.size))
    parts.append(optimal_two_priced(AgentSpec(DiscreteTypeSpace(v, masses), capacity)).rule)
    w = rng.dirichlet(np.ones(len(parts)))
    qv = sum(a * r.qv for a, r in zip(w, parts))
    qc = sum(a * r.qc for a, r in zip(w, parts))
    return TwoPricedRule(v, qv, qc, capacity)


@pytest.fixture
def builtin_distributions():
    return {"uniform": Uniform(0.0, 1.0), "equal_revenue": EqualRevenue(1000.0),
            "exponential": Exponential(1.0)}


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE_LINES[number])
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])

import math

import numpy as np
import pytest

from capauct.dist import AgentSpec, DiscreteTypeSpace, EqualRevenue, Exponential, Uniform, discretize
from capauct.errors import TooLarge
from capauct.instances import linear_rebate_rule, monopoly_revenue, sell_always_rule
from capauct.optlp import (build_multi_agent_expost_lp, build_single_agent_lp, optimal_two_priced,
                           rules_pass_bic, solve_with_row_generation)
from capauct.simplex import max_violation, solve_lp
from capauct.two_price import check_bic, expected_payment, payment_upper_bound, posted_price_rule

from oracles import brute_force_two_priced, deterministic_dsic_optimum


def single(values, masses, C):
    return AgentSpec(DiscreteTypeSpace(np.asarray(values, float), np.asarray(masses, float)), C)


# -- single agent ------------------------------------------------------------------------

def test_single_type_extracts_full_surplus():
    res = optimal_two_priced(single([1.0], [1.0], 0.5))
    assert res.revenue == pytest.approx(1.0)
    assert res.rule.qv[0] == pytest.approx(1.0) and res.rule.qc[0] == pytest.approx(0.0)


@pytest.mark.parametrize("C", [0.01, 0.5, 3.0, math.inf])
def test_single_type_any_capacity(C):
    assert optimal_two_priced(single([1.0], [1.0], C)).revenue == pytest.approx(1.0)


def test_lp_shape_is_quadratic_in_types():
    lp = build_single_agent_lp(AgentSpec(discretize(Uniform(0, 1), 7), 0.3))
    assert lp.shape == (7 * 6 + 7, 14)
    lp_inf = build_single_agent_lp(AgentSpec(discretize(Uniform(0, 1), 7), math.inf))
    assert lp_inf.shape == (7 * 6, 14)


def test_equal_revenue_small_capacity_reaches_log_h():
    t = discretize(EqualRevenue(1000), 100, "mean")
    res = optimal_two_priced(AgentSpec(t, 1.0))
    assert res.revenue >= math.log(1000) - 0.2
    assert res.revenue >= expected_payment(sell_always_rule(t, 1.0), t.masses) - 1e-6


def test_equal_revenue_large_capacity_beats_linear_rebate():
    t = discretize(EqualRevenue(1000), 100, "mean")
    res = optimal_two_priced(AgentSpec(t, 1000.0))
    assert res.revenue >= 1.4
    rebate = linear_rebate_rule(t, 1000.0)
    assert check_bic(rebate).ok
    assert res.revenue >= expected_payment(rebate, t.masses) - 1e-6


def test_uniform_risk_neutral_limit_is_monopoly():
    res = optimal_two_priced(AgentSpec(discretize(Uniform(0, 1), 50), math.inf))
    assert res.revenue == pytest.approx(0.25, abs=0.02)


def test_uniform_tiny_capacity_sells_at_value_minus_capacity():
    res = optimal_two_priced(AgentSpec(discretize(Uniform(0, 1), 50), 0.05))
    assert res.revenue == pytest.approx(0.45125, abs=0.03)


def test_output_passes_bic_and_matches_objective():
    for C in (0.1, 0.4, math.inf):
        t = discretize(Exponential(1.0), 15, "mean")
        res = optimal_two_priced(AgentSpec(t, C))
        assert rules_pass_bic(res)
        assert expected_payment(res.rule, t.masses) == pytest.approx(res.revenue, abs=1e-7)
        assert max_violation(res.lp, res.solution.assignment) <= 1e-7


def test_row_generation_matches_full_solve():
    lp = build_single_agent_lp(AgentSpec(discretize(Uniform(0, 1), 10), 0.2))
    full = solve_lp(lp)
    lazy = solve_with_row_generation(lp, core=range(90, 100))
    assert lazy.objective_value == pytest.approx(full.objective_value, abs=1e-9)
    assert max_violation(lp, lazy.assignment) <= 1e-9
    assert solve_with_row_generation(lp, core=[]).objective_value == pytest.approx(full.objective_value)


def test_revenue_monotone_in_capacity():
    t = discretize(Uniform(0, 1), 12)
    revs = [optimal_two_priced(AgentSpec(t, C)).revenue for C in (0.05, 0.1, 0.25, 0.5, 1.0)]
    assert all(a >= b - 1e-9 for a, b in zip(revs, revs[1:]))


def test_dominates_posted_prices_and_bound_dominates_it():
    t = discretize(Uniform(0, 1), 15)
    for C in (0.1, 0.3):
        res = optimal_two_priced(AgentSpec(t, C))
        best_posted = max(expected_payment(posted_price_rule(t.values, p, C), t.masses) for p in t.values)
        assert res.revenue >= best_posted - 1e-9
        assert payment_upper_bound(res.rule, t)[0] >= res.revenue - 1e-9


def test_three_approximation_single_agent():
    for d in (Uniform(0, 1), Exponential(1.0)):
        t = discretize(d, 20, "mean")
        for C in (0.05, 0.25, 1.0):
            opt = optimal_two_priced(AgentSpec(t, C)).revenue
            sell = expected_payment(sell_always_rule(t, C), t.masses)
            assert opt <= 3 * max(monopoly_revenue(d), sell) + 1e-6


@pytest.mark.parametrize("values,masses,C", [
    ([1.0, 2.0], [0.5, 0.5], 0.5),
    ([1.0, 3.0], [0.7, 0.3], 1.0),
    ([0.5, 1.0, 2.0], [0.2, 0.5, 0.3], 0.4),
    ([1.0, 2.0, 4.0], [1 / 3, 1 / 3, 1 / 3], 1.5),
])
def test_brute_force_never_beats_lp(values, masses, C):
    lp_rev = optimal_two_priced(single(values, masses, C)).revenue
    bf = brute_force_two_priced(values, masses, C)
    assert bf <= lp_rev + 1e-9
    assert lp_rev - bf <= 3 * (1 / 20) * max(values)


# -- several agents ----------------------------------------------------------------------

def test_two_single_type_agents():
    a = single([1.0], [1.0], math.inf)
    assert optimal_two_priced([a, a]).revenue == pytest.approx(1.0)


def test_two_type_symmetric_matches_dsic_brute_force():
    a = single([1.0, 2.0], [0.5, 0.5], math.inf)
    res = optimal_two_priced([a, a])
    assert res.revenue == pytest.approx(deterministic_dsic_optimum([1, 2], [0.5, 0.5], 2))
    assert rules_pass_bic(res)


def test_capacity_never_hurts_two_agents():
    rn = optimal_two_priced([single([1.0, 2.0], [0.5, 0.5], math.inf)] * 2).revenue
    cap = optimal_two_priced([single([1.0, 2.0], [0.5, 0.5], 0.5)] * 2)
    assert cap.revenue >= rn - 1e-9
    assert rules_pass_bic(cap)


def test_interim_rules_are_feasible_marginals():
    agents = [AgentSpec(discretize(Uniform(0, 1), 5), 0.3), AgentSpec(discretize(Uniform(0, 2), 4), 0.3)]
    res = optimal_two_priced(agents)
    total = sum(expected_payment(r, a.distribution.masses) for r, a in zip(res.rules, agents))
    assert total == pytest.approx(res.revenue, abs=1e-7)
    # at most one winner: expected number of winners is at most one
    assert sum(float(np.dot(a.distribution.masses, r.q)) for r, a in zip(res.rules, agents)) <= 1 + 1e-9


def test_profile_cap():
    a = AgentSpec(discretize(Uniform(0, 1), 10), 0.3)
    with pytest.raises(TooLarge):
        build_multi_agent_expost_lp([a, a, a], max_profiles=999)


def test_needs_discrete_types():
    with pytest.raises(TypeError):
        build_single_agent_lp(AgentSpec(Uniform(0, 1), 0.3))

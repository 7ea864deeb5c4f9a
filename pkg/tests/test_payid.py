import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from capauct.errors import LengthMismatch, NonMonotoneAllocation, ZeroAllocation
from capauct.payid import (BidCurve, InterimAllocation, bid_function, capacitated_payment, payment_table,
                           risk_neutral_payment, value_minus_capacity_floor)

from oracles import closed_form_capacitated_payment


def linear(k=1001, hi=1.0):
    g = np.linspace(0, hi, k)
    return InterimAllocation(g, g / hi)


def at(curve, v):
    return float(np.interp(v, curve.grid, curve.p))


# -- risk-neutral payment ---------------------------------------------------------------

def test_rn_linear_allocation():
    assert at(risk_neutral_payment(linear()), 0.6) == pytest.approx(0.18, abs=1e-9)


def test_rn_constant_allocation_is_zero():
    a = InterimAllocation(np.linspace(0, 1, 11), np.full(11, 0.4))
    assert np.allclose(risk_neutral_payment(a).p, 0.0)


def test_rn_posted_price():
    g = np.linspace(0, 1, 101)
    a = InterimAllocation(g, (g >= 0.3).astype(float))
    p = risk_neutral_payment(a).p
    # the jump sits between two grid points; the trapezoid rule puts it at their midpoint
    assert np.allclose(p[g >= 0.3], 0.295, atol=1e-12)
    assert np.all(p[g < 0.3] == 0)


def test_rn_support_above_zero_is_extended_flat():
    g = np.linspace(1, 2, 101)
    a = InterimAllocation(g, g - 1)
    p = risk_neutral_payment(a).p
    assert p[0] == 0.0
    assert p[-1] == pytest.approx(2 - 0.5, abs=1e-9)


def test_rn_rejects_non_monotone():
    with pytest.raises(NonMonotoneAllocation):
        risk_neutral_payment(InterimAllocation([0, 1, 2], [0.2, 0.5, 0.4]))


# -- floor ---------------------------------------------------------------------------------

def test_floor_examples():
    a = linear()
    assert at(value_minus_capacity_floor(a, 0.25), 0.6) == pytest.approx(0.21)
    assert at(value_minus_capacity_floor(a, 0.5), 0.5) == 0.0
    z = InterimAllocation(np.linspace(0, 1, 5), np.zeros(5))
    assert np.all(value_minus_capacity_floor(z, 0.3).p == 0)
    assert value_minus_capacity_floor(a, 0.25).p[0] == 0.0
    assert np.all(value_minus_capacity_floor(a, 0.25).p[1:10] < 0)


# -- capacitated payment ---------------------------------------------------------------------

def test_capacitated_closed_form_points():
    pc = capacitated_payment(linear(), 0.25)
    assert at(pc, 0.6) == pytest.approx(0.21, abs=1e-6)
    assert at(pc, 0.4) == pytest.approx(0.08, abs=1e-6)


@pytest.mark.parametrize("k", [101, 501, 2001])
def test_capacitated_matches_closed_form_curve(k):
    pc = capacitated_payment(linear(k), 0.25)
    assert np.max(np.abs(pc.p - closed_form_capacitated_payment(pc.grid))) <= 2 / k


def test_capacitated_with_large_capacity_is_risk_neutral():
    a = linear(201)
    assert np.allclose(capacitated_payment(a, 1.0).p, risk_neutral_payment(a).p)
    assert np.array_equal(capacitated_payment(a, math.inf).p, risk_neutral_payment(a).p)


def test_capacitated_constant_allocation():
    g = np.linspace(0, 2, 201)
    a = InterimAllocation(g, np.full(201, 0.3))
    assert np.allclose(capacitated_payment(a, 0.5).p, 0.3 * np.maximum(g - 0.5, 0))


def test_capacitated_on_shifted_support():
    g = np.linspace(1, 2, 101)
    pc = capacitated_payment(InterimAllocation(g, np.ones(101)), 0.5)
    assert np.allclose(pc.p, g - 0.5)


# -- bids ---------------------------------------------------------------------------------------

def test_bid_examples():
    b = bid_function(linear(2001), 0.25)
    assert b(0.6) == pytest.approx(0.35, abs=1e-4)
    assert b(0.8) == pytest.approx(0.55, abs=1e-4)
    assert b(0.4) == pytest.approx(0.2, abs=1e-4)


def test_bid_risk_neutral_is_half_value():
    b = bid_function(linear(1001), math.inf)
    assert np.allclose(b.bid, b.grid / 2, atol=1e-12)


def test_bid_drops_zero_allocation_points():
    g = np.linspace(0, 1, 11)
    b = bid_function(InterimAllocation(g, np.maximum(g - 0.5, 0)), 0.2)
    assert b.grid[0] == pytest.approx(0.6)
    with pytest.raises(ZeroAllocation):
        bid_function(InterimAllocation(g, np.zeros(11)), 0.2)


def test_bid_curve_extrapolation():
    b = BidCurve(np.array([0.0, 1.0]), np.array([0.0, 0.5]), 0.25)
    assert b(2.0) == pytest.approx(1.75)
    assert b(0.5) == pytest.approx(0.25)
    assert BidCurve(np.array([0.0, 1.0]), np.array([0.0, 0.5]))(2.0) == 0.5


def test_payment_table_columns():
    t = payment_table(linear(11), 0.25)
    assert set(t) == {"value", "x", "p_rn", "p_vc", "p_cap", "bid"}
    assert math.isnan(t["bid"][0])
    assert t["bid"][-1] == pytest.approx(t["p_cap"][-1])


def test_allocation_validation():
    with pytest.raises(LengthMismatch):
        InterimAllocation([0, 1], [0.5])
    with pytest.raises(ValueError):
        InterimAllocation([1, 0], [0.5, 0.5])
    with pytest.raises(ValueError):
        InterimAllocation([0, 1], [0.5, 1.5])


# -- equilibrium certificate -------------------------------------------------------------------

def deviation_gain(a, C):
    """Largest gain over grid reports for a one-priced mechanism that charges the bid on winning."""
    pc = capacitated_payment(a, C).p
    x = a.x
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(x > 0, pc / np.where(x > 0, x, 1), 0.0)
    v = a.grid[:, None]
    U = x[None, :] * np.minimum(v - b[None, :], C)
    return float(np.max(U.max(axis=1) - np.diagonal(U)))


def test_epsilon_bic_uniform_two_bidders():
    gains = [deviation_gain(linear(k), 0.25) for k in (250, 1000, 2000)]
    assert gains[-1] <= 0.01
    assert gains[0] >= gains[1] >= gains[2]


def test_truthful_report_optimal_against_wrong_payment():
    # the risk-neutral payment is not an equilibrium once the cap binds
    a = linear(1001)
    prn = risk_neutral_payment(a).p
    b = np.where(a.x > 0, prn / np.where(a.x > 0, a.x, 1), 0)
    U = a.x[None, :] * np.minimum(a.grid[:, None] - b[None, :], 0.25)
    assert np.max(U.max(axis=1) - np.diagonal(U)) > 0.01


# -- properties ------------------------------------------------------------------------------------

@st.composite
def allocations(draw):
    k = draw(st.integers(2, 60))
    steps = draw(arrays(float, k, elements=st.floats(0, 1)))
    dx = draw(arrays(float, k - 1, elements=st.floats(0.001, 1)))
    start = draw(st.floats(0, 2))
    grid = start + np.concatenate([[0.0], np.cumsum(dx)])
    x = np.cumsum(steps)
    top = draw(st.floats(0.01, 1))
    x = x / max(x[-1], 1e-12) * top if x[-1] > 0 else x
    return InterimAllocation(grid, np.minimum(x, 1.0))


@given(allocations(), st.floats(0.01, 5))
@settings(max_examples=200, deadline=None)
def test_payment_properties(a, C):
    prn = risk_neutral_payment(a).p
    pvc = value_minus_capacity_floor(a, C).p
    pc = capacitated_payment(a, C).p
    assert np.all(pc >= np.maximum(prn, pvc) - 1e-9)
    assert np.all(np.diff(pc) >= -1e-9)
    pos = a.x > 1e-9
    bids = pc[pos] / a.x[pos]
    assert np.all(np.diff(bids) >= -1e-7)
    assert np.all(bids >= a.grid[pos] - C - 1e-9)
    if a.grid[0] == 0:
        assert pc[0] == 0
    # away from the floor the curve follows the risk-neutral one
    off = np.flatnonzero(pc[1:] > pvc[1:] + 1e-6) + 1
    assert np.allclose(np.diff(pc)[off - 1], np.diff(prn)[off - 1], atol=1e-6)


@given(allocations())
@settings(max_examples=50, deadline=None)
def test_infinite_capacity_is_risk_neutral_bit_for_bit(a):
    assert np.array_equal(capacitated_payment(a, math.inf).p, risk_neutral_payment(a).p)

"""Two-priced allocation rules for a single capacitated agent.

A rule on a grid of types charges a winner either her value (probability
``qv``) or her value less her capacity (probability ``qc``). Grid
functions are extended to the continuum in one of two ways:

* ``"trapezoid"``: piecewise linear between grid points;
* ``"step"``: piecewise constant from each grid point to the next, which is
  the exact reading of a rule on a discrete type space.

Below the first grid point every function is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .dist import DiscreteTypeSpace, ValueDistribution, virtual_value
from .errors import LengthMismatch, ReportNotOnGrid

_TOL = 1e-9


def u_cap(z, capacity):
    """Capacitated utility min(z, C); negative wealth is not floored."""
    return np.where(z < capacity, z, capacity) if np.ndim(z) else min(z, capacity)


def _as_array(x):
    arr = np.asarray(x)
    if arr.dtype != object:
        arr = arr.astype(float)
    return arr


@dataclass(frozen=True)
class TwoPricedRule:
    grid: np.ndarray
    qv: np.ndarray
    qc: np.ndarray
    capacity: float
    # Infinite capacity only: expected rebate, the limit of capacity * qc.
    rebate: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        grid, qv, qc = _as_array(self.grid), _as_array(self.qv), _as_array(self.qc)
        if not (grid.shape == qv.shape == qc.shape) or grid.ndim != 1:
            raise LengthMismatch("grid, qv and qc must have the same length")
        if grid.size and np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if np.any(qv < -_TOL) or np.any(qc < -_TOL) or np.any(qv + qc > 1 + _TOL):
            raise ValueError("need qv, qc >= 0 and qv + qc <= 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "qv", qv)
        object.__setattr__(self, "qc", qc)
        if self.rebate is not None:
            if math.isfinite(self.capacity):
                raise ValueError("rebate is only meaningful for infinite capacity")
            rebate = _as_array(self.rebate)
            if rebate.shape != grid.shape:
                raise LengthMismatch("rebate must match the grid")
            object.__setattr__(self, "rebate", rebate)

    @property
    def q(self):
        return self.qv + self.qc

    def index_of(self, value) -> int:
        i = int(np.searchsorted(self.grid.astype(float), float(value)))
        for j in (i - 1, i):
            if 0 <= j < len(self.grid) and math.isclose(
                float(self.grid[j]), float(value), rel_tol=1e-12, abs_tol=1e-12
            ):
                return j
        raise ReportNotOnGrid(f"report {value!r} is not a grid point")

    def rebates(self):
        """Expected rebate C * qc per grid point (the explicit rebate if C is inf)."""
        if math.isinf(self.capacity):
            return self.rebate if self.rebate is not None else np.zeros_like(self.qc)
        return self.capacity * self.qc

    def payments(self):
        """Interim expected payment v q(v) - C qc(v) per grid point."""
        return self.grid * self.q - self.rebates()


@dataclass(frozen=True)
class TransformedRule:
    grid: np.ndarray
    qv: np.ndarray
    qc: np.ndarray
    capacity: float
    chi: np.ndarray

    @property
    def q(self):
        return self.qv + self.qc

    def payments(self):
        return self.grid * self.q - (0.0 if math.isinf(self.capacity) else self.capacity * self.qc)


class BicVerdict(NamedTuple):
    ok: bool
    violations: list  # (true index, report index, slack) with slack < 0


def utility_of_report(rule: TwoPricedRule, true_value, report):
    j = rule.index_of(report)
    w = rule.grid[j]
    C = rule.capacity
    if math.isinf(C):
        r = rule.rebates()[j]
        return rule.qv[j] * (true_value - w) + r
    return rule.qv[j] * u_cap(true_value - w, C) + rule.qc[j] * u_cap(true_value - w + C, C)


def utility_matrix(rule: TwoPricedRule):
    """U[i, j]: utility of type grid[i] reporting grid[j]."""
    v = rule.grid[:, None]
    w = rule.grid[None, :]
    C = rule.capacity
    if math.isinf(C):
        return rule.qv[None, :] * (v - w) + rule.rebates()[None, :]
    return rule.qv[None, :] * u_cap(v - w, C) + rule.qc[None, :] * u_cap(v - w + C, C)


def check_bic(rule: TwoPricedRule, tol: float = _TOL) -> BicVerdict:
    """Direct pairwise IC over every ordered pair of grid types."""
    U = utility_matrix(rule)
    truthful = np.diagonal(U)[:, None]
    slack = truthful - U
    bad = np.argwhere(slack.astype(float) < -tol)
    violations = [(int(i), int(j), slack[i, j]) for i, j in bad]
    return BicVerdict(not violations, violations)


def expected_payment(rule: TwoPricedRule, masses) -> float:
    masses = np.asarray(masses, dtype=float)
    if masses.shape != rule.grid.shape:
        raise LengthMismatch("masses must align with the rule grid")
    return float(np.dot(masses, np.asarray(rule.payments(), dtype=float)))


# -- quadrature on grid functions ------------------------------------------


def _cumulative(grid, y, quadrature):
    """Integral of the grid function from 0 up to each grid point."""
    dx = np.diff(grid)
    if quadrature == "trapezoid":
        cells = 0.5 * (y[1:] + y[:-1]) * dx
    elif quadrature == "step":
        cells = y[:-1] * dx
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    return np.concatenate([[0.0], np.cumsum(cells)])


def integrate(grid, y, a, b, quadrature="trapezoid") -> float:
    """Exact integral over [a, b] of the grid function's interpolant."""
    grid = np.asarray(grid, dtype=float)
    y = np.asarray(y, dtype=float)
    if b <= a:
        return 0.0
    return _antiderivative(grid, y, b, quadrature) - _antiderivative(grid, y, a, quadrature)


def _antiderivative(grid, y, x, quadrature):
    if x <= grid[0]:
        return 0.0
    cum = _cumulative(grid, y, quadrature)
    if x >= grid[-1]:
        return float(cum[-1] + y[-1] * (x - grid[-1]))
    i = int(np.searchsorted(grid, x, side="right") - 1)
    t = x - grid[i]
    if quadrature == "step":
        return float(cum[i] + y[i] * t)
    slope = (y[i + 1] - y[i]) / (grid[i + 1] - grid[i])
    return float(cum[i] + y[i] * t + 0.5 * slope * t * t)


def qbar_transform(rule: TwoPricedRule, quadrature: str = "trapezoid") -> TransformedRule:
    """Convexify qc on [0, C] by integrating the running max of qv / C.

    ``quadrature="step"`` is exact for discrete type spaces and is what makes
    qbar_c <= qc hold on sparse grids; the trapezoid rule can overshoot there.
    """
    grid = np.asarray(rule.grid, dtype=float)
    qv = np.asarray(rule.qv, dtype=float)
    qc = np.asarray(rule.qc, dtype=float)
    C = rule.capacity
    chi = np.maximum.accumulate(qv) / C
    qbar_c = _cumulative(grid, chi, quadrature)
    qbar_c = np.where(grid <= C, qbar_c, qc)
    return TransformedRule(grid, qv, qbar_c, C, chi)


def decomposition(rule: TransformedRule, v, quadrature: str = "trapezoid"):
    """(pI, pII, pIII) at grid value ``v`` for a transformed rule."""
    grid = np.asarray(rule.grid, dtype=float)
    i = int(np.argmin(np.abs(grid - v)))
    if not math.isclose(grid[i], v, rel_tol=1e-12, abs_tol=1e-12):
        raise ReportNotOnGrid(f"{v!r} is not a grid point")
    v = float(grid[i])
    q = np.asarray(rule.q, dtype=float)
    qc = np.asarray(rule.qc, dtype=float)
    C = rule.capacity
    p1 = q[i] * v - integrate(grid, q, 0.0, v, quadrature)
    p2 = integrate(grid, qc, 0.0, min(v, C), quadrature)
    p3 = integrate(grid, qc, C, v, quadrature) if v > C else 0.0
    return p1, p2, p3


def payment_upper_bound(rule: TwoPricedRule, d: DiscreteTypeSpace,
                        parent: Optional[ValueDistribution] = None):
    """Three-term upper bound on the expected payment of a BIC rule.

    Virtual values come from ``parent`` at the grid points when given,
    otherwise from the discrete forward-difference formula.

    Returns ``(bound, (pI_term, pII_term, pIII_term))``.
    """
    g = np.asarray(rule.grid, dtype=float)
    if g.shape != d.values.shape or not np.allclose(g, d.values):
        raise LengthMismatch("rule grid must equal the type values")
    phi = virtual_value(parent, d.values) if parent is not None else d.virtual_values()
    phi_plus = np.maximum(phi, 0.0)
    q = np.asarray(rule.q, dtype=float)
    qc = np.asarray(rule.qc, dtype=float)
    m = d.masses
    C = rule.capacity
    t1 = float(np.dot(m, phi_plus * q))
    t2 = float(np.dot(m, phi_plus * qc))
    t3 = 0.0 if math.isinf(C) else float(np.dot(m, np.maximum(d.values - C, 0.0) * qc))
    return t1 + t2 + t3, (t1, t2, t3)


# -- property audits ----------------------------------------------------------


def integral_ic_violations(rule: TwoPricedRule) -> dict:
    """Largest violation of each side of the integral IC over grid pairs.

    On a discrete grid the lower side holds with left-endpoint sums when
    consecutive gaps are at most C; the upper side holds with right-endpoint
    sums for any grid. Pairs spanning a gap wider than C are skipped for the
    lower side.
    """
    grid = np.asarray(rule.grid, dtype=float)
    qv = np.asarray(rule.qv, dtype=float)
    qc = np.asarray(rule.qc, dtype=float)
    q = qv + qc
    C = rule.capacity
    dx = np.diff(grid)
    left = np.concatenate([[0.0], np.cumsum(qv[:-1] * dx)]) / C
    right = np.concatenate([[0.0], np.cumsum(q[1:] * dx)]) / C
    wide = np.concatenate([[0], np.cumsum(dx > C + _TOL)])
    lower, upper = 0.0, 0.0
    for i in range(len(grid)):
        rise = qc[i + 1:] - qc[i]
        ok_span = wide[i + 1:] == wide[i]
        lo_gap = (left[i + 1:] - left[i]) - rise
        if np.any(ok_span):
            lower = max(lower, float(np.max(lo_gap[ok_span])))
        up_gap = rise - (right[i + 1:] - right[i])
        if up_gap.size:
            upper = max(upper, float(np.max(up_gap)))
    return {"lower": lower, "upper": upper}


def qbar_property_violations(rule: TwoPricedRule, quadrature: str = "step") -> dict:
    """Largest violation of each transform property (<= 0 means it holds).

    Keys: ``convex_increasing`` (first and second differences of qbar_c on
    [0, C]), ``dominated`` (qbar_c <= qc), ``integral_ic`` (lower side of
    the integral IC for the transform), ``payment`` (pbar >= p) and
    ``three_term_bound`` (pI + pII + pIII >= pbar).

    The two integral checks only use grid spans without a gap wider than C,
    the same convention as ``integral_ic_violations``.
    """
    tr = qbar_transform(rule, quadrature)
    grid = tr.grid
    C = rule.capacity
    qc = np.asarray(rule.qc, dtype=float)
    inside = grid <= C
    out = {}
    g_in, c_in = grid[inside], tr.qc[inside]
    worst = 0.0
    if g_in.size >= 2:
        slopes = np.diff(c_in) / np.diff(g_in)
        worst = max(worst, float(np.max(-slopes)))
        if slopes.size >= 2:
            worst = max(worst, float(np.max(-np.diff(slopes))))
    out["convex_increasing"] = worst
    out["dominated"] = float(np.max(tr.qc - qc))
    qv = np.asarray(tr.qv, dtype=float)
    # a grid gap wider than C carries no IC information across it
    block = np.concatenate([[0], np.cumsum(np.diff(grid) > C + _TOL)])
    worst = 0.0
    for i in range(len(grid)):
        for j in range(i + 1, len(grid)):
            if block[j] != block[i]:
                break
            lhs = integrate(grid, qv, grid[i], grid[j], quadrature) / C
            worst = max(worst, lhs - (tr.qc[j] - tr.qc[i]))
    out["integral_ic"] = worst
    p = np.asarray(rule.payments(), dtype=float)
    pbar = tr.payments()
    out["payment"] = float(np.max(p - pbar))
    worst = -math.inf
    for i, v in enumerate(grid):
        if block[i] != 0:
            break
        worst = max(worst, pbar[i] - sum(decomposition(tr, v, quadrature)))
    out["three_term_bound"] = float(worst)
    return out


def posted_price_rule(grid, price: float, capacity: float) -> TwoPricedRule:
    """A posted price written as a two-priced rule.

    Types at or above ``price`` win; the wealth v - price is delivered as a
    rebate of C with probability (v - price) / C, capped at one (wealth past
    C is worth nothing to the agent, so it is charged away).
    """
    grid = np.asarray(grid, dtype=float)
    win = grid >= price - _TOL
    if math.isinf(capacity):
        return TwoPricedRule(grid, win.astype(float), np.zeros_like(grid), capacity,
                             rebate=np.where(win, grid - price, 0.0))
    qc = np.where(win, np.minimum((grid - price) / capacity, 1.0), 0.0)
    qc = np.maximum(qc, 0.0)
    qv = np.where(win, 1.0 - qc, 0.0)
    return TwoPricedRule(grid, qv, qc, capacity)

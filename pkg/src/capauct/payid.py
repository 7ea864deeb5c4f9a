"""Payment curves for one-priced mechanisms.

Given an interim allocation ``x`` on a grid, this module computes

* the risk-neutral payment ``p_rn(v) = v x(v) - int_0^v x``,
* the value-minus-capacity floor ``p_vc(v) = (v - C) x(v)``,
* the capacitated equilibrium payment ``p_cap``, defined by ``p_cap(0) = 0``
  and ``p_cap(v_k) = max(p_vc(v_k), p_rn(v_k) + max_{j<k}(p_cap(v_j) - p_rn(v_j)))``,
* the bid ``p_cap / x``.

Grids must be non-decreasing. A repeated value stands for an atom spread
out in quantile order: the agent at that value mixes over the bids
attached to the repeated points, and integrals over a zero-width step
vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch, NonMonotoneAllocation, ZeroAllocation

_MONO_TOL = 1e-12


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InterimAllocation:
    grid: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        g, x = _readonly(self.grid), _readonly(self.x)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("grid must be a non-empty 1-d array")
        if g.shape != x.shape:
            raise LengthMismatch(f"grid has {g.size} points but x has {x.size}")
        if np.any(np.diff(g) < 0):
            raise ValueError("grid must be non-decreasing")
        if g[0] < 0:
            raise ValueError("values must be non-negative")
        if np.any(x < -_MONO_TOL) or np.any(x > 1 + _MONO_TOL):
            raise ValueError("allocation probabilities must lie in [0, 1]")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "x", x)

    @property
    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.x) >= -_MONO_TOL))

    def require_monotone(self):
        if not self.is_monotone:
            i = int(np.argmin(np.diff(self.x)))
            raise NonMonotoneAllocation(
                f"x drops from {self.x[i]:.6g} to {self.x[i + 1]:.6g} at v={self.grid[i + 1]:.6g}")


@dataclass(frozen=True)
class PaymentCurve:
    grid: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        g, p = _readonly(self.grid), _readonly(self.p)
        if g.shape != p.shape:
            raise LengthMismatch(f"grid has {g.size} points but p has {p.size}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "p", p)

    def __call__(self, v):
        return np.interp(v, self.grid, self.p)


@dataclass(frozen=True)
class BidCurve:
    """Bids on a grid of values.

    Evaluation interpolates linearly. Above the grid the bid is
    ``max(bid[-1], v - C)``, the limit of the capacitated payment once the
    floor binds. Below the grid it is held at ``bid[0]``.
    """

    grid: np.ndarray
    bid: np.ndarray
    capacity: float = math.inf

    def __post_init__(self):
        g, b = _readonly(self.grid), _readonly(self.bid)
        if g.shape != b.shape:
            raise LengthMismatch(f"grid has {g.size} points but bid has {b.size}")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "bid", b)

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        out = np.interp(v, self.grid, self.bid)
        if math.isfinite(self.capacity):
            out = np.where(v > self.grid[-1], np.maximum(self.bid[-1], v - self.capacity), out)
        return out if out.ndim else float(out)


def _extended(a: InterimAllocation):
    """Grid and allocation with a point at 0 prepended when the grid starts above 0."""
    g, x = a.grid, a.x
    if g[0] > 0:
        return np.concatenate([[0.0], g]), np.concatenate([[x[0]], x]), 1
    return g, x, 0


def _rn(g, x):
    integral = np.concatenate([[0.0], np.cumsum(0.5 * (x[1:] + x[:-1]) * np.diff(g))])
    return g * x - integral


def risk_neutral_payment(a: InterimAllocation) -> PaymentCurve:
    a.require_monotone()
    g, x, skip = _extended(a)
    return PaymentCurve(a.grid, _rn(g, x)[skip:])


def value_minus_capacity_floor(a: InterimAllocation, C: float) -> PaymentCurve:
    if math.isinf(C):
        # (v - inf) x is -inf where x > 0 and 0 where nobody is served
        p = np.where(a.x > 0, -math.inf, 0.0)
    else:
        p = (a.grid - C) * a.x
    return PaymentCurve(a.grid, p)


def capacitated_payment(a: InterimAllocation, C: float) -> PaymentCurve:
    """Equilibrium payment of the one-priced mechanism with allocation ``a``.

    One pass with a running maximum of ``p_cap - p_rn``. With ``C = inf`` the
    floor never binds and the risk-neutral payment comes back unchanged.
    """
    a.require_monotone()
    g, x, skip = _extended(a)
    prn = _rn(g, x)
    if math.isinf(C):
        return PaymentCurve(a.grid, prn[skip:])
    pvc = (g - C) * x
    out = np.empty_like(prn)
    out[0] = 0.0
    offset = 0.0  # running max of p_cap - p_rn; both vanish at v = 0
    for i in range(1, g.size):
        out[i] = max(pvc[i], prn[i] + offset)
        offset = max(offset, out[i] - prn[i])
    return PaymentCurve(a.grid, out[skip:])


def bid_function(a: InterimAllocation, C: float) -> BidCurve:
    """Bid ``p_cap / x`` at every grid point where ``x > 0``.

    Points with zero allocation have no meaningful bid and are dropped.
    ``ZeroAllocation`` is raised only when nothing is left.
    """
    pc = capacitated_payment(a, C)
    keep = a.x > 0
    if not np.any(keep):
        raise ZeroAllocation("allocation is zero on the whole grid")
    return BidCurve(a.grid[keep], pc.p[keep] / a.x[keep], C)


def payment_table(a: InterimAllocation, C: float) -> dict:
    """All payment columns on the allocation grid; bid is NaN where x = 0."""
    prn = risk_neutral_payment(a).p
    pvc = value_minus_capacity_floor(a, C).p
    pc = capacitated_payment(a, C).p
    with np.errstate(divide="ignore", invalid="ignore"):
        bid = np.where(a.x > 0, pc / np.where(a.x > 0, a.x, 1.0), math.nan)
    return {"value": a.grid, "x": a.x, "p_rn": prn, "p_vc": pvc, "p_cap": pc, "bid": bid}

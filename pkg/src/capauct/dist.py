"""Value distributions, discretization and virtual values.

Every distribution exposes vectorized ``cdf``, ``pdf`` and ``quantile``.
The only atom that can be modeled sits at the upper end of the support
(the equal-revenue distribution truncated at ``h``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import NotRegular, OutOfSupport, ZeroDensity

_TOL = 1e-9


class ValueDistribution:
    """Base class. Subclasses are frozen dataclasses."""

    lower_support: float
    upper_support: float

    @property
    def atom_at_upper(self) -> float:
        return 0.0

    @property
    def has_interior_atoms(self) -> bool:
        return False

    def cdf(self, v):
        raise NotImplementedError

    def pdf(self, v):
        raise NotImplementedError

    def sf(self, v):
        """``1 - cdf(v)``; subclasses override it where the difference cancels."""
        return 1.0 - np.asarray(self.cdf(v), dtype=float)

    def quantile(self, u):
        raise NotImplementedError

    def left_cdf(self, v):
        """``lim_{z -> v-} F(z)``; differs from cdf only at the upper atom."""
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.cdf(v), dtype=float)
        if self.atom_at_upper > 0:
            out = np.where(v >= self.upper_support, 1.0 - self.atom_at_upper, out)
        return out

    def mean(self) -> float:
        raise NotImplementedError

    def quantile_integral(self, u):
        """``int_0^u quantile(s) ds``; the partial mean below quantile level u."""
        raise NotImplementedError

    def to_config(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Uniform(ValueDistribution):
    lo: float = 0.0
    hi: float = 1.0

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"uniform needs hi > lo, got [{self.lo}, {self.hi}]")

    @property
    def lower_support(self):
        return self.lo

    @property
    def upper_support(self):
        return self.hi

    def cdf(self, v):
        return np.clip((np.asarray(v, dtype=float) - self.lo) / (self.hi - self.lo), 0.0, 1.0)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where((v >= self.lo) & (v <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def sf(self, v):
        return np.clip((self.hi - np.asarray(v, dtype=float)) / (self.hi - self.lo), 0.0, 1.0)

    def quantile(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        return self.lo + u * (self.hi - self.lo)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def quantile_integral(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        return self.lo * u + 0.5 * (self.hi - self.lo) * u * u

    def to_config(self):
        return {"kind": "uniform", "lo": float(self.lo), "hi": float(self.hi)}


@dataclass(frozen=True)
class EqualRevenue(ValueDistribution):
    """F(z) = 1 - 1/z on [1, h) with the remaining mass 1/h at h."""

    h: float = 1000.0

    def __post_init__(self):
        if not self.h > 1:
            raise ValueError("equal-revenue needs h > 1")

    @property
    def lower_support(self):
        return 1.0

    @property
    def upper_support(self):
        return self.h

    @property
    def atom_at_upper(self):
        return 1.0 / self.h

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        with np.errstate(divide="ignore"):
            body = 1.0 - 1.0 / np.maximum(v, 1.0)
        return np.where(v < 1.0, 0.0, np.where(v >= self.h, 1.0, body))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        inside = (v >= 1.0) & (v < self.h)
        return np.where(inside, 1.0 / np.maximum(v, 1.0) ** 2, 0.0)

    def sf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v < 1.0, 1.0, np.where(v >= self.h, 0.0, 1.0 / np.maximum(v, 1.0)))

    def quantile(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            body = 1.0 / (1.0 - u)
        # from the atom's quantile level up the value is exactly h
        return np.where(u >= 1.0 - self.atom_at_upper, self.h, np.minimum(body, self.h))

    def mean(self):
        return math.log(self.h) + 1.0

    def quantile_integral(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        edge = 1.0 - 1.0 / self.h
        body = -np.log1p(-np.minimum(u, edge))
        return body + self.h * np.maximum(u - edge, 0.0)

    def to_config(self):
        return {"kind": "equal_revenue", "h": float(self.h)}


@dataclass(frozen=True)
class Exponential(ValueDistribution):
    rate: float = 1.0

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("exponential needs rate > 0")

    @property
    def lower_support(self):
        return 0.0

    @property
    def upper_support(self):
        return math.inf

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v <= 0, 0.0, -np.expm1(-self.rate * np.maximum(v, 0.0)))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where(v < 0, 0.0, self.rate * np.exp(-self.rate * np.maximum(v, 0.0)))

    def sf(self, v):
        v = np.asarray(v, dtype=float)
        return np.exp(-self.rate * np.maximum(v, 0.0))

    def quantile(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return -np.log1p(-u) / self.rate

    def mean(self):
        return 1.0 / self.rate

    def quantile_integral(self, u):
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        w = 1.0 - u
        with np.errstate(divide="ignore", invalid="ignore"):
            wlogw = np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0)
        return (wlogw + u) / self.rate

    def to_config(self):
        return {"kind": "exponential", "rate": float(self.rate)}


@dataclass(frozen=True)
class PiecewiseCdf(ValueDistribution):
    """Piecewise-linear cdf through ``points`` = ((v0, F0), (v1, F1), ...).

    Repeated values encode a jump (an interior atom). A final level below
    one leaves an atom at the last value.
    """

    points: tuple = field(default=((0.0, 0.0), (1.0, 1.0)))

    def __post_init__(self):
        pts = tuple((float(a), float(b)) for a, b in self.points)
        object.__setattr__(self, "points", pts)
        vs, fs = self._arrays()
        if len(pts) < 2:
            raise ValueError("piecewise cdf needs at least two points")
        if fs[0] != 0.0:
            raise ValueError("piecewise cdf must start at level 0")
        if np.any(np.diff(vs) < 0) or np.any(np.diff(fs) < 0):
            raise ValueError("piecewise cdf points must be non-decreasing")
        if fs[-1] > 1.0 + _TOL:
            raise ValueError("piecewise cdf exceeds 1")
        if vs[-1] <= vs[0]:
            raise ValueError("piecewise cdf has empty support")

    def _arrays(self):
        arr = np.array(self.points, dtype=float)
        return arr[:, 0], arr[:, 1]

    @property
    def lower_support(self):
        return self.points[0][0]

    @property
    def upper_support(self):
        return self.points[-1][0]

    @property
    def atom_at_upper(self):
        vs, fs = self._arrays()
        jump = 0.0
        # a vertical segment ending at the top also counts as the top atom
        i = len(vs) - 1
        while i > 0 and vs[i - 1] == vs[-1]:
            i -= 1
        jump = fs[-1] - fs[i]
        return max(0.0, 1.0 - fs[-1]) + jump

    @property
    def has_interior_atoms(self):
        vs, fs = self._arrays()
        dup = (np.diff(vs) == 0) & (np.diff(fs) > 0)
        dup &= vs[1:] < vs[-1]
        return bool(np.any(dup))

    def cdf(self, v):
        vs, fs = self._arrays()
        v = np.asarray(v, dtype=float)
        i = np.searchsorted(vs, v, side="right") - 1
        out = np.empty(v.shape)
        below = i < 0
        top = i >= len(vs) - 1
        mid = ~below & ~top
        out[below] = 0.0
        out[top] = 1.0
        j = i[mid]
        t = (v[mid] - vs[j]) / (vs[j + 1] - vs[j])
        out[mid] = fs[j] + t * (fs[j + 1] - fs[j])
        return out if out.ndim else float(out)

    def pdf(self, v):
        vs, fs = self._arrays()
        v = np.asarray(v, dtype=float)
        i = np.searchsorted(vs, v, side="right") - 1
        # the top point takes the slope of the last segment
        i = np.where(v == vs[-1], len(vs) - 2, i)
        mid = (i >= 0) & (i < len(vs) - 1)
        mid &= np.take(np.append(np.diff(vs), 0.0), np.clip(i, 0, len(vs) - 1)) > 0
        out = np.zeros(v.shape)
        j = i[mid]
        out[mid] = (fs[j + 1] - fs[j]) / (vs[j + 1] - vs[j])
        return out if out.ndim else float(out)

    def quantile(self, u):
        vs, fs = self._arrays()
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        j = np.searchsorted(fs, u, side="left")
        out = np.empty(u.shape)
        first = j == 0
        beyond = j >= len(fs)
        mid = ~first & ~beyond
        out[first] = vs[0]
        out[beyond] = vs[-1]
        jm = j[mid]
        t = (u[mid] - fs[jm - 1]) / (fs[jm] - fs[jm - 1])
        out[mid] = vs[jm - 1] + t * (vs[jm] - vs[jm - 1])
        return out if out.ndim else float(out)

    def mean(self):
        vs, fs = self._arrays()
        body = float(np.sum(np.diff(fs) * 0.5 * (vs[1:] + vs[:-1])))
        return body + max(0.0, 1.0 - fs[-1]) * vs[-1]

    def quantile_integral(self, u):
        vs, fs = self._arrays()
        u = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        # the quantile is piecewise linear in u between the cdf levels
        steps = np.diff(fs)
        seg = np.where(steps > 0, steps * 0.5 * (vs[1:] + vs[:-1]), 0.0)
        cum = np.concatenate([[0.0], np.cumsum(seg)])
        j = np.clip(np.searchsorted(fs, u, side="right") - 1, 0, len(fs) - 1)
        partial_top = np.minimum(u, fs[-1])
        qa = vs[j]
        qb = np.asarray(self.quantile(partial_top), dtype=float)
        within = np.maximum(partial_top - fs[j], 0.0) * 0.5 * (qa + qb)
        within = np.where(j < len(fs) - 1, within, 0.0)
        return cum[j] + within + np.maximum(u - fs[-1], 0.0) * vs[-1]

    def to_config(self):
        return {"kind": "piecewise_cdf", "points": [list(p) for p in self.points]}


def from_config(cfg: dict) -> ValueDistribution:
    kind = cfg["kind"]
    if kind == "uniform":
        return Uniform(float(cfg.get("lo", 0.0)), float(cfg.get("hi", 1.0)))
    if kind == "equal_revenue":
        return EqualRevenue(float(cfg["h"]))
    if kind == "exponential":
        return Exponential(float(cfg.get("rate", 1.0)))
    if kind == "piecewise_cdf":
        return PiecewiseCdf(tuple(tuple(p) for p in cfg["points"]))
    raise ValueError(f"unknown distribution kind {kind!r}")


@dataclass(frozen=True)
class DiscreteTypeSpace:
    values: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if values.shape != masses.shape or values.ndim != 1 or values.size == 0:
            raise ValueError("values and masses must be equal-length 1-d arrays")
        if np.any(np.diff(values) <= 0):
            raise ValueError("type values must be strictly increasing")
        if np.any(masses <= 0):
            raise ValueError("type masses must be positive")
        if abs(math.fsum(masses) - 1.0) > _TOL:
            raise ValueError("type masses must sum to 1")
        values.setflags(write=False)
        masses.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "masses", masses)

    @property
    def lower_support(self):
        return float(self.values[0])

    @property
    def upper_support(self):
        return float(self.values[-1])

    def __len__(self):
        return self.values.size

    def cdf(self, v):
        cum = np.cumsum(self.masses)
        i = np.searchsorted(self.values, np.asarray(v, dtype=float), side="right")
        return np.where(i == 0, 0.0, cum[np.maximum(i - 1, 0)])

    def virtual_values(self) -> np.ndarray:
        """Forward-difference discrete virtual values.

        phi_i = v_i - (1 - F_i) (v_{i+1} - v_i) / f_i with F_i the mass at
        or below v_i; the top type's virtual value is its value.
        """
        v, f = self.values, self.masses
        tail = np.clip(1.0 - np.cumsum(f), 0.0, None)
        gaps = np.append(np.diff(v), 0.0)
        return v - tail * gaps / f

    def mean(self):
        return float(np.dot(self.values, self.masses))


@dataclass(frozen=True)
class AgentSpec:
    distribution: Union[ValueDistribution, DiscreteTypeSpace]
    capacity: float = math.inf

    def __post_init__(self):
        if not (self.capacity > 0):
            raise ValueError("capacity must be positive or inf")

    def to_config(self):
        cap = "inf" if math.isinf(self.capacity) else float(self.capacity)
        if isinstance(self.distribution, DiscreteTypeSpace):
            d = {"kind": "discrete", "values": self.distribution.values.tolist(),
                 "masses": self.distribution.masses.tolist()}
        else:
            d = self.distribution.to_config()
        return {"dist": d, "capacity": cap}

    @classmethod
    def from_config(cls, cfg: dict) -> "AgentSpec":
        d = cfg["dist"]
        if d["kind"] == "discrete":
            dist = DiscreteTypeSpace(np.array(d["values"]), np.array(d["masses"]))
        else:
            dist = from_config(d)
        return cls(dist, float(cfg.get("capacity", math.inf)))


# ---------------------------------------------------------------------------


def virtual_value(d: ValueDistribution, v):
    """phi(v) = v - (1 - F(v)) / f(v), vectorized.

    At an upper atom the tail mass is zero and phi equals the value.
    """
    arr = np.asarray(v, dtype=float)
    lo, hi = d.lower_support, d.upper_support
    if np.any(arr < lo - _TOL) or np.any(arr > hi + _TOL):
        raise OutOfSupport(f"value outside support [{lo}, {hi}]")
    at_atom = (arr >= hi) & (d.atom_at_upper > 0)
    dens = np.asarray(d.pdf(arr), dtype=float)
    if np.any((dens <= 0) & ~at_atom):
        raise ZeroDensity("density vanishes at an evaluated value")
    tail = np.asarray(d.sf(arr), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(at_atom, arr, arr - tail / np.where(at_atom, 1.0, dens))
    return float(phi) if phi.ndim == 0 else phi


def quantile_grid(d: ValueDistribution, size: int) -> np.ndarray:
    u = (np.arange(size) + 0.5) / size
    return np.asarray(d.quantile(u), dtype=float)


def is_regular(d: ValueDistribution, grid_size: int = 1000) -> bool:
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    phi = virtual_value(d, quantile_grid(d, grid_size))
    scale = np.maximum(1.0, np.abs(phi[:-1]))
    return bool(np.all(np.diff(phi) >= -_TOL * scale))


def _upper_bracket(d: ValueDistribution, target) -> np.ndarray:
    """Finite upper end of the support for bisection on phi >= target."""
    target = np.asarray(target, dtype=float)
    if math.isfinite(d.upper_support):
        return np.full(target.shape, d.upper_support)
    hi = np.full(target.shape, float(d.quantile(0.999)))
    hi = np.maximum(hi, d.lower_support + 1.0)
    for _ in range(200):
        low = virtual_value(d, hi) < target
        if not np.any(low):
            break
        hi = np.where(low, 2.0 * hi, hi)
    return hi


def inverse_virtual_value(d: ValueDistribution, t, tol: float = 1e-9):
    """Smallest value v with phi(v) >= t, by bisection; clamped to support.

    Targets above the range of phi map to the upper end of the support.
    """
    t = np.asarray(t, dtype=float)
    lo = np.full(t.shape, float(d.lower_support))
    hi = _upper_bracket(d, t)
    done = virtual_value(d, lo) >= t
    a, b = lo.copy(), hi.copy()
    while True:
        open_ = ~done & (b - a > tol * np.maximum(1.0, np.abs(b)))
        if not np.any(open_):
            break
        m = 0.5 * (a + b)
        ok = virtual_value(d, m) >= t
        b = np.where(open_ & ok, m, b)
        a = np.where(open_ & ~ok, m, a)
    out = np.where(done, lo, b)
    return float(out) if out.ndim == 0 else out


def monopoly_reserve(d: ValueDistribution) -> float:
    """phi^{-1}(0); the lower support when phi >= 0 everywhere."""
    if not is_regular(d):
        raise NotRegular("monopoly reserve needs a regular distribution")
    return float(inverse_virtual_value(d, 0.0))


def _bucket_values(d: ValueDistribution, edges, scheme):
    if scheme == "midpoint":
        return np.asarray(d.quantile(0.5 * (edges[1:] + edges[:-1])), dtype=float)
    Q = np.asarray(d.quantile_integral(edges), dtype=float)
    return np.diff(Q) / np.diff(edges)


def discretize(d: ValueDistribution, k: int, scheme: str = "midpoint") -> DiscreteTypeSpace:
    """Equal-mass discretization with ``k`` points.

    ``scheme="midpoint"`` places each point at its quantile bucket's
    midpoint. ``scheme="mean"`` uses the bucket's conditional mean instead,
    which preserves the mean exactly and matters for heavy tails.

    A positive atom at the upper support keeps its own point; the remaining
    ``k - 1`` points split the continuous part evenly.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if scheme not in ("midpoint", "mean"):
        raise ValueError(f"unknown discretization scheme {scheme!r}")
    atom = d.atom_at_upper
    if atom > 0 and k >= 2:
        body = 1.0 - atom
        edges = body * np.arange(k) / (k - 1)
        values = np.append(_bucket_values(d, edges, scheme), d.upper_support)
        masses = np.append(np.full(k - 1, body / (k - 1)), atom)
    else:
        edges = np.arange(k + 1) / k
        values = _bucket_values(d, edges, scheme)
        masses = np.full(k, 1.0 / k)
    # buckets inside an interior atom collapse onto one value
    values, inverse = np.unique(values, return_inverse=True)
    masses = np.bincount(inverse, weights=masses)
    masses[-1] = 1.0 - math.fsum(masses[:-1])
    return DiscreteTypeSpace(values, masses)


def sample(d, seed, n: int) -> np.ndarray:
    """Inverse-transform draws. ``seed`` is an int or a numpy Generator."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if n == 0:
        return np.empty(0)
    u = rng.random(n)
    if isinstance(d, DiscreteTypeSpace):
        idx = np.searchsorted(np.cumsum(d.masses), u, side="right")
        return d.values[np.minimum(idx, len(d) - 1)]
    return np.asarray(d.quantile(u), dtype=float)

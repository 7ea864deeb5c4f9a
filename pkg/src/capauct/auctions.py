"""Auction mechanisms as outcome functions, in single-profile and batch form.

Batch functions take a value matrix ``V`` of shape ``(samples, n)`` and a
numpy Generator for tie-breaking, and return ``(winner, payment)`` arrays
where ``winner == -1`` means the item stays unsold.

One-priced mechanisms (first-price equilibrium and the two asymmetric
constructions) carry per-agent curves: interim allocation, capacitated
payment and bid. The symmetric first-price curves are indexed by quantile,
so that a point mass at the top of the support turns into a mixed bid over
sub-quantiles instead of a tie.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dist import (AgentSpec, DiscreteTypeSpace, ValueDistribution, inverse_virtual_value,
                   is_regular, monopoly_reserve, virtual_value)
from .errors import AtomicDistribution, EmptyProfile, NotRegular, UnboundedCapacity
from .payid import (BidCurve, InterimAllocation, PaymentCurve, bid_function, capacitated_payment,
                    risk_neutral_payment)

FPA, SPA, CSP, MYERSON = "FPA", "SPA", "CSP", "MyersonOpt"
MAX_V_MINUS_C, MYERSON_ALLOC = "MaxVMinusC-OnePriced", "MyersonAlloc-OnePriced"
KINDS = (FPA, SPA, CSP, MYERSON, MAX_V_MINUS_C, MYERSON_ALLOC)
ONE_PRICED = (FPA, MAX_V_MINUS_C, MYERSON_ALLOC)
_RULE_NAMES = {"max-v-minus-c": MAX_V_MINUS_C, "myerson-alloc": MYERSON_ALLOC}

_PHI_TIE = 1e-12
_BISECT_STEPS = 60


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


@dataclass(frozen=True)
class ValueProfile:
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise EmptyProfile("a profile needs at least one agent")
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ValueError("profile values must be finite and non-negative")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class Outcome:
    winner: Optional[int]
    payments: tuple

    @property
    def revenue(self) -> float:
        return float(sum(self.payments))


def _outcome(winner, payment, n) -> Outcome:
    w = int(winner[0])
    pay = [0.0] * n
    if w >= 0:
        pay[w] = float(payment[0])
    return Outcome(None if w < 0 else w, tuple(pay))


def _as_matrix(profile) -> np.ndarray:
    if not isinstance(profile, ValueProfile):
        profile = ValueProfile(tuple(profile))
    return np.array(profile.values, dtype=float)[None, :]


# -- tie-breaking -------------------------------------------------------------


def _argmax_random(score: np.ndarray, rng: np.random.Generator, eligible=None) -> np.ndarray:
    """Row-wise argmax with uniform tie-breaking; -1 where nothing is eligible."""
    if eligible is None:
        eligible = np.ones(score.shape, dtype=bool)
    s = np.where(eligible, score, -np.inf)
    best = s.max(axis=1, keepdims=True)
    tied = eligible & (s == best)
    key = np.where(tied, rng.random(score.shape), -1.0)
    w = key.argmax(axis=1)
    return np.where(eligible.any(axis=1), w, -1)


def _second_highest(V: np.ndarray) -> np.ndarray:
    if V.shape[1] < 2:
        return np.zeros(V.shape[0])
    return np.partition(V, -2, axis=1)[:, -2]


# -- second-price family --------------------------------------------------------


def spa_batch(V, rng):
    V = np.asarray(V, dtype=float)
    w = _argmax_random(V, rng)
    return w, _second_highest(V)


def csp_batch(V, capacities, rng):
    V = np.asarray(V, dtype=float)
    C = np.broadcast_to(np.asarray(capacities, dtype=float), (V.shape[1],))
    w = _argmax_random(V, rng)
    own = V[np.arange(V.shape[0]), w] - C[w]
    return w, np.maximum(_second_highest(V), own)


def run_spa(profile, seed=0) -> Outcome:
    V = _as_matrix(profile)
    return _outcome(*spa_batch(V, _rng(seed)), V.shape[1])


def run_csp(profile, capacities, seed=0) -> Outcome:
    V = _as_matrix(profile)
    if len(capacities) != V.shape[1]:
        raise ValueError("one capacity per agent is required")
    return _outcome(*csp_batch(V, capacities, _rng(seed)), V.shape[1])


# -- Myerson ------------------------------------------------------------------------


def _require_regular(dists):
    for d in dists:
        if isinstance(d, DiscreteTypeSpace) or not is_regular(d):
            raise NotRegular(f"{d!r} is not a regular continuous distribution")


def _phi_matrix(V, dists):
    return np.column_stack([virtual_value(d, V[:, j]) for j, d in enumerate(dists)])


def _tie(a, b, scale=1.0):
    """Virtual values equal up to rounding; ``scale`` is the size of the values involved."""
    with np.errstate(invalid="ignore"):
        return np.abs(a - b) <= _PHI_TIE * np.maximum(1.0, np.abs(scale))


def myerson_batch(V, dists, rng):
    """Serve the highest non-negative virtual value and charge the threshold.

    Equal virtual values are broken by value and then at random. With this
    order the winning set stays monotone in each agent's own value, so the
    smallest winning report is well defined and found by bisection.
    """
    V = np.asarray(V, dtype=float)
    S, n = V.shape
    phi = _phi_matrix(V, dists)
    scale = V.max(axis=1, keepdims=True)
    eligible = (phi >= 0) | _tie(phi, 0.0, V)
    top = np.where(eligible, phi, -np.inf).max(axis=1, keepdims=True)
    cand = eligible & (_tie(phi, top, scale) | (phi == top))
    vtop = np.where(cand, V, -np.inf).max(axis=1, keepdims=True)
    w = _argmax_random(V, rng, cand & (V == vtop))
    pay = np.zeros(S)
    rows = np.arange(S)
    for i in range(n):
        sel = rows[w == i]
        if sel.size == 0:
            continue
        others = [j for j in range(n) if j != i]
        if others:
            ph_o = phi[np.ix_(sel, others)]
            el_o = eligible[np.ix_(sel, others)]
            ph_o = np.where(el_o, ph_o, -np.inf)
            best = ph_o.max(axis=1)
            sc = scale[sel]
            v_o = np.where(el_o & (_tie(ph_o, best[:, None], sc) | (ph_o == best[:, None])),
                           V[np.ix_(sel, others)], -np.inf).max(axis=1)
            sc = sc[:, 0]
            # below the reserve only the reserve itself competes
            beaten_by_reserve = ~np.isfinite(best) | ((best < 0) & ~_tie(best, 0.0, sc))
            phi_star = np.where(beaten_by_reserve, 0.0, np.maximum(best, 0.0))
            v_star = np.where(beaten_by_reserve, -np.inf, v_o)
        else:
            phi_star = np.zeros(sel.size)
            v_star = np.full(sel.size, -np.inf)
            sc = V[sel, i]
        d = dists[i]

        def wins(z):
            ph = virtual_value(d, z)
            tie = _tie(ph, phi_star, sc)
            return (ph > phi_star) & ~tie | (tie & (z >= v_star))

        lo = np.full(sel.size, float(d.lower_support))
        hi = V[sel, i].copy()
        at_lo = wins(lo)
        for _ in range(_BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            ok = wins(mid)
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        pay[sel] = np.where(at_lo, float(d.lower_support), hi)
    return w, pay


def run_myerson(profile, dists, seed=0) -> Outcome:
    V = _as_matrix(profile)
    if len(dists) != V.shape[1]:
        raise ValueError("one distribution per agent is required")
    _require_regular(dists)
    return _outcome(*myerson_batch(V, list(dists), _rng(seed)), V.shape[1])


# -- one-priced curves ----------------------------------------------------------


@dataclass(frozen=True)
class OnePricedCurves:
    """Interim allocation, capacitated payment and bids for one agent.

    ``bid`` is the bid curve sampled on the grid. ``bid_at`` evaluates the
    bid of any type from the payment identity itself, using the exact
    allocation ``alloc_fn(u, v)``, the interpolated integral of x, and the
    running offset of the nearest grid point below. Taking the maximum with
    the floor at evaluation time keeps regime switches sharp between grid
    points.

    When ``quantiles`` is set, grid points are indexed by quantile level;
    this is how a top atom is spread over sub-quantiles.
    """

    allocation: InterimAllocation
    payment: PaymentCurve
    bid: BidCurve
    capacity: float
    alloc_fn: Optional[Callable] = field(default=None, compare=False)
    quantiles: Optional[np.ndarray] = None

    def __post_init__(self):
        g, x, p = self.allocation.grid, self.allocation.x, self.payment.p
        integral = g * x - risk_neutral_payment(self.allocation).p
        if math.isinf(self.capacity):
            offset = np.zeros(g.size)
        else:
            offset = np.maximum.accumulate(np.maximum(p - (g * x - integral), 0.0))
        object.__setattr__(self, "_integral", integral)
        object.__setattr__(self, "_offset", offset)

    @property
    def bids(self) -> np.ndarray:
        """Bids at the grid points (quantile-indexed when quantiles are set)."""
        u = self.quantiles if self.quantiles is not None else None
        return np.asarray(self.bid_at(u, self.allocation.grid), dtype=float)

    def bid_at(self, u, v):
        v = np.asarray(v, dtype=float)
        if self.alloc_fn is None:
            return self.bid(v)
        g, xg = self.allocation.grid, self.allocation.x
        x = np.clip(np.asarray(self.alloc_fn(u, v), dtype=float), 0.0, 1.0)
        integral = np.interp(v, g, self._integral)
        integral = np.where(v > g[-1], self._integral[-1] + (v - g[-1]) * xg[-1], integral)
        prn = v * x - integral
        nodes, key = (g, v) if self.quantiles is None else (self.quantiles, np.asarray(u, dtype=float))
        j = np.clip(np.searchsorted(nodes, key, side="right") - 1, 0, g.size - 1)
        pc = prn + self._offset[j]
        if math.isfinite(self.capacity):
            pc = np.maximum(pc, (v - self.capacity) * x)
        with np.errstate(divide="ignore", invalid="ignore"):
            # types that never win bid nothing
            return np.where(x > 0, pc / np.where(x > 0, x, 1.0), 0.0)


@dataclass(frozen=True)
class _PowerAllocation:
    """Symmetric highest-type-wins allocation ``u^m`` at quantile level u."""

    m: int

    def __call__(self, u, v):
        return np.asarray(u, dtype=float) ** self.m


@dataclass(frozen=True)
class _ValueAllocation:
    fn: Callable
    args: tuple

    def __call__(self, u, v):
        return self.fn(*self.args, v)


def _quantile_levels(d: ValueDistribution, k: int) -> np.ndarray:
    top = 1.0 if math.isfinite(d.upper_support) else 1.0 - 1.0 / (k * k)
    u = np.linspace(0.0, top, k)
    if d.atom_at_upper > 0:
        u = np.union1d(u, [1.0 - d.atom_at_upper])
    return u


def _check_continuous(d, allow_top_atom):
    if isinstance(d, DiscreteTypeSpace):
        raise AtomicDistribution("equilibrium construction needs a continuous distribution")
    if d.has_interior_atoms:
        raise AtomicDistribution("interior point masses are not supported")
    if not allow_top_atom and d.atom_at_upper > 0:
        raise AtomicDistribution("point masses are not supported by this construction")


@dataclass(frozen=True)
class FpaEquilibrium:
    """Symmetric first-price equilibrium. Unpacks as ``(allocation, payment, bid)``."""

    agent: AgentSpec
    n: int
    curves: OnePricedCurves

    @property
    def allocation(self) -> InterimAllocation:
        return self.curves.allocation

    @property
    def payment(self) -> PaymentCurve:
        return self.curves.payment

    @property
    def bid(self) -> BidCurve:
        return self.curves.bid

    def __iter__(self):
        return iter((self.allocation, self.payment, self.bid))


def fpa_symmetric_equilibrium(agent: AgentSpec, n: int, k: int = 2000) -> FpaEquilibrium:
    """Symmetric equilibrium of the first-price auction with common capacity.

    The allocation is ``u^(n-1)`` at quantile level ``u``; payments follow
    the capacitated payment identity and bids are payment over allocation.
    """
    if n < 2:
        raise ValueError("the first-price equilibrium needs at least two bidders")
    d = agent.distribution
    _check_continuous(d, allow_top_atom=True)
    u = _quantile_levels(d, k)
    v = np.asarray(d.quantile(u), dtype=float)
    x = u ** (n - 1)
    alloc = InterimAllocation(v, x)
    pay = capacitated_payment(alloc, agent.capacity)
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(x > 0, pay.p / np.where(x > 0, x, 1.0), 0.0)
    keep = x > 0
    # value-indexed view; at a repeated value the lowest-quantile bid is kept,
    # which is the limit from below
    vv, idx = np.unique(v[keep], return_index=True)
    bb = raw[keep][idx]
    if vv[0] > v[0]:
        # a type that never wins bids its value, the limit of the bids above it
        vv, bb = np.concatenate([[v[0]], vv]), np.concatenate([[v[0]], bb])
    curve = BidCurve(vv, bb, agent.capacity)
    curves = OnePricedCurves(alloc, pay, curve, agent.capacity,
                             alloc_fn=_PowerAllocation(n - 1), quantiles=u)
    return FpaEquilibrium(agent, n, curves)


def fpa_batch(V, U, curves: Sequence[OnePricedCurves], rng):
    V = np.asarray(V, dtype=float)
    B = np.column_stack([curves[j].bid_at(U[:, j], V[:, j]) for j in range(V.shape[1])])
    w = _argmax_random(B, rng)
    return w, B[np.arange(V.shape[0]), w]


def run_fpa(profile, bid_curve: Callable, seed=0) -> Outcome:
    """Bids are ``bid_curve(value)``; the highest bid wins and pays itself."""
    V = _as_matrix(profile)
    if isinstance(bid_curve, FpaEquilibrium):
        bid_curve = bid_curve.bid
    B = np.asarray(bid_curve(V[0]), dtype=float)[None, :]
    w = _argmax_random(B, _rng(seed))
    return _outcome(w, B[np.arange(1), w], V.shape[1])


# -- asymmetric one-priced constructions -------------------------------------


def myerson_alloc_interim(dists, i, v):
    """``prod_{j != i} F_j(phi_j^{-1}(phi_i(v)))`` above agent i's reserve, 0 below."""
    v = np.asarray(v, dtype=float)
    phi = virtual_value(dists[i], v)
    out = np.ones(v.shape)
    for j, d in enumerate(dists):
        if j == i:
            continue
        out = out * np.asarray(d.cdf(inverse_virtual_value(d, phi)), dtype=float)
    eligible = (phi >= 0) | _tie(phi, 0.0, v)
    return np.where(eligible, out, 0.0)


def max_v_minus_c_interim(dists, capacities, i, v):
    """``prod_{j != i} F_j(v - C_i + C_j)``."""
    v = np.asarray(v, dtype=float)
    out = np.ones(v.shape)
    for j, d in enumerate(dists):
        if j != i:
            out = out * np.asarray(d.cdf(v - capacities[i] + capacities[j]), dtype=float)
    return out


def _value_grid(d: ValueDistribution, k: int, extra=()) -> np.ndarray:
    u = _quantile_levels(d, k)
    return np.union1d(np.asarray(d.quantile(u), dtype=float), np.asarray(extra, dtype=float))


def _one_priced_curves(grid, x, C, alloc_fn) -> OnePricedCurves:
    alloc = InterimAllocation(grid, x)
    return OnePricedCurves(alloc, capacitated_payment(alloc, C), bid_function(alloc, C), C,
                           alloc_fn=alloc_fn)


def asym_one_priced(agents: Sequence[AgentSpec], which: str, k: int = 2000) -> "MechanismSpec":
    """Direct one-priced mechanism with one of the two asymmetric allocation rules.

    ``which="myerson-alloc"`` reuses the risk-neutral optimal allocation;
    ``which="max-v-minus-c"`` serves the largest ``v_i - C_i``. Each winner
    pays ``p_cap_i(v_i) / x_i(v_i)``.
    """
    kind = _RULE_NAMES.get(which, which)
    if kind not in (MAX_V_MINUS_C, MYERSON_ALLOC):
        raise ValueError(f"unknown one-priced rule {which!r}")
    return make_mechanism(kind, agents, k)


def one_priced_batch(kind, V, dists, capacities, curves, rng):
    V = np.asarray(V, dtype=float)
    S, n = V.shape
    if kind == MAX_V_MINUS_C:
        w = _argmax_random(V - np.asarray(capacities, dtype=float), rng)
    else:
        phi = _phi_matrix(V, dists)
        eligible = (phi >= 0) | _tie(phi, 0.0, V)
        s = np.where(eligible, phi, -np.inf)
        w = np.where(eligible.any(axis=1), s.argmax(axis=1), -1)  # index order on ties
    pay = np.zeros(S)
    for i in range(n):
        m = w == i
        if np.any(m):
            pay[m] = curves[i].bid_at(None, V[m, i])
    return w, pay


# -- mechanism specs ------------------------------------------------------------


def _symmetric(agents) -> bool:
    a0 = agents[0]
    return all(a.distribution == a0.distribution and a.capacity == a0.capacity for a in agents)


@dataclass(frozen=True)
class MechanismSpec:
    kind: str
    agents: tuple
    grid_size: int = 2000
    curves: Optional[tuple] = field(default=None, compare=False)

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def distributions(self) -> list:
        return [a.distribution for a in self.agents]

    @property
    def capacities(self) -> np.ndarray:
        return np.array([a.capacity for a in self.agents], dtype=float)

    @property
    def symmetric(self) -> bool:
        return _symmetric(self.agents)

    def to_config(self) -> dict:
        return {"kind": self.kind, "agents": [a.to_config() for a in self.agents],
                "grid_size": self.grid_size}

    @classmethod
    def from_config(cls, cfg: dict) -> "MechanismSpec":
        agents = [AgentSpec.from_config(a) for a in cfg["agents"]]
        return make_mechanism(cfg["kind"], agents, int(cfg.get("grid_size", 2000)))

    def with_curves(self, curves) -> "MechanismSpec":
        return MechanismSpec(self.kind, self.agents, self.grid_size, tuple(curves))

    def run_batch(self, V, U, rng):
        """Outcomes for value matrix V drawn at quantile levels U."""
        if self.kind == SPA:
            return spa_batch(V, rng)
        if self.kind == CSP:
            return csp_batch(V, self.capacities, rng)
        if self.kind == MYERSON:
            return myerson_batch(V, self.distributions, rng)
        if self.kind == FPA:
            return fpa_batch(V, U, self.curves, rng)
        return one_priced_batch(self.kind, V, self.distributions, self.capacities, self.curves, rng)

    def interim_allocation(self, i: int, u, v) -> np.ndarray:
        """Exact interim winning probability of agent i at quantile u / value v."""
        u = np.asarray(u, dtype=float)
        dists = self.distributions
        if self.kind == MAX_V_MINUS_C:
            return max_v_minus_c_interim(dists, self.capacities, i, v)
        if self.kind == MYERSON_ALLOC:
            return myerson_alloc_interim(dists, i, v)
        if self.symmetric:
            x = u ** (self.n - 1)
            if self.kind == MYERSON:
                phi = virtual_value(dists[i], v)
                x = np.where((phi >= 0) | _tie(phi, 0.0, v), x, 0.0)
            return x
        if self.kind == MYERSON:
            return myerson_alloc_interim(dists, i, v)
        x = np.ones(np.shape(v))
        for j, d in enumerate(dists):
            if j != i:
                x = x * np.asarray(d.cdf(v), dtype=float)
        return x


def make_mechanism(kind: str, agents: Sequence[AgentSpec], k: int = 2000) -> MechanismSpec:
    """Validate inputs and build the curves a mechanism needs."""
    if kind not in KINDS:
        raise ValueError(f"unknown mechanism kind {kind!r}")
    agents = tuple(agents)
    if not agents:
        raise EmptyProfile("a mechanism needs at least one agent")
    spec = MechanismSpec(kind, agents, k)
    dists = spec.distributions
    if kind in (MYERSON, MYERSON_ALLOC):
        _require_regular(dists)
    if kind == FPA:
        if not spec.symmetric:
            raise ValueError("the first-price equilibrium is built for symmetric agents only")
        eq = fpa_symmetric_equilibrium(agents[0], len(agents), k)
        return spec.with_curves([eq.curves] * len(agents))
    if kind in (MAX_V_MINUS_C, MYERSON_ALLOC):
        for d in dists:
            _check_continuous(d, allow_top_atom=False)
        caps = spec.capacities
        curves = []
        for i, a in enumerate(agents):
            if kind == MAX_V_MINUS_C:
                if np.any(np.isinf(caps)):
                    raise UnboundedCapacity("the max v - C rule needs finite capacities")
                fn = _ValueAllocation(max_v_minus_c_interim, (tuple(dists), tuple(caps), i))
                grid = _value_grid(a.distribution, k)
                x = fn(None, grid)
            else:
                r = monopoly_reserve(a.distribution)
                fn = _ValueAllocation(myerson_alloc_interim, (tuple(dists), i))
                grid = _value_grid(a.distribution, k, extra=[r])
                x = fn(None, grid)
                # make the jump at the reserve explicit: x is 0 just below it
                j = int(np.searchsorted(grid, r))
                grid = np.insert(grid, j, r)
                x = np.insert(x, j, 0.0)
            curves.append(_one_priced_curves(grid, x, a.capacity, fn))
        return spec.with_curves(curves)
    return spec


@dataclass(frozen=True)
class ShiftedCurves:
    """One-priced curves whose every bid is raised by ``delta``; a test fixture."""

    base: OnePricedCurves
    delta: float

    @property
    def capacity(self):
        return self.base.capacity

    @property
    def allocation(self):
        return self.base.allocation

    @property
    def payment(self):
        return self.base.payment

    @property
    def bid(self):
        b = self.base.bid
        return BidCurve(b.grid, b.bid + self.delta, b.capacity)

    def bid_at(self, u, v):
        return np.asarray(self.base.bid_at(u, v), dtype=float) + self.delta

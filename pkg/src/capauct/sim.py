"""Monte-Carlo revenue estimates, best-response audits and approximation reports.

Randomness: ``estimate_revenue`` splits its seed into one child stream per
batch of ``BATCH`` profiles with ``numpy.random.SeedSequence.spawn``. The
batch schedule depends only on the sample count, so a seed pins every
number. Batches are merged by count-weighted mean and pooled squared
deviations. ``derive_seed`` turns a root seed and a label into an
independent 64-bit seed for each consumer.
"""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import auctions as au
from .dist import AgentSpec, DiscreteTypeSpace, discretize, is_regular, virtual_value
from .errors import AtomicDistribution, NotRegular, TooLarge, UnboundedCapacity
from .optlp import optimal_two_priced

BATCH = 1 << 16
Z95 = 1.96
SLACK_WIDTHS = 3.0

# type-grid size used for the ex-post LP, by number of agents
LP_TYPES = {1: 60, 2: 12, 3: 6}


def derive_seed(root: int, label: str) -> int:
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(label.encode())])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class RevenueEstimate:
    mean: float
    half_width_95: float
    samples: int
    seed: int
    std: float = 0.0

    @property
    def slack(self) -> float:
        return SLACK_WIDTHS * self.half_width_95


def _quantile(d, u):
    if isinstance(d, DiscreteTypeSpace):
        idx = np.searchsorted(np.cumsum(d.masses), u, side="right")
        return d.values[np.minimum(idx, len(d) - 1)]
    return np.asarray(d.quantile(u), dtype=float)


def _draw(mech: au.MechanismSpec, rng, size):
    U = rng.random((size, mech.n))
    V = np.column_stack([_quantile(d, U[:, j]) for j, d in enumerate(mech.distributions)])
    return U, V


def estimate_revenue(mech: au.MechanismSpec, samples: int, seed: int) -> RevenueEstimate:
    """Mean total payment over ``samples`` i.i.d. value profiles."""
    if samples < 100:
        raise ValueError("at least 100 samples are needed")
    sizes = [BATCH] * (samples // BATCH)
    if samples % BATCH:
        sizes.append(samples % BATCH)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    count, mean, m2 = 0, 0.0, 0.0
    for size, child in zip(sizes, children):
        rng = np.random.default_rng(child)
        U, V = _draw(mech, rng, size)
        _, pay = mech.run_batch(V, U, rng)
        b_mean = float(pay.mean())
        b_m2 = float(((pay - b_mean) ** 2).sum())
        total = count + size
        delta = b_mean - mean
        mean += delta * size / total
        m2 += b_m2 + delta * delta * count * size / total
        count = total
    std = math.sqrt(m2 / (count - 1))
    return RevenueEstimate(mean, Z95 * std / math.sqrt(count), count, int(seed), std)


# -- best-response audit ------------------------------------------------------


def _audit_points(d, grid: int):
    u = au._quantile_levels(d, grid)
    return u, _quantile(d, u)


def _u_cap(z, C):
    return z if math.isinf(C) else np.minimum(z, C)


def utility_matrix(mech: au.MechanismSpec, agent: int = 0, grid: int = 2001):
    """Interim utilities ``U[t, r]`` of true type t reporting r on an audit grid.

    Types and reports are quantile levels of the agent's distribution. The
    winning probability is the mechanism's exact interim allocation.
    One-priced mechanisms charge the interpolated bid on winning. Threshold
    mechanisms integrate the capped surplus against the distribution of the
    winning threshold, assigning each cell's mass to its right end.
    Returns ``(u, v, U)``.
    """
    d = mech.agents[agent].distribution
    C = float(mech.agents[agent].capacity)
    u, v = _audit_points(d, grid)
    x = np.clip(np.asarray(mech.interim_allocation(agent, u, v), dtype=float), 0.0, 1.0)
    vt = v[:, None]
    if mech.kind in au.ONE_PRICED:
        b = np.asarray(mech.curves[agent].bid_at(u, v), dtype=float)
        return u, v, x[None, :] * _u_cap(vt - b[None, :], C)
    T = v.size
    dG = np.diff(x, prepend=0.0)
    S1 = np.concatenate([[0.0], np.cumsum(dG)])
    S2 = np.concatenate([[0.0], np.cumsum(dG * v)])
    if mech.kind == au.CSP:
        c = np.minimum(C, vt - v[None, :] + C)
    else:
        c = np.full((T, T), C)
    with np.errstate(invalid="ignore"):
        a = np.searchsorted(v, (vt - c).ravel(), side="right").reshape(T, T)
    m2 = np.broadcast_to(np.arange(1, T + 1)[None, :], (T, T))
    m1 = np.minimum(a, m2)
    with np.errstate(invalid="ignore"):
        capped = np.where(m1 > 0, c * S1[m1], 0.0)
    U = capped + vt * (S1[m2] - S1[m1]) - (S2[m2] - S2[m1])
    return u, v, U


def best_response_gap(mech: au.MechanismSpec, agent: int = 0, grid: int = 2001) -> float:
    """Largest interim utility gain from misreporting, over an audit grid.

    The audit grid is independent of the grid the mechanism was built on.
    """
    _, _, U = utility_matrix(mech, agent, grid)
    return float(max(0.0, np.max(U.max(axis=1) - np.diag(U))))


def shifted_bids(mech: au.MechanismSpec, delta: float) -> au.MechanismSpec:
    """Copy of a one-priced mechanism with every bid raised by ``delta``."""
    if mech.kind not in au.ONE_PRICED:
        raise ValueError("only one-priced mechanisms have bid curves")
    return mech.with_curves([au.ShiftedCurves(c, delta) for c in mech.curves])


# -- upper bound on optimal revenue ---------------------------------------------------


def _expected_max(supports, masses) -> float:
    """E[max_i Z_i] for independent discrete non-negative Z_i."""
    allz = np.unique(np.concatenate(supports + [np.zeros(1)]))
    joint = np.ones(allz.size)
    for z, m in zip(supports, masses):
        order = np.argsort(z)
        cum = np.concatenate([[0.0], np.cumsum(m[order])])
        joint *= np.minimum(cum[np.searchsorted(z[order], allz, side="right")], 1.0)
    return float(np.dot(allz, np.diff(joint, prepend=0.0)))


def revenue_upper_bound(agents: Sequence[AgentSpec], resolution: int = 20000) -> dict:
    """Upper bound ``2 E[max_i phi_i^+] + E[max_i (v_i - C_i)^+]`` on optimal revenue.

    Each agent's distribution is replaced by ``resolution`` equal-mass
    quantile points (the top atom kept separately).
    """
    phis, vcs, ms = [], [], []
    for a in agents:
        d = a.distribution
        t = d if isinstance(d, DiscreteTypeSpace) else discretize(d, resolution)
        if isinstance(d, DiscreteTypeSpace):
            phi = t.virtual_values()
        else:
            phi = virtual_value(d, t.values)
        phis.append(np.maximum(phi, 0.0))
        vcs.append(np.zeros(len(t)) if math.isinf(a.capacity) else np.maximum(t.values - a.capacity, 0.0))
        ms.append(np.asarray(t.masses, dtype=float))
    rn = _expected_max(phis, ms)
    vc = _expected_max(vcs, ms)
    return {"bound": 2.0 * rn + vc, "risk_neutral": rn, "value_minus_capacity": vc}


# -- approximation report ---------------------------------------------------------


@dataclass(frozen=True)
class ApproximationReport:
    opt_revenue: float
    opt_source: str
    candidate_revenues: dict
    ratios: dict
    checks: dict
    bound_checked: tuple
    notes: tuple = field(default=())
    upper_bound: float = math.nan

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def rows(self):
        """One row per candidate: name, revenue, CI half-width, ratio."""
        return [(name, est.mean, est.half_width_95, self.ratios[name])
                for name, est in self.candidate_revenues.items()]


def optimal_revenue(agents: Sequence[AgentSpec], k: Optional[int] = None, method: str = "auto",
                    pivot_rule: str = "dantzig-bland"):
    """Optimal revenue on a discretized instance, or the analytic bound.

    Returns ``(value, source)`` with ``source`` one of ``"lp"`` or ``"bound"``.
    """
    n = len(agents)
    if method in ("auto", "lp"):
        k = k or LP_TYPES.get(n)
        try:
            if k is None:
                raise TooLarge(f"no LP grid size configured for {n} agents")
            disc = [AgentSpec(a.distribution if isinstance(a.distribution, DiscreteTypeSpace)
                              else discretize(a.distribution, k, "mean"), a.capacity) for a in agents]
            res = optimal_two_priced(disc if n > 1 else disc[0], pivot_rule=pivot_rule,
                                     max_profiles=max(k ** n, 1))
            return res.revenue, "lp"
        except TooLarge:
            if method == "lp":
                raise
    return revenue_upper_bound(agents)["bound"], "bound"


def _candidates(agents, grid_size):
    out, notes = {}, []
    kinds = [au.SPA, au.CSP, au.MYERSON, au.FPA, au.MYERSON_ALLOC, au.MAX_V_MINUS_C]
    for kind in kinds:
        try:
            out[kind] = au.make_mechanism(kind, agents, grid_size)
        except (NotRegular, AtomicDistribution, UnboundedCapacity, ValueError) as exc:
            notes.append(f"{kind} skipped: {exc}")
    return out, notes


def approximation_report(agents: Sequence[AgentSpec], samples: int, seed: int,
                         k: Optional[int] = None, opt: str = "auto",
                         grid_size: int = 2000) -> ApproximationReport:
    """Compare optimal revenue against the simple mechanisms on one instance.

    Checks, each with slack of three CI half-widths:

    * ``3-approx``: OPT <= 3 max(Myerson, CSP)
    * ``5-approx`` (symmetric instances): FPA >= OPT / 5
    * ``one-priced-3-approx``: max(both one-priced rules, Myerson) >= OPT / 3

    OPT is the LP optimum of a discretized copy of the instance. When the LP
    is used, each check is repeated with the analytic upper bound in place
    of OPT (suffix ``[bound]``), which is valid for the continuous instance
    itself.
    """
    agents = list(agents)
    opt_value, source = optimal_revenue(agents, k, opt)
    bound = revenue_upper_bound(agents)["bound"] if source == "lp" else opt_value
    mechs, notes = _candidates(agents, grid_size)
    est = {name: estimate_revenue(m, samples, seed) for name, m in mechs.items()}
    ratios = {name: (opt_value / e.mean if e.mean > 0 else math.inf) for name, e in est.items()}
    best_name = max(est, key=lambda n_: est[n_].mean)
    if est[best_name].mean > opt_value:
        notes.append(f"{best_name} earns {est[best_name].mean:.6g}, above the discretized LP "
                     f"optimum {opt_value:.6g}; the LP grid is too coarse for this instance")
    checks = {}
    for tag, target in (("", opt_value), ("[bound]", bound)):
        if tag and source != "lp":
            break
        simple = [est[k_] for k_ in (au.MYERSON, au.CSP) if k_ in est]
        if simple:
            best = max(simple, key=lambda e: e.mean)
            checks["3-approx" + tag] = target <= 3.0 * best.mean + best.slack
        if au.FPA in est:
            checks["5-approx" + tag] = est[au.FPA].mean >= target / 5.0 - est[au.FPA].slack
        one = [est[k_] for k_ in (au.MYERSON_ALLOC, au.MAX_V_MINUS_C, au.MYERSON) if k_ in est]
        if len(one) > 1:
            best = max(one, key=lambda e: e.mean)
            checks["one-priced-3-approx" + tag] = best.mean >= target / 3.0 - best.slack
    return ApproximationReport(opt_value, source, est, ratios, checks, tuple(checks), tuple(notes), bound)


def revenue_ordering(agents: Sequence[AgentSpec], samples: int, seed: int, grid_size: int = 2000) -> dict:
    """FPA against CSP and SPA on a symmetric instance, with common random numbers.

    The slack for each comparison is three half-widths of each estimate.
    """
    est = {kind: estimate_revenue(au.make_mechanism(kind, agents, grid_size), samples, seed)
           for kind in (au.FPA, au.CSP, au.SPA)}
    f = est[au.FPA]
    return {
        "estimates": est,
        "fpa>=csp": f.mean >= est[au.CSP].mean - (f.slack + est[au.CSP].slack),
        "fpa>=spa": f.mean >= est[au.SPA].mean - (f.slack + est[au.SPA].slack),
    }


def bulow_klemperer_estimates(d, n: int, samples: int, seed: int):
    if isinstance(d, DiscreteTypeSpace) or not is_regular(d):
        raise NotRegular("the comparison needs a regular distribution")
    spa = estimate_revenue(au.make_mechanism(au.SPA, [AgentSpec(d)] * (n + 1)), samples, seed)
    mye = estimate_revenue(au.make_mechanism(au.MYERSON, [AgentSpec(d)] * n), samples,
                           derive_seed(seed, "myerson"))
    return spa, mye


def bulow_klemperer_check(d, n: int, samples: int = 200_000, seed: int = 0) -> bool:
    """Second-price with n+1 bidders earns at least Myerson with n, up to slack."""
    spa, mye = bulow_klemperer_estimates(d, n, samples, seed)
    return bool(spa.mean >= mye.mean - (spa.slack + mye.slack))

"""Linear programs for revenue-optimal two-priced auctions.

Single agent: variables ``qv_i, qc_i`` per type, objective
``sum_i f_i (v_i (qv_i + qc_i) - C qc_i)``, and one direct IC row per
ordered pair of types.

Several agents: ex-post variables ``av_i(t), ac_i(t)`` per type profile
``t``, at most one winner per profile, and the single-agent IC rows written
on each agent's interim marginals.

With infinite capacity the pair (qc, C) degenerates; the programs then use
the risk-neutral limit with an explicit expected rebate ``r = C qc`` in
place of ``qc``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .dist import AgentSpec, DiscreteTypeSpace
from .errors import TooLarge
from .simplex import LinearProgram, LpSolution, solve_lp
from .two_price import TwoPricedRule, check_bic

MAX_PROFILES = 10**6


def _types(agent: AgentSpec) -> DiscreteTypeSpace:
    if not isinstance(agent.distribution, DiscreteTypeSpace):
        raise TypeError("LP construction needs a DiscreteTypeSpace; see dist.discretize")
    return agent.distribution


def _ic_coefficients(values, capacity):
    """Coefficients of the IC row 'type s does not gain by reporting s2'.

    Returns (a_own, b_qv, b_qc) such that the row reads
    a_own * qc[s] - b_qv * qv[s2] - b_qc * qc[s2] >= 0 for finite C, and
    r[s] - b_qv * q[s2] - r[s2] >= 0 for infinite C.
    """
    v = np.asarray(values, dtype=float)
    gap = v[:, None] - v[None, :]
    if math.isinf(capacity):
        return 1.0, gap, np.ones_like(gap)
    C = capacity
    return C, np.minimum(gap, C), np.minimum(gap + C, C)


def build_single_agent_lp(agent: AgentSpec) -> LinearProgram:
    d = _types(agent)
    k = len(d)
    C = agent.capacity
    v, f = d.values, d.masses
    inf = math.isinf(C)
    if inf:
        c = np.concatenate([f * v, -f])
    else:
        c = np.concatenate([f * v, f * (v - C)])
    a_own, b_qv, b_qc = _ic_coefficients(v, C)
    rows = []
    for s in range(k):
        for s2 in range(k):
            if s == s2:
                continue
            row = np.zeros(2 * k)
            row[k + s] += a_own
            row[s2] -= b_qv[s, s2]
            row[k + s2] -= b_qc[s, s2]
            rows.append(row)
    senses = [">="] * len(rows)
    rhs = [0.0] * len(rows)
    if inf:
        bounds = np.vstack([np.tile([0.0, 1.0], (k, 1)), np.tile([0.0, math.inf], (k, 1))])
    else:
        for s in range(k):
            row = np.zeros(2 * k)
            row[s] = row[k + s] = 1.0
            rows.append(row)
            senses.append("<=")
            rhs.append(1.0)
        bounds = np.tile([0.0, math.inf], (2 * k, 1))
    A = np.array(rows).reshape(-1, 2 * k)
    return LinearProgram(c, A, tuple(senses), np.array(rhs), bounds)


@dataclass(frozen=True)
class ExpostLayout:
    """Variable indexing of the ex-post program."""

    n_agents: int
    sizes: tuple
    profiles: np.ndarray  # (P, n) type indices

    def var(self, p, i, which):
        return (p * self.n_agents + i) * 2 + which

    @property
    def n_vars(self):
        return len(self.profiles) * self.n_agents * 2


def build_multi_agent_expost_lp(agents: Sequence[AgentSpec], max_profiles: int = MAX_PROFILES):
    """Ex-post LP over all type profiles. Returns ``(lp, layout)``."""
    spaces = [_types(a) for a in agents]
    sizes = tuple(len(d) for d in spaces)
    n_profiles = math.prod(sizes)
    if n_profiles > max_profiles:
        raise TooLarge(f"{n_profiles} type profiles exceed the cap of {max_profiles}")
    n = len(agents)
    profiles = np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=int).reshape(-1, n)
    lay = ExpostLayout(n, sizes, profiles)
    P = len(profiles)
    masses = np.array([[spaces[i].masses[t[i]] for i in range(n)] for t in profiles])
    prob = masses.prod(axis=1)
    c = np.zeros(lay.n_vars)
    bounds = np.tile([0.0, math.inf], (lay.n_vars, 1))
    rows, senses, rhs = [], [], []
    for p, t in enumerate(profiles):
        row = np.zeros(lay.n_vars)
        for i, ag in enumerate(agents):
            vi = spaces[i].values[t[i]]
            iv, ic = lay.var(p, i, 0), lay.var(p, i, 1)
            row[iv] = 1.0
            if math.isinf(ag.capacity):
                c[iv] = prob[p] * vi
                c[ic] = -prob[p]
            else:
                row[ic] = 1.0
                c[iv] = prob[p] * vi
                c[ic] = prob[p] * (vi - ag.capacity)
        rows.append(row)
        senses.append("<=")
        rhs.append(1.0)
    for i, ag in enumerate(agents):
        d = spaces[i]
        others = np.delete(masses, i, axis=1).prod(axis=1) if n > 1 else np.ones(P)
        # interim marginal coefficient vectors per own type
        marg = np.zeros((2, len(d), lay.n_vars))
        for p, t in enumerate(profiles):
            for which in (0, 1):
                marg[which, t[i], lay.var(p, i, which)] = others[p]
        a_own, b_qv, b_qc = _ic_coefficients(d.values, ag.capacity)
        for s in range(len(d)):
            for s2 in range(len(d)):
                if s == s2:
                    continue
                rows.append(a_own * marg[1, s] - b_qv[s, s2] * marg[0, s2] - b_qc[s, s2] * marg[1, s2])
                senses.append(">=")
                rhs.append(0.0)
    A = np.array(rows)
    return LinearProgram(c, A, tuple(senses), np.array(rhs), bounds), lay


@dataclass(frozen=True)
class OptimalAuction:
    rules: list
    revenue: float
    solution: LpSolution
    lp: LinearProgram

    @property
    def rule(self) -> TwoPricedRule:
        return self.rules[0]


def _rule_from(values, capacity, qv, qc) -> TwoPricedRule:
    qv = np.clip(qv, 0.0, 1.0)
    if math.isinf(capacity):
        return TwoPricedRule(values, qv, np.zeros_like(qv), capacity, rebate=np.maximum(qc, 0.0))
    qc = np.clip(qc, 0.0, 1.0)
    over = qv + qc - 1.0
    qv = np.where(over > 0, qv - over, qv)
    return TwoPricedRule(values, qv, qc, capacity)


def _ic_pairs(k):
    return [(s, s2) for s in range(k) for s2 in range(k) if s != s2]


def solve_with_row_generation(lp: LinearProgram, core, pivot_rule: str = "bland", tol: float = 1e-9,
                              batch: Optional[int] = None) -> LpSolution:
    """Solve ``lp`` starting from the rows in ``core`` and adding violated rows until none remain.

    The result is an optimum of the full program: every row is checked at
    the final point. ``batch`` caps how many of the most violated rows join
    per round (default: the number of variables). An unbounded partial
    program says nothing about the full one, which is then solved directly.
    """
    A, b, senses = lp.constraint_matrix, lp.rhs, lp.senses
    sign = np.array([{"<=": 1.0, ">=": -1.0, "=": 0.0}[s] for s in senses])
    active = np.zeros(len(b), dtype=bool)
    active[np.asarray(core, dtype=int)] = True
    active |= sign == 0.0
    batch = batch or lp.objective.size
    while True:
        idx = np.flatnonzero(active)
        sub = LinearProgram(lp.objective, A[idx], tuple(senses[i] for i in idx), b[idx], lp.bounds)
        sol = solve_lp(sub, pivot_rule=pivot_rule)
        if sol.status == "unbounded" and not active.all():
            return solve_lp(lp, pivot_rule=pivot_rule)
        if not sol.optimal:
            return sol
        excess = sign * (A @ sol.assignment - b)
        excess[active] = -np.inf
        worst = np.argsort(-excess)[:batch]
        worst = worst[excess[worst] > tol]
        if worst.size == 0:
            return sol
        active[worst] = True


def optimal_two_priced(agents: Union[AgentSpec, Sequence[AgentSpec]], pivot_rule: str = "bland",
                       max_profiles: int = MAX_PROFILES) -> OptimalAuction:
    """Build and solve the revenue LP and unpack interim two-priced rules."""
    if isinstance(agents, AgentSpec):
        agents = [agents]
    agents = list(agents)
    if len(agents) == 1:
        lp = build_single_agent_lp(agents[0])
        k = len(_types(agents[0]))
        core = [r for r, (s, s2) in enumerate(_ic_pairs(k)) if abs(s - s2) == 1]
        core += list(range(k * (k - 1), lp.shape[0]))
        sol = solve_with_row_generation(lp, core, pivot_rule)
        if not sol.optimal:
            raise RuntimeError(f"revenue LP is {sol.status}")
        k = len(_types(agents[0]))
        x = sol.assignment
        rules = [_rule_from(_types(agents[0]).values, agents[0].capacity, x[:k], x[k:])]
    else:
        lp, lay = build_multi_agent_expost_lp(agents, max_profiles)
        core = list(range(len(lay.profiles)))
        start = len(core)
        for k in lay.sizes:
            core += [start + r for r, (s, s2) in enumerate(_ic_pairs(k)) if abs(s - s2) == 1]
            start += k * (k - 1)
        sol = solve_with_row_generation(lp, core, pivot_rule)
        if not sol.optimal:
            raise RuntimeError(f"revenue LP is {sol.status}")
        x = sol.assignment
        spaces = [_types(a) for a in agents]
        masses = np.array([[spaces[i].masses[t[i]] for i in range(len(agents))] for t in lay.profiles])
        rules = []
        for i, ag in enumerate(agents):
            others = np.delete(masses, i, axis=1).prod(axis=1)
            qv = np.zeros(len(spaces[i]))
            qc = np.zeros(len(spaces[i]))
            for p, t in enumerate(lay.profiles):
                qv[t[i]] += others[p] * x[lay.var(p, i, 0)]
                qc[t[i]] += others[p] * x[lay.var(p, i, 1)]
            rules.append(_rule_from(spaces[i].values, ag.capacity, qv, qc))
    revenue = sol.objective_value
    return OptimalAuction(rules, revenue, sol, lp)


def rules_pass_bic(result: OptimalAuction, tol: float = 1e-7) -> bool:
    return all(check_bic(r, tol).ok for r in result.rules)

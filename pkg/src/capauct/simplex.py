"""Dense two-phase tableau simplex.

Problems are stated as ``maximize c @ x`` subject to rows ``A x (<=|=|>=) b``
and per-variable bounds ``lo <= x <= hi``. The solver rewrites variables to
be non-negative, flips rows to a non-negative right-hand side, and runs a
phase-1/phase-2 tableau with deterministic pivoting.

``solve_lp`` is the entry point used by the rest of the package. It solves
the dual instead of the primal when the primal has many more rows than
columns (the pairwise IC programs are tall and narrow) and reads the primal
solution off the dual's shadow prices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import NumericalBreakdown

FEAS_TOL = 1e-9
PIVOT_TOL = 1e-9
REL_PIVOT_TOL = 1e-8
VERIFY_TOL = 1e-7
TINY_PIVOT = 1e-12

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"
_SENSES = ("<=", "=", ">=")


@dataclass(frozen=True)
class LinearProgram:
    objective: np.ndarray
    constraint_matrix: np.ndarray
    senses: tuple
    rhs: np.ndarray
    bounds: np.ndarray  # shape (n, 2)

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float)
        senses = tuple(self.senses)
        A = np.asarray(self.constraint_matrix, dtype=float)
        if A.size == 0:
            A = A.reshape(len(senses), c.size)
        A = A.reshape(-1, c.size) if c.size else A
        b = np.asarray(self.rhs, dtype=float)
        if self.bounds is None:
            bounds = np.tile([0.0, math.inf], (c.size, 1))
        else:
            bounds = np.asarray(self.bounds, dtype=float).reshape(c.size, 2)
        if not (A.shape[0] == len(senses) == b.size):
            raise ValueError("row count mismatch between matrix, senses and rhs")
        if any(s not in _SENSES for s in senses):
            raise ValueError(f"senses must be among {_SENSES}")
        if np.any(bounds[:, 0] > bounds[:, 1]):
            raise ValueError("every bound needs lo <= hi")
        if np.any(bounds[:, 0] == math.inf) or np.any(bounds[:, 1] == -math.inf):
            raise ValueError("lower bounds must be < inf and upper bounds > -inf")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("coefficients must be finite")
        for name, val in (("objective", c), ("constraint_matrix", A), ("rhs", b), ("bounds", bounds)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "senses", senses)

    @property
    def shape(self):
        return self.constraint_matrix.shape


@dataclass(frozen=True)
class LpSolution:
    status: str
    objective_value: float
    assignment: np.ndarray
    duals: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self):
        return self.status == OPTIMAL


# -- standard form -------------------------------------------------------------


@dataclass
class _Standard:
    """x = offset + T @ y with y >= 0; rows A_s y (sense) b_s."""

    offset: np.ndarray
    T: np.ndarray
    c: np.ndarray
    A: np.ndarray
    senses: list
    b: np.ndarray
    n_orig_rows: int
    const: float


def _standardize(lp: LinearProgram) -> _Standard:
    n = lp.objective.size
    lo, hi = lp.bounds[:, 0], lp.bounds[:, 1]
    cols, offset = [], np.zeros(n)
    extra_rows = []  # (column index in y, upper limit)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        if math.isfinite(lo[j]):
            offset[j] = lo[j]
            cols.append(e)
            if math.isfinite(hi[j]):
                extra_rows.append((len(cols) - 1, hi[j] - lo[j]))
        elif math.isfinite(hi[j]):
            offset[j] = hi[j]
            cols.append(-e)
        else:
            cols.append(e)
            cols.append(-e)
    T = np.array(cols).T if cols else np.zeros((n, 0))
    A = lp.constraint_matrix @ T
    b = lp.rhs - lp.constraint_matrix @ offset
    senses = list(lp.senses)
    if extra_rows:
        B = np.zeros((len(extra_rows), T.shape[1]))
        for r, (j, ub) in enumerate(extra_rows):
            B[r, j] = 1.0
        A = np.vstack([A, B])
        b = np.concatenate([b, [ub for _, ub in extra_rows]])
        senses += ["<="] * len(extra_rows)
    c = lp.objective @ T
    const = float(lp.objective @ offset)
    return _Standard(offset, T, c, A, senses, b, lp.constraint_matrix.shape[0], const)


# -- tableau simplex -------------------------------------------------------------


class _Tableau:
    def __init__(self, A, b, senses, pivot_rule, refactor_every):
        m, n = A.shape
        sign = np.where(b < 0, -1.0, 1.0)
        A = A * sign[:, None]
        b = b * sign
        senses = [
            s if g > 0 else {"<=": ">=", ">=": "<=", "=": "="}[s] for s, g in zip(senses, sign)
        ]
        n_slack = sum(s != "=" for s in senses)
        n_art = sum(s != "<=" for s in senses)
        N = n + n_slack + n_art
        body = np.zeros((m, N))
        body[:, :n] = A
        basis = np.empty(m, dtype=int)
        unit_col = np.empty(m, dtype=int)
        k_s, k_a = n, n + n_slack
        for i, s in enumerate(senses):
            if s == "<=":
                body[i, k_s] = 1.0
                basis[i] = unit_col[i] = k_s
                k_s += 1
            else:
                if s == ">=":
                    body[i, k_s] = -1.0
                    k_s += 1
                body[i, k_a] = 1.0
                basis[i] = unit_col[i] = k_a
                k_a += 1
        self.m, self.n, self.N = m, n, N
        self.art_start = n + n_slack
        self.row_sign = sign
        self.unit_col = unit_col
        self.basis = basis
        self.orig = np.hstack([body, b[:, None]])
        self.tab = np.zeros((m + 1, N + 1))
        self.tab[1:] = self.orig
        self.pivot_rule = pivot_rule
        self.refactor_every = refactor_every
        self.iterations = 0
        self.cost = np.zeros(N)
        self.allowed = np.ones(N, dtype=bool)

    def set_objective(self, cost):
        """Install a maximization objective over all N columns."""
        self.cost = cost
        self.tab[0, :-1] = -cost
        self.tab[0, -1] = 0.0
        cb = cost[self.basis]
        self.tab[0] += cb @ self.tab[1:]

    def refactor(self):
        B = self.orig[:, self.basis]
        try:
            fresh = np.linalg.solve(B, self.orig)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown("basis matrix is singular") from exc
        if not np.all(np.isfinite(fresh)):
            raise NumericalBreakdown("refactorization produced non-finite entries")
        self.tab[1:] = fresh
        self.tab[1:, -1] = np.maximum(self.tab[1:, -1], 0.0)
        self.set_objective(self.cost)

    def pivot(self, r, col):
        tab = self.tab
        p = tab[r + 1, col]
        if abs(p) < TINY_PIVOT:
            self.refactor()
            p = tab[r + 1, col]
            if abs(p) < TINY_PIVOT:
                raise NumericalBreakdown(f"pivot magnitude {abs(p):.3g}")
        prow = tab[r + 1] / p
        tab -= np.outer(tab[:, col], prow)
        tab[r + 1] = prow
        self.basis[r] = col
        self.iterations += 1
        if self.refactor_every and self.iterations % self.refactor_every == 0:
            self.refactor()

    def entering(self, bland):
        rc = self.tab[0, :-1]
        cand = np.flatnonzero((rc < -FEAS_TOL) & self.allowed)
        if cand.size == 0:
            return None
        if bland:
            return int(cand[0])
        return int(cand[np.argmin(rc[cand])])

    def leaving(self, col, bland=True):
        a = self.tab[1:, col]
        rows = np.flatnonzero(a > max(PIVOT_TOL, REL_PIVOT_TOL * np.abs(a).max(initial=0.0)))
        if rows.size == 0:
            return None
        ratios = self.tab[1 + rows, -1] / a[rows]
        best = ratios.min()
        tied = rows[ratios <= best + FEAS_TOL * max(1.0, abs(best))]
        if bland:
            # smallest basic variable index leaves
            return int(tied[np.argmin(self.basis[tied])])
        return int(tied[np.argmax(a[tied])])

    def run(self, max_iter):
        degenerate_run = 0
        while True:
            if self.iterations >= max_iter:
                raise NumericalBreakdown(f"no convergence after {max_iter} pivots")
            bland = self.pivot_rule == "bland" or degenerate_run > 50
            col = self.entering(bland)
            if col is None:
                return OPTIMAL
            r = self.leaving(col, bland)
            if r is None:
                return UNBOUNDED
            before = self.tab[0, -1]
            self.pivot(r, col)
            degenerate_run = degenerate_run + 1 if abs(self.tab[0, -1] - before) < 1e-12 else 0


def solve_simplex(lp: LinearProgram, pivot_rule: str = "bland", max_iter: int = 200_000,
                  refactor_every: int = 500) -> LpSolution:
    """Two-phase dense tableau simplex on the primal.

    ``pivot_rule`` is ``"bland"`` (smallest eligible index enters) or
    ``"dantzig-bland"`` (most negative reduced cost, falling back to Bland
    after 50 consecutive degenerate pivots). The leaving row is always the
    minimum ratio with ties going to the smallest basic index.
    """
    if pivot_rule not in ("bland", "dantzig-bland"):
        raise ValueError(f"unknown pivot rule {pivot_rule!r}")
    std = _standardize(lp)
    tb = _Tableau(std.A, std.b, std.senses, pivot_rule, refactor_every)
    n_y = std.A.shape[1]

    if tb.art_start < tb.N:
        cost1 = np.zeros(tb.N)
        cost1[tb.art_start:] = -1.0
        tb.set_objective(cost1)
        tb.run(max_iter)
        if tb.tab[0, -1] < -1e-7 * max(1.0, np.abs(std.b).max(initial=0.0)):
            return LpSolution(INFEASIBLE, math.nan, np.full(lp.objective.size, math.nan),
                              iterations=tb.iterations)
        for r in range(tb.m):
            if tb.basis[r] >= tb.art_start:
                row = tb.tab[r + 1, : tb.art_start]
                nz = np.flatnonzero(np.abs(row) > PIVOT_TOL)
                if nz.size:
                    tb.pivot(r, int(nz[0]))
        tb.allowed[tb.art_start:] = False

    cost2 = np.zeros(tb.N)
    cost2[:n_y] = std.c
    tb.set_objective(cost2)
    status = tb.run(max_iter)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, math.inf, np.full(lp.objective.size, math.nan),
                          iterations=tb.iterations)
    y = np.zeros(tb.N)
    y[tb.basis] = tb.tab[1:, -1]
    x = std.offset + std.T @ y[:n_y]
    shadow = tb.row_sign * tb.tab[0, tb.unit_col]
    duals = shadow[: std.n_orig_rows]
    return LpSolution(OPTIMAL, float(lp.objective @ x), x, duals, tb.iterations)


# -- dual route ----------------------------------------------------------------


def _dual_program(std: _Standard) -> LinearProgram:
    """Dual of max c y, A_s y (senses) b_s, y >= 0, written as a maximization."""
    bounds = []
    for s in std.senses:
        bounds.append({"<=": (0.0, math.inf), ">=": (-math.inf, 0.0), "=": (-math.inf, math.inf)}[s])
    return LinearProgram(
        objective=-std.b,
        constraint_matrix=std.A.T,
        senses=(">=",) * std.A.shape[1],
        rhs=std.c,
        bounds=np.array(bounds).reshape(-1, 2),
    )


def _row_scaled(lp: LinearProgram):
    """Copy of ``lp`` with every constraint row divided by its largest coefficient."""
    A = lp.constraint_matrix
    scale = np.abs(A).max(axis=1, initial=0.0)
    scale = np.where(scale > 0, 1.0 / np.where(scale > 0, scale, 1.0), 1.0)
    return LinearProgram(lp.objective, A * scale[:, None], lp.senses, lp.rhs * scale, lp.bounds), scale


def _solve_route(lp: LinearProgram, pivot_rule: str, route: str, **kw) -> LpSolution:
    std = _standardize(lp)
    m, n = std.A.shape
    if route == "auto":
        route = "dual" if m > 2 * n else "primal"
    if route == "primal":
        return solve_simplex(lp, pivot_rule=pivot_rule, **kw)
    dual = _dual_program(std)
    dsol = solve_simplex(dual, pivot_rule=pivot_rule, **kw)
    if not dsol.optimal:
        return solve_simplex(lp, pivot_rule=pivot_rule, **kw)
    y = -dsol.duals
    y = np.maximum(y, 0.0)
    x = std.offset + std.T @ y
    duals = dsol.assignment[: std.n_orig_rows]
    return LpSolution(OPTIMAL, float(lp.objective @ x), x, duals, dsol.iterations)


def solve_lp(lp: LinearProgram, pivot_rule: str = "bland", route: str = "auto",
             **kw) -> LpSolution:
    """Solve ``lp`` through the primal or the dual, whichever is smaller.

    Rows are equilibrated first. ``route`` forces ``"primal"`` or
    ``"dual"``. A dual that fails to reach an optimum is re-solved on the
    primal so statuses stay primal statuses. On a numerical breakdown the
    other route is tried, then plain Bland pivoting on both routes.
    """
    scaled, scale = _row_scaled(lp)
    first = "dual" if route == "auto" and _standardize(lp).A.shape[0] > 2 * lp.objective.size else route
    other = {"dual": "primal", "primal": "dual", "auto": "dual"}[first]
    attempts = [(pivot_rule, first), (pivot_rule, other), ("bland", first), ("bland", other)]
    error, fallback = None, None
    for rule, rt in dict.fromkeys(attempts):
        try:
            sol = _solve_route(scaled, rule, rt, **kw)
        except NumericalBreakdown as exc:
            error = exc
            continue
        duals = None if sol.duals is None else sol.duals * scale
        x = sol.assignment
        if sol.optimal:
            if max_violation(lp, x) <= VERIFY_TOL * max(1.0, np.abs(lp.rhs).max(initial=0.0)):
                return LpSolution(sol.status, float(lp.objective @ x), x, duals, sol.iterations)
            error = NumericalBreakdown("solution violates the constraints")
            continue
        # an infeasible or unbounded verdict is confirmed by a second route
        if fallback is None:
            fallback = LpSolution(sol.status, sol.objective_value, x, duals, sol.iterations)
        elif fallback.status == sol.status:
            return fallback
    if fallback is not None:
        return fallback
    raise error


def max_violation(lp: LinearProgram, x) -> float:
    """Largest constraint or bound violation of ``x``."""
    r = lp.constraint_matrix @ x - lp.rhs
    worst = 0.0
    for s, v in zip(lp.senses, r):
        if s == "<=":
            worst = max(worst, v)
        elif s == ">=":
            worst = max(worst, -v)
        else:
            worst = max(worst, abs(v))
    lo, hi = lp.bounds[:, 0], lp.bounds[:, 1]
    worst = max(worst, float(np.max(lo - x, initial=0.0)), float(np.max(x - hi, initial=0.0)))
    return float(worst)


def to_text(lp: LinearProgram) -> str:
    """Fixed-format dump: objective, one line per row, one per bound."""
    fmt = "{:.17g}".format
    lines = [f"LP {lp.shape[0]} {lp.shape[1]}", "MAXIMIZE " + " ".join(map(fmt, lp.objective))]
    for i, (row, s, b) in enumerate(zip(lp.constraint_matrix, lp.senses, lp.rhs)):
        lines.append(f"ROW {i} {s} {fmt(b)} : " + " ".join(map(fmt, row)))
    for j, (lo, hi) in enumerate(lp.bounds):
        lines.append(f"BOUND {j} {fmt(lo)} {fmt(hi)}")
    return "\n".join(lines) + "\n"


def from_text(text: str) -> LinearProgram:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    _, m, n = lines[0].split()
    m, n = int(m), int(n)
    c = np.array(lines[1].split()[1:], dtype=float)
    A = np.zeros((m, n))
    senses, b = [], np.zeros(m)
    for i in range(m):
        head, coeffs = lines[2 + i].split(":")
        _, _, s, rhs = head.split()
        senses.append(s)
        b[i] = float(rhs)
        A[i] = np.array(coeffs.split(), dtype=float)
    bounds = np.array([ln.split()[2:4] for ln in lines[2 + m: 2 + m + n]], dtype=float)
    return LinearProgram(c, A, tuple(senses), b, bounds)

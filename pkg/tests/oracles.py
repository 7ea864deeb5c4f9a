"""Independent brute-force oracles shared by the test modules."""

import itertools
import math

import numpy as np


def gridded_pairs(step):
    n = round(1 / step)
    return np.array([(a * step, b * step) for a in range(n + 1) for b in range(n + 1 - a)])


def brute_force_two_priced(values, masses, capacity, step=1 / 20):
    """Best revenue over rules whose (qv, qc) per type lie on a ``step`` grid and are BIC.

    Enumerates the first type's pair in a loop and the rest as an array.
    """
    v = np.asarray(values, float)
    f = np.asarray(masses, float)
    k = v.size
    C = capacity
    P = gridded_pairs(step)

    def u(z):
        return np.minimum(z, C)

    best = -math.inf
    rest = np.array(list(itertools.product(range(len(P)), repeat=k - 1)), dtype=int).reshape(-1, k - 1)
    for first in range(len(P)):
        idx = np.hstack([np.full((len(rest), 1), first), rest])
        qv, qc = P[idx, 0], P[idx, 1]
        ok = np.ones(len(idx), dtype=bool)
        own = qv * u(np.zeros(k)) + qc * u(np.full(k, C))
        for t in range(k):
            for s in range(k):
                if s != t:
                    dev = qv[:, s] * u(v[t] - v[s]) + qc[:, s] * u(v[t] - v[s] + C)
                    ok &= dev <= own[:, t] + 1e-12
        rev = ((v * (qv + qc) - C * qc) * f).sum(axis=1)
        if ok.any():
            best = max(best, float(rev[ok].max()))
    return best


def deterministic_dsic_optimum(values, masses, n):
    """Best revenue of deterministic dominant-strategy auctions for ``n`` i.i.d. discrete bidders.

    Every map from profiles to a winner (or nobody) that is monotone in each
    bidder's own type is tried; winners pay their threshold type.
    """
    v = np.asarray(values, float)
    f = np.asarray(masses, float)
    k = v.size
    profiles = list(itertools.product(range(k), repeat=n))
    best = 0.0
    for choice in itertools.product(range(n + 1), repeat=len(profiles)):
        win = dict(zip(profiles, choice))  # n means nobody
        rev, ok = 0.0, True
        for t in profiles:
            w = win[t]
            if w == n:
                continue
            for t2 in range(t[w], k):
                other = t[:w] + (t2,) + t[w + 1:]
                if win[other] != w:
                    ok = False
                    break
            if not ok:
                break
            thr = min(s for s in range(k) if win[t[:w] + (s,) + t[w + 1:]] == w)
            rev += np.prod(f[list(t)]) * v[thr]
        if ok:
            best = max(best, rev)
    return best


def closed_form_capacitated_payment(v, C=0.25):
    """Equilibrium payment for two uniform[0,1] bidders, valid for C <= 1/2."""
    v = np.asarray(v, float)
    return np.where(v <= 2 * C, v * v / 2, v * v - C * v)

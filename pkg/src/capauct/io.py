"""CSV and JSON readers and writers for rules, payment curves, reports and LPs.

Numbers are written with ``repr(float)``, the shortest string that parses
back to the same double, so every file round-trips exactly and repeated
runs produce identical bytes. Infinity is written as ``inf``.
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .payid import InterimAllocation, payment_table
from .simplex import LinearProgram, from_text, to_text
from .two_price import TwoPricedRule

RULE_COLUMNS = ("value", "qv", "qc")
PAYMENT_COLUMNS = ("value", "x", "p_rn", "p_vc", "p_cap", "bid")
REPORT_COLUMNS = ("mechanism", "revenue", "ci", "ratio", "pass")


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, str):
        return x
    return repr(float(x))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def parse_number(s) -> float:
    """Float from a CSV or JSON field; accepts ``inf``."""
    return float(s)


def write_csv(path, columns, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([fmt(x) for x in row])
    return path


def read_csv(path):
    """Header and rows (as strings) of a CSV file."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file, header row expected")
    return rows[0], rows[1:]


def _columns(path, expected):
    header, rows = read_csv(path)
    missing = [c for c in expected if c not in header]
    if missing:
        raise ValueError(f"{path}: missing columns {missing}")
    idx = [header.index(c) for c in expected]
    return {c: np.array([parse_number(r[i]) for r in rows], dtype=float) for c, i in zip(expected, idx)}


# -- two-priced rules ---------------------------------------------------------


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def write_rule(path, rule: TwoPricedRule, extra: dict | None = None) -> Path:
    """Rule CSV ``value,qv,qc`` plus a JSON sidecar with the capacity.

    With infinite capacity an extra ``rebate`` column carries the expected
    rebate.
    """
    cols = list(RULE_COLUMNS)
    data = [rule.grid, rule.qv, rule.qc]
    if rule.rebate is not None:
        cols.append("rebate")
        data.append(rule.rebate)
    path = write_csv(path, cols, zip(*[np.asarray(d, dtype=float) for d in data]))
    meta = {"capacity": rule.capacity, "columns": cols}
    meta.update(extra or {})
    write_json(sidecar(path), meta)
    return path


def read_rule(path) -> TwoPricedRule:
    meta = read_json(sidecar(path))
    header, _ = read_csv(path)
    cols = _columns(path, RULE_COLUMNS + (("rebate",) if "rebate" in header else ()))
    return TwoPricedRule(cols["value"], cols["qv"], cols["qc"], parse_number(meta["capacity"]),
                         rebate=cols.get("rebate"))


# -- payment curves -------------------------------------------------------------


def write_payment_curve(path, allocation: InterimAllocation, capacity: float) -> Path:
    t = payment_table(allocation, capacity)
    return write_csv(path, PAYMENT_COLUMNS, zip(*[t[c] for c in PAYMENT_COLUMNS]))


def read_payment_curve(path) -> dict:
    return _columns(path, PAYMENT_COLUMNS)


# -- approximation reports ---------------------------------------------------------


def report_rows(report):
    """Rows ``mechanism,revenue,ci,ratio,pass`` with an OPT row first.

    A candidate passes when the checks it takes part in all pass.
    """
    from . import auctions as au

    roles = {"3-approx": (au.MYERSON, au.CSP), "5-approx": (au.FPA,),
             "one-priced-3-approx": (au.MYERSON_ALLOC, au.MAX_V_MINUS_C, au.MYERSON)}
    rows = [("OPT[" + report.opt_source + "]", report.opt_revenue, 0.0, 1.0, report.passed)]
    if report.opt_source == "lp" and math.isfinite(report.upper_bound):
        rows.append(("OPT[bound]", report.upper_bound, 0.0, report.upper_bound / report.opt_revenue,
                     report.passed))
    for name, rev, ci, ratio in report.rows():
        ok = all(v for check, v in report.checks.items() if name in roles.get(check.split("[")[0], ()))
        rows.append((name, rev, ci, ratio, ok))
    return rows


def write_report(stem, report, extra: dict | None = None):
    """``stem.csv`` and ``stem.json``; returns both paths."""
    stem = Path(stem)
    # labels such as "C0.05" contain dots, so append rather than replace a suffix
    csv_path = write_csv(stem.parent / (stem.name + ".csv"), REPORT_COLUMNS, report_rows(report))
    doc = {
        "opt_revenue": report.opt_revenue,
        "opt_source": report.opt_source,
        "upper_bound": report.upper_bound,
        "candidates": {name: {"revenue": e.mean, "ci": e.half_width_95, "samples": e.samples,
                              "seed": e.seed, "ratio": report.ratios[name]}
                       for name, e in report.candidate_revenues.items()},
        "checks": dict(report.checks),
        "pass": report.passed,
        "notes": list(report.notes),
    }
    doc.update(extra or {})
    return csv_path, write_json(stem.parent / (stem.name + ".json"), doc)


def read_report_csv(path) -> list:
    header, rows = read_csv(path)
    if tuple(header) != REPORT_COLUMNS:
        raise ValueError(f"{path}: unexpected header {header}")
    return [(r[0], float(r[1]), float(r[2]), float(r[3]), r[4] == "true") for r in rows]


# -- linear programs --------------------------------------------------------------


def write_lp(path, lp: LinearProgram) -> Path:
    path = Path(path)
    path.write_text(to_text(lp))
    return path


def read_lp(path) -> LinearProgram:
    return from_text(Path(path).read_text())

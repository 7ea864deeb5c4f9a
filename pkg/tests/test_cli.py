import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from capauct import io
from capauct.cli import ExperimentConfig, agents_from_flags, build_parser, load_config, main, parse_dist
from capauct.dist import AgentSpec, DiscreteTypeSpace, EqualRevenue, Exponential, Uniform


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def value_after(out, key):
    line = next(ln for ln in out.splitlines() if ln.startswith(key))
    return float(line.split()[1])


# -- config --------------------------------------------------------------------------------

@pytest.mark.parametrize("text,want", [
    ("uniform:0,1", Uniform(0, 1)),
    ("uniform:lo=0,hi=2", Uniform(0, 2)),
    ("equal_revenue:h=1000", EqualRevenue(1000)),
    ("equal-revenue:100", EqualRevenue(100)),
    ("exponential:1", Exponential(1)),
])
def test_parse_dist(text, want):
    assert parse_dist(text) == want


def test_parse_dist_point_lists():
    d = parse_dist("discrete:1/0.5,2/0.5")
    assert isinstance(d, DiscreteTypeSpace) and list(d.values) == [1, 2]
    p = parse_dist("piecewise_cdf:0/0,1/0.5,2/1")
    assert p.cdf(1.5) == pytest.approx(0.75)


@pytest.mark.parametrize("bad", ["gamma:1", "uniform:0,1,2", "uniform:a,b"])
def test_parse_dist_errors(bad):
    with pytest.raises(ValueError):
        parse_dist(bad)


def test_agents_from_flags():
    a = agents_from_flags(["uniform:0,1"], [0.25], 3)
    assert len(a) == 3 and all(x.capacity == 0.25 for x in a)
    b = agents_from_flags(["uniform:0,1", "uniform:0,2"], [0.2, 0.4], None)
    assert [x.capacity for x in b] == [0.2, 0.4]
    assert agents_from_flags(["uniform:0,1"], None, None)[0].capacity == math.inf
    with pytest.raises(ValueError):
        agents_from_flags(["uniform:0,1"] * 2, [1, 2, 3], None)


def test_config_round_trip():
    cfg = ExperimentConfig(agents=(AgentSpec(Uniform(0, 1), 0.25), AgentSpec(EqualRevenue(100), math.inf)),
                           mechanisms=("fpa", "CSP"), k=300, samples=1000, seed=7, out="x")
    assert ExperimentConfig.from_json(cfg.to_json()) == cfg
    assert ExperimentConfig.from_json(cfg.to_json()).to_json() == cfg.to_json()


def test_config_rejects_unknowns():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"agent": []})
    with pytest.raises(ValueError):
        ExperimentConfig(mechanisms=("dutch",))


def test_flags_override_file(tmp_path):
    cfg = ExperimentConfig(agents=(AgentSpec(Uniform(0, 1), 0.25),), k=10, seed=1)
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    args = build_parser().parse_args(["simulate", "--config", str(path), "--seed", "5", "--n", "2"])
    got = load_config(args)
    assert got.seed == 5 and got.k == 10 and len(got.agents) == 2 and got.agents[1].capacity == 0.25
    args = build_parser().parse_args(["simulate", "--config", str(path), "--capacity", "inf"])
    assert load_config(args).agents[0].capacity == math.inf


# -- solve-lp ---------------------------------------------------------------------------------

def test_solve_lp_equal_revenue(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-lp", "--dist", "equal_revenue:h=1000", "--capacity", "1",
                       "--k", "100", "--out", str(tmp_path))
    assert code == 0
    assert value_after(out, "revenue") >= 6.7
    assert io.read_json(tmp_path / "summary.json")["revenue"] >= 6.7
    rule = io.read_rule(tmp_path / "rule_0.csv")
    assert len(rule.grid) == 100


def test_solve_lp_uniform_monopoly(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-lp", "--dist", "uniform:0,1", "--capacity", "inf", "--k", "50",
                       "--out", str(tmp_path))
    assert code == 0 and value_after(out, "revenue") == pytest.approx(0.25, abs=0.02)
    assert "bic ok" in out


def test_solve_lp_single_type(tmp_path, capsys):
    code, out, _ = run(capsys, "solve-lp", "--dist", "discrete:2.5/1", "--capacity", "0.3",
                       "--out", str(tmp_path))
    assert code == 0 and value_after(out, "revenue") == pytest.approx(2.5)


def test_solve_lp_two_agents(tmp_path, capsys):
    code, _, _ = run(capsys, "solve-lp", "--dist", "uniform:0,1", "--n", "2", "--capacity", "0.25",
                     "--k", "6", "--out", str(tmp_path))
    assert code == 0
    assert (tmp_path / "rule_1.csv").exists()


# -- fpa-eq ------------------------------------------------------------------------------------

def read_curve(path):
    cols = io.read_payment_curve(path)
    keep = ~np.isnan(cols["bid"])
    return cols["value"][keep], cols["bid"][keep]


def test_fpa_eq_with_capacity(tmp_path, capsys):
    code, _, _ = run(capsys, "fpa-eq", "--dist", "uniform:0,1", "--n", "2", "--capacity", "0.25",
                     "--k", "2000", "--out", str(tmp_path))
    assert code == 0
    v, b = read_curve(tmp_path / "fpa_curve.csv")
    assert np.interp(0.6, v, b) == pytest.approx(0.35, abs=1e-3)
    with (tmp_path / "fpa_audit.csv").open() as fh:
        row = next(csv.DictReader(fh))
    assert float(row["gap"]) <= 0.01 and row["pass"] == "true"


def test_fpa_eq_without_capacity(tmp_path, capsys):
    code, _, _ = run(capsys, "fpa-eq", "--dist", "uniform:0,1", "--n", "2", "--capacity", "inf",
                     "--k", "500", "--out", str(tmp_path))
    assert code == 0
    v, b = read_curve(tmp_path / "fpa_curve.csv")
    assert np.allclose(b, v / 2)


def test_fpa_eq_rejects_atoms(tmp_path, capsys):
    code, _, err = run(capsys, "fpa-eq", "--dist", "discrete:1/0.5,2/0.5", "--n", "2",
                       "--out", str(tmp_path))
    assert code == 2 and "error" in err


# -- other subcommands ---------------------------------------------------------------------------

def test_simulate_is_byte_identical(tmp_path, capsys):
    outs = []
    for name in ("a", "b"):
        code, out, _ = run(capsys, "simulate", "--dist", "uniform:0,1", "--n", "2", "--capacity", "0.25",
                           "--samples", "20000", "--k", "300", "--seed", "3", "--out", str(tmp_path / name))
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]
    for f in ("simulate.csv", "simulate.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    header, rows = io.read_csv(tmp_path / "a" / "simulate.csv")
    assert header == ["mechanism", "revenue", "ci", "samples"] and len(rows) == 6


def test_simulate_seed_changes_numbers(tmp_path, capsys):
    texts = []
    for seed in ("1", "2"):
        run(capsys, "simulate", "--dist", "uniform:0,1", "--n", "2", "--mechanism", "SPA",
            "--samples", "5000", "--seed", seed, "--out", str(tmp_path / seed))
        texts.append((tmp_path / seed / "simulate.csv").read_text())
    assert texts[0] != texts[1]


def test_payment_curve_and_bound(tmp_path, capsys):
    code, _, _ = run(capsys, "payment-curve", "--dist", "uniform:0,1", "--dist", "uniform:0,2",
                     "--capacity", "0.5", "--k", "200", "--out", str(tmp_path))
    assert code == 0
    for i in (0, 1):
        cols = io.read_payment_curve(tmp_path / f"payment_MaxVMinusC-OnePriced_{i}.csv")
        assert np.all(np.diff(cols["p_cap"]) >= -1e-12)
    code, out, _ = run(capsys, "bound", "--dist", "uniform:0,1", "--out", str(tmp_path))
    assert code == 0 and io.read_json(tmp_path / "bound.json")["bound"] == pytest.approx(0.5, abs=1e-3)


def test_missing_agents_is_an_error(tmp_path, capsys):
    code, _, err = run(capsys, "simulate", "--out", str(tmp_path))
    assert code == 2 and "no agents" in err


# -- verify -----------------------------------------------------------------------------------------

def test_verify_reference_examples(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--paper-examples", "--out", str(tmp_path))
    assert code == 0
    assert "u34=2/3" in out and "FAIL" not in out


def test_verify_configured_instance_passes(tmp_path, capsys):
    code, out, _ = run(capsys, "verify", "--dist", "uniform:0,1", "--n", "2", "--capacity", "0.25",
                       "--samples", "100000", "--out", str(tmp_path))
    assert code == 0
    assert "PASS configured ic-audit[FPA]" in out
    header, rows = io.read_csv(tmp_path / "verify.csv")
    assert header == ["instance", "check", "pass", "gating", "detail"]
    assert io.read_report_csv(tmp_path / "report_configured.csv")[0][0] == "OPT[lp]"


def test_verify_catches_corrupted_bids(tmp_path, capsys):
    code, out, err = run(capsys, "verify", "--dist", "uniform:0,1", "--n", "2", "--capacity", "0.25",
                         "--samples", "20000", "--inject", "--out", str(tmp_path))
    assert code == 1
    assert "ic-audit" in err


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "capauct", "bound", "--dist", "exponential:1",
                          "--capacity", "0.5", "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("bound ")
    assert json.loads((tmp_path / "bound.json").read_text())["bound"] > 0

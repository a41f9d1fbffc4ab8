import json
import subprocess
import sys

import numpy as np
import pytest

from stoptime import harness
from stoptime.cli import main
from stoptime.harness import CHECKS, Check, explain, run_suite, stopping_times

from conftest import FIXTURE_DIR

F1 = str(FIXTURE_DIR / "f1.json")


def test_row_count(f1):
    report = run_suite(f1, seeds=2)
    per = sum(c.per_horizon for c in CHECKS.values())
    glob = len(CHECKS) - per
    assert len(report.rows) == per * 2 + glob
    assert report.passed, report.summary_table()


def test_horizon_restriction(f1):
    report = run_suite(f1, checks=["net_vs_meet", "closed_formula"], horizon=1)
    assert [(r.name, r.horizon) for r in report.rows] == [("net_vs_meet", 1), ("closed_formula", None)]
    with pytest.raises(KeyError):
        run_suite(f1, horizon=0)
    with pytest.raises(KeyError):
        run_suite(f1, checks=["nope"])


def test_report_is_deterministic(f1):
    a = run_suite(f1, seeds=3, base_seed=5).to_json(timing=False)
    b = run_suite(f1, seeds=3, base_seed=5).to_json(timing=False)
    assert a == b
    doc = json.loads(a)
    assert doc["fingerprint"] == f1.fingerprint
    assert "seconds" not in doc["checks"][0]


def test_stopping_times_are_seeded(f1):
    a = stopping_times(f1, 3, base_seed=1)
    b = stopping_times(f1, 3, base_seed=1)
    assert len(a) == 4 and a[0] is f1.tau
    for x, y in zip(a[1:], b[1:]):
        assert all(np.array_equal(p, q) for p, q in zip(x.q, y.q))


def test_fixed_vector_has_true_cases(f1):
    row = next(r for r in run_suite(f1, checks=["fixed_vector"]).rows if r.horizon == 2)
    assert row.residual == 0.0
    assert int(row.detail.split()[0]) > 0


def test_exception_becomes_failed_row(f1, monkeypatch):
    def boom(tau, ctx):
        raise RuntimeError("kaboom")

    monkeypatch.setitem(CHECKS, "boom", Check("boom", False, 1e-9, "raises", boom))
    report = run_suite(f1, checks=["boom"])
    assert not report.passed and report.exit_code == 1
    assert "kaboom" in report.rows[0].detail
    assert report.rows[0].residual == np.inf


def test_explain_texts():
    for name in CHECKS:
        text = explain(name)
        assert text.startswith(name) and "tolerance" in text


def test_cli_validate(capsys):
    assert main(["validate", F1]) == 0
    out = capsys.readouterr().out
    assert "GNS dimension 16" in out
    assert "rank q_t = 2" in out


def test_cli_run_and_report(tmp_path, capsys):
    out_path = tmp_path / "r.json"
    assert main(["run", F1, "--seeds", "2", "--report", str(out_path)]) == 0
    assert "checks passed" in capsys.readouterr().out
    doc = json.loads(out_path.read_text())
    assert doc["passed"] and doc["fixture"] == "F1"


def test_cli_subset_and_horizon(capsys):
    assert main(["run", F1, "--checks", "net_vs_meet,complement", "--horizon", "1"]) == 0
    out = capsys.readouterr().out
    assert "2/2 checks passed" in out


def test_cli_invalid_inputs(tmp_path, capsys):
    assert main(["run", str(FIXTURE_DIR / "broken_not_increasing.json")]) == 2
    assert main(["validate", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("[")
    assert main(["validate", str(bad)]) == 2
    assert main(["run", F1, "--checks", "nope"]) == 2
    assert main(["run", F1, "--horizon", "0"]) == 2
    assert main(["run", F1, "--horizon", "7"]) == 2
    assert main(["explain", "nope"]) == 2
    assert main(["validate", F1, "--tol", "5"]) == 2
    capsys.readouterr()


def test_cli_failing_check_exits_one(monkeypatch, capsys):
    def fail(tau, ctx):
        return [("gap", 1.0, 1e-9)]

    monkeypatch.setitem(harness.CHECKS, "always_fails", Check("always_fails", False, 1e-9, "", fail))
    assert main(["run", F1, "--checks", "always_fails"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_explain_all(capsys):
    assert main(["explain", "all"]) == 0
    assert len(capsys.readouterr().out.strip().splitlines()) == len(CHECKS)


def test_module_entry_point():
    done = subprocess.run([sys.executable, "-m", "stoptime", "explain", "net_vs_meet"],
                          capture_output=True, text=True)
    assert done.returncode == 0
    assert done.stdout.startswith("net_vs_meet")


def test_seed_flag_changes_fixture_seed(capsys):
    path = str(FIXTURE_DIR / "chain_222_random.json")
    assert main(["validate", path, "--seed", "3"]) == 0
    capsys.readouterr()

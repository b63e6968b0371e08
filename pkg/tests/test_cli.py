import json
from pathlib import Path

import pytest

from spectra_index import __version__
from spectra_index.cli import run
from spectra_index.report import RunReport, sanitize

DOCS = Path(__file__).resolve().parents[1] / "docs" / "examples"


def call(argv, capsys):
    code = run(argv)
    out = capsys.readouterr().out
    return code, json.loads(out), out


def test_index_dirichlet_zero(capsys):
    code, rep, _ = call(["index", str(DOCS / "dirichlet_zero.json"), "--no-timing"], capsys)
    assert code == 0
    assert rep["results"]["i"] == 0 and rep["results"]["nu"] == 0
    assert rep["version"] == __version__
    assert len(rep["input_digest"]) == 64
    assert "timing" not in rep
    assert rep["tolerances"]["rank_tol"] == 1e-8


def test_oracle_periodic(capsys):
    code, rep, _ = call(["oracle", "--case", "periodic", "--alphas", "5,39.5", "--no-timing"], capsys)
    assert code == 0
    assert (rep["results"]["i"], rep["results"]["nu"]) == (4, 0)


@pytest.mark.parametrize(
    "argv, expected",
    [
        (["oracle", "--case", "rectangle", "--b", "24.674011002723397", "--lengths", "1,1"], (1, 0)),
        (["oracle", "--case", "dirichlet", "--alphas", "15,50"], (3, 0)),
        (["oracle", "--case", "antiperiodic", "--alphas", "pi^2"], (0, 2)),
        (["oracle", "--case", "interval", "--b", "0", "--lengths", "1"], (0, 0)),
    ],
)
def test_oracle_cases(argv, expected, capsys):
    code, rep, _ = call(argv + ["--no-timing"], capsys)
    assert code == 0 and (rep["results"]["i"], rep["results"]["nu"]) == expected


def test_certify_example_and_mutation(capsys):
    code, rep, _ = call(["certify", "--theorem", "3.10", str(DOCS / "antiperiodic_pinched.json"), "--no-timing"], capsys)
    assert code == 0 and rep["results"]["verdict"] == "certified"
    code, rep, _ = call(["certify", str(DOCS / "antiperiodic_pinched_resonant.json"), "--no-timing"], capsys)
    assert code == 1 and rep["results"]["verdict"] == "refuted"


def test_solve_and_dual_solve(capsys):
    code, rep, _ = call(["solve", str(DOCS / "antiperiodic_pinched.json"), "--no-timing"], capsys)
    assert code == 0 and rep["results"]["residual"] <= 1e-8
    assert rep["results"]["certificate"]["verdict"] == "certified"
    code, rep, _ = call(["dual-solve", str(DOCS / "convex_dirichlet.json"), "--no-timing"], capsys)
    assert code == 0 and rep["results"]["residual"] <= 1e-6


def test_nullity_and_rel_index(tmp_path, capsys):
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"kind": "second_order", "B": {"constant": [["pi^2"]]}, "bc": {"type": "dirichlet"}}))
    code, rep, _ = call(["nullity", str(cfg), "--no-timing"], capsys)
    assert code == 0 and rep["results"]["nu"] == 1
    cfg.write_text(json.dumps({"problem": {"kind": "second_order", "bc": {"type": "dirichlet"}}, "B1": 5, "B2": 50}))
    code, rep, _ = call(["rel-index", str(cfg), "--no-timing"], capsys)
    assert code == 0 and rep["results"]["relative_index"] == 2


def test_config_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"kind": "second_order", "Lambda": {"constant": [[-1.0]]}}))
    code, rep, _ = call(["index", str(cfg), "--no-timing"], capsys)
    assert code == 2 and rep["results"]["error"] == "PositivityViolation"
    cfg.write_text("{not json")
    code, rep, _ = call(["index", str(cfg), "--no-timing"], capsys)
    assert code == 2 and rep["results"]["error"] == "ConfigError"


def test_numerical_error_exit_code(tmp_path, capsys):
    cfg = tmp_path / "res.json"
    cfg.write_text(json.dumps({
        "problem": {"kind": "second_order", "bc": {"type": "dirichlet"}},
        "nonlinearity": {"name": "linear", "params": {"B": "pi^2", "h": 1.0}},
        "solve": {"waive": True, "start": "pi^2", "multistart": 0},
    }))
    code, rep, _ = call(["solve", str(cfg), "--no-timing"], capsys)
    assert code == 3
    assert rep["results"]["error"] in ("ContinuationStalled", "SingularJacobian", "NewtonDiverged", "NoConvergence")


def test_reports_are_deterministic_and_csv(tmp_path, capsys):
    args = ["index", str(DOCS / "dirichlet_zero.json"), "--no-timing"]
    _, _, a = call(args, capsys)
    _, _, b = call(args, capsys)
    assert a == b
    cfg = tmp_path / "p.json"
    cfg.write_text(json.dumps({"kind": "second_order", "B": {"constant": [[50.0]]}, "bc": {"type": "dirichlet"}}))
    out = tmp_path / "r.json"
    table = tmp_path / "c.csv"
    assert run(["index", str(cfg), "--out", str(out), "--csv", str(table)]) == 0
    rep = json.loads(out.read_text())
    assert "seconds" in rep["timing"]
    rows = table.read_text().splitlines()
    assert rows[0] == "parameter,multiplicity" and len(rows) == 3


def test_threads_flag_does_not_change_results(capsys, monkeypatch):
    args = ["index", str(DOCS / "dirichlet_zero.json"), "--no-timing"]
    _, _, a = call(args + ["--threads", "3"], capsys)
    monkeypatch.setenv("SPECTRA_INDEX_THREADS", "2")
    _, _, b = call(args, capsys)
    assert a == b


def test_selftest_passes(capsys):
    code, rep, _ = call(["selftest", "--no-timing"], capsys)
    assert code == 0
    assert rep["results"]["mismatches"] == 0 and rep["results"]["total"] >= 20


def test_sanitize_and_round_trip():
    import numpy as np

    doc = sanitize({"a": np.float64(0.1), "b": np.int64(3), "c": np.array([1.0, np.inf]), "d": float("nan")})
    assert doc == {"a": 0.1, "b": 3, "c": [1.0, "inf"], "d": "nan"}
    x = 1.0 / 3.0
    rep = RunReport("index", None, {"x": x}, {})
    assert json.loads(rep.dumps())["results"]["x"] == x

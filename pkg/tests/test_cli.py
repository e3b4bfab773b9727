import csv
import json

import pytest

from minpair import cli, io
from minpair.generators import gen_random_mdp
from minpair.solver import solve_min_pair


def run(argv, out):
    return cli.main([*argv, "--out", str(out)])


def test_solve_single_state(tmp_path, capsys):
    assert run(["solve", "--preset", "single"], tmp_path) == 0
    assert "rho* = 2 " in capsys.readouterr().out
    doc = json.loads((tmp_path / "solution.json").read_text())
    assert doc["rho_star"] == 2.0
    assert (tmp_path / "solution.csv").read_text().splitlines()[0] == "state,action,p_star,dual_h"
    assert "timestamp" in json.loads((tmp_path / "metadata.json").read_text())


def test_solve_model_file(tmp_path):
    m = gen_random_mdp(3, 2, seed=4)
    io.save_model(m, tmp_path / "m.json")
    assert run(["solve", "--model", str(tmp_path / "m.json")], tmp_path / "o") == 0
    doc = json.loads((tmp_path / "o" / "solution.json").read_text())
    assert abs(doc["rho_star"] - solve_min_pair(m).rho_star) <= 1e-12


def test_sweep_approaches_solve(tmp_path):
    m = gen_random_mdp(3, 2, seed=30)
    io.save_model(m, tmp_path / "m.json")
    assert run(["sweep", "--model", str(tmp_path / "m.json"), "--alphas", "0.9,0.99,0.999"], tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
    assert [float(r["alpha"]) for r in rows] == [0.9, 0.99, 0.999]
    assert abs(float(rows[-1]["scaled_m_alpha"]) - solve_min_pair(m).rho_star) <= 1e-2


def test_simulate_and_idempotent_csv(tmp_path):
    argv = ["simulate", "--preset", "random", "--horizon", "500", "--paths", "50", "--seed", "3"]
    assert run(argv, tmp_path / "a") == 0
    assert run(argv, tmp_path / "b") == 0
    for name in ("simulate.csv", "summary.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_certify_exit_codes(tmp_path, capsys):
    assert run(["certify", "--preset", "single", "--horizon", "200", "--threshold", "10"], tmp_path / "ok") == 0
    code = run(["certify", "--preset", "single", "--horizon", "200", "--threshold", "1"], tmp_path / "bad")
    assert code == 1
    fails = json.loads((tmp_path / "bad" / "failures.json").read_text())["failures"]
    assert [f["check"] for f in fails] == ["G"]
    assert json.loads(capsys.readouterr().err)["failures"]


def test_certify_example2(tmp_path):
    assert run(["certify", "--preset", "ex2-gauss", "--horizon", "500", "--paths", "200"], tmp_path) == 0
    assert set(json.loads((tmp_path / "certificates.json").read_text())) == {"SU", "M", "G"}


def test_diagnose_exact_and_mc(tmp_path, capsys):
    assert run(["diagnose", "--preset", "ex1-nonharris", "--depth", "100000"], tmp_path / "e") == 0
    assert "positive_not_harris" in capsys.readouterr().out
    assert run(["diagnose", "--preset", "random", "--paths", "200", "--horizon", "200"], tmp_path / "m") == 0
    assert json.loads((tmp_path / "m" / "diagnose.json").read_text())["classification"] == "positive_harris"


@pytest.mark.parametrize("argv", [
    ["sweep", "--preset", "single", "--alphas", "1.5"],
    ["solve", "--model", "/nonexistent/model.json"],
    ["solve"],
    ["solve", "--preset", "single", "--model", "x.json"],
    ["solve", "--preset", "nope"],
    ["simulate", "--preset", "single", "--initial", "4"],
])
def test_configuration_errors_exit_2(tmp_path, argv):
    try:
        code = run(argv, tmp_path)
    except SystemExit as exc:  # argparse
        code = exc.code
    assert code == 2


def test_bad_model_file_exit_2(tmp_path, capsys):
    (tmp_path / "m.json").write_text(json.dumps({"n_states": 1, "actions": [[0]], "transitions": [],
                                                 "costs": [], "bogus": 1}))
    assert run(["solve", "--model", str(tmp_path / "m.json")], tmp_path) == 2
    assert "unknown field" in capsys.readouterr().err


def test_reproduce_ex2(tmp_path):
    assert run(["reproduce", "ex2", "--horizon", "500", "--paths", "300"], tmp_path) == 0
    rows = list(csv.DictReader((tmp_path / "reproduce_ex2.csv").open()))
    assert rows and list(rows[0]) == ["module", "check", "value", "target", "tolerance", "passed", "detail"]
    assert all(r["passed"] == "True" for r in rows)

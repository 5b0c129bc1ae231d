import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from psoc.cli import EXIT_DIVERGENCE, EXIT_OK, EXIT_SOLVER, EXIT_USAGE, main, parse_overrides
from psoc.cli import UsageError
from psoc.problems import get_spec


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_nodes_stdout(capsys):
    assert main(["nodes", "--grid", "lgl", "--n", "2"]) == EXIT_OK
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "j,t,w"
    w = [float(l.split(",")[2]) for l in lines[1:]]
    np.testing.assert_allclose(w, [1 / 3, 4 / 3, 1 / 3], rtol=1e-15)


def test_nodes_files_and_uniform_warning(tmp_path, capsys):
    assert main(["nodes", "--grid", "uniform", "--n", "11", "--out", str(tmp_path)]) == EXIT_OK
    assert "negative weight" in capsys.readouterr().err
    nodes = _rows(tmp_path / "nodes.csv")
    assert len(nodes) == 12
    D = np.loadtxt(tmp_path / "D.csv", delimiter=",", skiprows=1, ndmin=2)
    t = np.array([float(r["t"]) for r in nodes])
    # D differentiates a cubic exactly
    np.testing.assert_allclose(D @ t**3, 3 * t**2, atol=1e-9)


def test_solve_e1(tmp_path):
    assert main(["solve", "--problem", "e1", "--grid", "lgl", "--n", "10", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["cost"] == pytest.approx(-2.0, abs=1e-8)
    assert summary["verdict"] == "Converged"
    rows = _rows(tmp_path / "trajectory.csv")
    assert list(rows[0]) == ["t", "x1", "u1", "lam1"]
    np.testing.assert_allclose([float(r["u1"]) for r in rows], -1.0, atol=1e-6)


def test_solve_adaptive_e2(tmp_path):
    assert main(["solve", "--problem", "e2", "--out", str(tmp_path)]) == EXIT_OK
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["grid"] == "lgl" and summary["status"] == "Converged"
    assert summary["jacksonCoeff"] <= 1e-6
    rows = _rows(tmp_path / "trajectory.csv")
    np.testing.assert_allclose([float(r["u1"]) for r in rows], 1.0, atol=1e-6)


def test_solve_json_format(tmp_path):
    assert main(["solve", "--problem", "lq-toy", "--n", "8", "--format", "json", "--out", str(tmp_path)]) == EXIT_OK
    data = json.loads((tmp_path / "trajectory.json").read_text())
    assert data
    assert not (tmp_path / "trajectory.csv").exists()


def test_unpaired_grid_needs_force(tmp_path, capsys):
    assert main(["solve", "--problem", "e2", "--grid", "lg", "--w", "one", "--n", "10",
                 "--out", str(tmp_path)]) == EXIT_USAGE
    assert "--force" in capsys.readouterr().err


def test_forced_lg_reports_divergence(tmp_path):
    code = main(["solve", "--problem", "e2", "--grid", "lg", "--force", "--out", str(tmp_path)])
    assert code == EXIT_DIVERGENCE
    assert json.loads((tmp_path / "summary.json").read_text())["verdict"] == "DivergenceSuspected"


@pytest.mark.parametrize("argv", [
    ["solve", "--problem", "no-such-problem"],
    ["solve", "--problem", "e1", "--set", "bogus=1"],
    ["solve", "--problem", "e1", "--set", "tol"],
])
def test_usage_errors(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)]) == EXIT_USAGE


def test_bad_order_is_argparse_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["study", "--problem", "e1", "--n", "8,x", "--out", str(tmp_path)])
    assert exc.value.code == EXIT_USAGE


def test_parse_overrides():
    o = parse_overrides(["tol=1e-9", "maxIter=20", "uHi.1=3"])
    assert o["tol"] == 1e-9 and o["max_iter"] == 20
    assert o["boxes"] == [("u_box", 1, 0, 3.0)]
    with pytest.raises(UsageError):
        parse_overrides(["uHi.0=3"])


def test_box_override_changes_solution(tmp_path):
    # capping the control at 0.5 leaves E1 with cost -1
    assert main(["solve", "--problem", "e1", "--n", "10", "--set", "uLo.1=-0.5",
                 "--out", str(tmp_path)]) == EXIT_OK
    assert json.loads((tmp_path / "summary.json").read_text())["cost"] == pytest.approx(-1.0, abs=1e-8)


def test_solver_failure_exit(tmp_path):
    assert main(["solve", "--problem", "doubleint-mintime", "--n", "12", "--set", "maxIter=1",
                 "--out", str(tmp_path)]) == EXIT_SOLVER


def test_study_e1(tmp_path):
    assert main(["study", "--problem", "e1", "--grid", "uniform", "--n", "10,12",
                 "--out", str(tmp_path)]) == EXIT_OK
    rows = {int(r["N"]): r for r in _rows(tmp_path / "study.csv")}
    assert list(rows[10]) == ["N", "grid", "maxControlErr", "maxStateErr", "costErr", "minWeight"]
    assert float(rows[12]["maxControlErr"]) >= 10 * float(rows[10]["maxControlErr"])


def test_study_parallel_matches_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["study", "--problem", "e2", "--grid", "lgl", "--n", "6,8"]
    assert main(base + ["--out", str(a)]) == EXIT_OK
    assert main(base + ["--out", str(b), "--jobs", "2"]) == EXIT_OK
    assert (a / "study.csv").read_bytes() == (b / "study.csv").read_bytes()


def test_costate(tmp_path):
    assert main(["costate", "--problem", "e1", "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "costate.csv")
    lam = np.array([float(r["lam1"]) for r in rows])
    assert np.max(np.abs(lam[1:-1] - 1.0)) <= 5e-2
    res = json.loads((tmp_path / "dual_residuals.json").read_text())
    assert res["N"] == 16


def test_costate_zero_multipliers_fails(tmp_path):
    assert main(["costate", "--problem", "lq-toy", "--zero-multipliers", "--out", str(tmp_path)]) == EXIT_SOLVER


def test_problem_file_round_trip(tmp_path):
    path = tmp_path / "e1.json"
    path.write_text(json.dumps(get_spec("e1").to_dict()))
    assert main(["solve", "--problem", str(path), "--n", "10", "--out", str(tmp_path / "f")]) == EXIT_OK
    assert main(["solve", "--problem", "e1", "--n", "10", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert ((tmp_path / "f" / "trajectory.csv").read_bytes()
            == (tmp_path / "r" / "trajectory.csv").read_bytes())


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "psoc", "nodes", "--grid", "lgr", "--n", "3"],
                         capture_output=True, text=True, check=True)
    assert out.stdout.splitlines()[0] == "j,t,w"
    assert out.stdout.splitlines()[1].split(",")[1] == "-1"

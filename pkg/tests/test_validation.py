from dataclasses import replace

import numpy as np
import pytest

from psoc.errors import EvaluationError, IdMismatch
from psoc.legendre import lg_grid, lgl_grid, lgr_grid, make_grid
from psoc.nlp import solve
from psoc.problems import get_problem
from psoc.transcribe import extract_trajectory, transcribe, trajectory_from_vector
from psoc.validation import (analytic_solution, dynamics_residual, error_norms, has_analytic,
                             rk_integrate)


def _solve(pid, grid, **kw):
    p = get_problem(pid)
    nlp = transcribe(p, grid, **kw)
    sol = solve(nlp, tol=1e-10, feas_tol=1e-10)
    assert sol.converged
    return nlp, extract_trajectory(nlp, sol)


def test_rk_examples():
    assert rk_integrate(lambda x, t: np.zeros(1), [3.0], 0.0, 5.0, 7)[0] == 3.0
    assert rk_integrate(lambda x, t: np.ones(1), [0.0], 0.0, 2.0, 10)[0] == pytest.approx(2.0, abs=1e-14)
    p = get_problem("e1")
    x = rk_integrate(p.f, [0.0], 0.0, 2.0, 50, u=lambda t: np.array([-1.0]))
    assert abs(x[0] + 2.0) <= 1e-10


def test_rk_fourth_order():
    # x' = x on [0, 1]: halving h cuts the error by about 16
    errs = [abs(rk_integrate(lambda x, t: x, [1.0], 0.0, 1.0, n)[0] - np.e) for n in (10, 20)]
    assert 14 < errs[0] / errs[1] < 17


def test_rk_rejects_bad_input():
    with pytest.raises(ValueError):
        rk_integrate(lambda x, t: x, [1.0], 0.0, 1.0, 0)
    with pytest.raises(EvaluationError):
        rk_integrate(lambda x, t: np.array([np.nan]), [1.0], 0.0, 1.0, 4)


@pytest.mark.parametrize("pid", ["e1", "e2", "doubleint-mintime", "oscillator-energy", "lq-toy",
                                 "lqr-infinite", "constant-toy"])
def test_registry_satisfies_dynamics(pid):
    assert has_analytic(pid)
    assert dynamics_residual(analytic_solution(pid), n=200, seed=3) <= 1e-12


def test_registry_unknown_id():
    assert not has_analytic("nope")
    with pytest.raises(KeyError):
        analytic_solution("nope")


def test_error_norms_zero_at_exact_nodes():
    p = get_problem("e2")
    nlp = transcribe(p, lgl_grid(10))
    ex = analytic_solution("e2")
    t = nlp.times(nlp.x0)[0]
    X, U = ex.sample(t)
    traj = trajectory_from_vector(nlp, nlp.layout.pack(X, U))
    e = error_norms(traj, ex)
    assert e.state_linf == 0.0 and e.control_linf == 0.0
    assert e.cost_err <= 1e-14
    assert e.costate_linf is None
    with pytest.raises(IdMismatch):
        error_norms(traj, analytic_solution("e1"))
    with pytest.raises(IdMismatch):
        error_norms(replace(traj, problem_id="e1"), ex)


def test_e2_lgl_control_error():
    _, traj = _solve("e2", lgl_grid(10))
    assert error_norms(traj, analytic_solution("e2")).control_linf <= 1e-4


def test_e2_lgl_beats_forced_lg_and_lgr():
    ex = analytic_solution("e2")
    errs = {}
    for g in (lgl_grid(10), lgr_grid(10), lg_grid(10)):
        p = get_problem("e2")
        nlp = transcribe(p, g, "one", force=True)
        sol = solve(nlp, tol=1e-10, feas_tol=1e-10)
        errs[g.family.value] = (error_norms(trajectory_from_vector(nlp, sol.x), ex).control_linf
                                if sol.converged else np.inf)
    assert errs["lgl"] < min(errs["lgr"], errs["lg"])


def test_e1_uniform_control_blows_up():
    ex = analytic_solution("e1")
    errs = {}
    for N in (10, 12):
        nlp = transcribe(get_problem("e1"), make_grid("uniform", N), "one", allow_negative_weights=True)
        sol = solve(nlp, tol=1e-10, feas_tol=1e-10)
        errs[N] = error_norms(trajectory_from_vector(nlp, sol.x, cost=sol.objective), ex).control_linf
    assert errs[10] <= 1e-6
    assert errs[12] >= 1.0


def test_closed_loop_propagation_of_e2_control():
    p = get_problem("e2")
    _, traj = _solve("e2", lgl_grid(16))
    x = rk_integrate(p.f, [0.0, 1.0], 0.0, 1.0, 10_000, u=lambda t: traj.control_at(t)[0])
    np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-4)

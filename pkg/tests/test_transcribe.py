import numpy as np
import pytest
from scipy.integrate import quad

from psoc.errors import IncompatiblePairing, InvalidSmoothness, NegativeWeights, NotConverged
from psoc.interp import ONE
from psoc.legendre import lg_grid, lgl_grid, lgr_grid, uniform_grid
from psoc.nlp import solve
from psoc.ocp import fd_jacobian
from psoc.problems import get_problem
from psoc.transcribe import (consistency_tolerance, extract_trajectory, flatten, transcribe,
                             trajectory_from_vector)
from psoc.validation import analytic_solution


def _sampled(nlp, pid):
    ex = analytic_solution(pid)
    t = nlp.times(nlp.x0)[0]
    X, U = ex.sample(t)
    return nlp.layout.pack(X, U, ex.t0, ex.tf)


def test_consistency_tolerance_examples():
    assert consistency_tolerance(10, 2) == pytest.approx(1 / 3)
    assert consistency_tolerance(2, 2) == 1.0
    assert consistency_tolerance(17, 3) == pytest.approx(1 / 64)
    assert consistency_tolerance(40) < consistency_tolerance(20) < consistency_tolerance(5)
    with pytest.raises(InvalidSmoothness):
        consistency_tolerance(10, 1)
    with pytest.raises(ValueError):
        consistency_tolerance(1, 2)


def test_layout_counts():
    nlp = transcribe(get_problem("e1"), lgl_grid(10))
    assert nlp.nvar == 22 and nlp.n_defect == 11 and nlp.n_endpoint == 1 and nlp.ncon == 12
    nlp = transcribe(get_problem("e2"), lgl_grid(10))
    assert nlp.nvar == 33 and nlp.n_defect == 22 and nlp.n_endpoint == 4
    nlp = transcribe(get_problem("doubleint-mintime"), lgl_grid(10))
    assert nlp.nvar == 34 and nlp.layout.tf_index == 33
    assert nlp.xl[-1] == 0.1 and nlp.xu[-1] == 10.0
    assert nlp.delta_n > 0


def test_pack_unpack_round_trip():
    nlp = transcribe(get_problem("doubleint-mintime"), lgl_grid(6))
    z = np.random.default_rng(1).normal(size=nlp.nvar)
    X, U, t0, tf = nlp.layout.unpack(z, 0.0)
    assert X.shape == (7, 2) and U.shape == (7, 1) and tf == z[-1]
    np.testing.assert_array_equal(nlp.layout.pack(X, U, t0, tf), z)


def test_pairing_and_weight_checks():
    with pytest.raises(IncompatiblePairing):
        transcribe(get_problem("e2"), lg_grid(10), ONE)
    assert transcribe(get_problem("e2"), lg_grid(10)).W.kind.value == "1-t2"
    transcribe(get_problem("e2"), lg_grid(10), ONE, force=True)
    with pytest.raises(NegativeWeights):
        transcribe(get_problem("e1"), uniform_grid(12))
    transcribe(get_problem("e1"), uniform_grid(12), allow_negative_weights=True)


@pytest.mark.parametrize("pid", ["e1", "e2", "oscillator-energy", "lq-toy"])
def test_analytic_solutions_satisfy_relaxed_defects(pid):
    for N in range(4, 33):
        nlp = transcribe(get_problem(pid), lgl_grid(N))
        z = _sampled(nlp, pid)
        assert np.max(np.abs(nlp.defects(z))) <= nlp.delta_n


def test_objective_matches_integrated_cost():
    pid = "oscillator-energy"
    p = get_problem(pid)
    for N in (6, 10, 16):
        nlp = transcribe(p, lgl_grid(N))
        z = _sampled(nlp, pid)
        traj = trajectory_from_vector(nlp, z)

        def F(t):
            return p.F(traj.state_at(np.array([t]))[0], traj.control_at(np.array([t]))[0], t)
        exact, _ = quad(F, 0.0, np.pi, epsabs=1e-13, limit=200)
        assert abs(nlp.objective(z) - exact) <= 10 * nlp.delta_n


def test_constraint_evaluation_is_bit_stable():
    a = transcribe(get_problem("e2"), lgl_grid(12))
    b = transcribe(get_problem("e2"), lgl_grid(12))
    z = np.random.default_rng(5).normal(size=a.nvar)
    assert a.constraints(z).tobytes() == b.constraints(z).tobytes()
    assert a.jacobian(z).tobytes() == b.jacobian(z).tobytes()


def test_relaxed_feasible_set_is_larger():
    p = get_problem("e1")
    hard = transcribe(p, lgl_grid(10))
    soft = transcribe(p, lgl_grid(10), relax=True)
    assert np.all(soft.cl <= hard.cl) and np.all(soft.cu >= hard.cu)
    z = _sampled(hard, "e1")
    j = 5
    eps = 0.5 * soft.delta_n / np.max(np.abs(hard.D.entries[:, j]))
    z[hard.layout.state_index(0, j)] += eps
    c = hard.constraints(z)
    inside = lambda nlp: np.all(c >= nlp.cl - 1e-15) and np.all(c <= nlp.cu + 1e-15)
    assert inside(soft) and not inside(hard)


@pytest.mark.parametrize("pid,grid", [("e2", lgl_grid(7)), ("doubleint-mintime", lgl_grid(6)),
                                      ("lqr-infinite", lgr_grid(6))])
def test_analytic_jacobian_and_gradient(pid, grid):
    nlp = transcribe(get_problem(pid), grid)
    z = nlp.x0 + 0.1 * np.random.default_rng(2).normal(size=nlp.nvar)
    z = np.clip(z, nlp.xl, nlp.xu)
    np.testing.assert_allclose(nlp.jacobian(z), fd_jacobian(nlp.constraints, z, central=True), atol=1e-7)
    np.testing.assert_allclose(nlp.gradient(z), fd_jacobian(lambda v: np.atleast_1d(nlp.objective(v)), z,
                                                            central=True)[0], atol=1e-7)


def test_solutions_and_trajectory():
    nlp = transcribe(get_problem("e1"), lgl_grid(10))
    sol = solve(nlp, tol=1e-10, feas_tol=1e-10)
    traj = extract_trajectory(nlp, sol)
    np.testing.assert_array_equal(flatten(nlp, traj), sol.x)
    assert np.max(np.abs(traj.controls + 1)) <= 1e-6
    assert traj.cost == pytest.approx(traj.states[-1, 0], abs=1e-12)

    nlp = transcribe(get_problem("e2"), lgl_grid(10))
    sol = solve(nlp, tol=1e-10, feas_tol=1e-10)
    traj = extract_trajectory(nlp, sol)
    assert np.max(np.abs(traj.controls - 1)) <= 1e-4
    p = nlp.problem
    assert np.all(traj.states[:, 1] >= p.x_box[0][1] - 1e-8)
    assert np.all((traj.controls >= -1e-8) & (traj.controls <= 2 + 1e-8))
    quadrature = sum(w * 0.5 * F for w, F in zip(nlp.grid.weights,
                     (p.F(traj.states[j], traj.controls[j], 0.0) for j in range(11))))
    assert traj.cost == pytest.approx(quadrature, abs=1e-8)

    nlp = transcribe(get_problem("doubleint-mintime"), lgl_grid(10))
    bad = solve(nlp, max_iter=1)
    with pytest.raises(NotConverged):
        extract_trajectory(nlp, bad)


def test_free_time_default_bounds():
    from dataclasses import replace
    p = replace(get_problem("doubleint-mintime"), tf_bounds=None)
    nlp = transcribe(p, lgl_grid(6))
    assert nlp.xl[-1] == pytest.approx(1e-3) and nlp.xu[-1] == pytest.approx(15.0)

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from psoc.legendre import lgl_grid
from psoc.nlp import solve
from psoc.problems import ProblemSpec, get_problem, get_spec
from psoc.spectral import (Verdict, derivative_bounds, jackson_bound, solve_adaptive, solve_fixed,
                           state_coeffs, warm_guess)
from psoc.transcribe import extract_trajectory, transcribe
from psoc.validation import analytic_solution, error_norms

# below this, changes in an error are solver round-off rather than trend
FLOOR = 1e-9


def _non_increasing(values, floor=FLOOR):
    return all(b <= max(a, floor) for a, b in zip(values, values[1:]))


def test_jackson_bound_examples():
    assert jackson_bound(1, 2, 4) == pytest.approx(18 / (8 * math.sqrt(math.pi)), rel=1e-15)
    assert jackson_bound(0, 0, 7) == 0
    with pytest.raises(ValueError):
        jackson_bound(1, 1, 0)


@given(st.floats(0, 100), st.floats(0, 100), st.integers(1, 500))
def test_jackson_bound_decreasing(M, V, j):
    assert jackson_bound(M, V, j + 1) <= jackson_bound(M, V, j)


def test_e1_adaptive():
    traj, rep = solve_adaptive(get_problem("e1"))
    assert rep.verdict is Verdict.CONVERGED and rep.final_n <= 16
    assert traj.cost == pytest.approx(-2.0, abs=1e-6)
    last = rep.history[-1]
    assert last.jackson_coeff <= 1e-6 and last.dual_residual <= 1e-3


def test_e2_forced_lg_diverges():
    traj, rep = solve_adaptive(get_problem("e2"), family="lg", W="one", force=True)
    assert rep.verdict is Verdict.DIVERGENCE_SUSPECTED
    Ns = [r.N for r in rep.history]
    assert Ns == sorted(set(Ns))


def test_constant_toy():
    traj, rep = solve_adaptive(get_problem("constant-toy"))
    assert rep.verdict is Verdict.CONVERGED and rep.final_n == 8
    assert np.max(np.abs(rep.coeffs[2:])) <= 1e-12
    assert traj.cost == pytest.approx(1.0, abs=1e-12)


def test_budget_exhausted_and_infeasible():
    _, rep = solve_adaptive(get_problem("oscillator-energy"), N0=8, Nmax=8)
    assert rep.verdict is Verdict.BUDGET_EXHAUSTED and len(rep.history) == 1
    d = get_spec("lq-toy").to_dict()
    d["u_box"] = [[0.0], [0.5]]
    traj, rep = solve_adaptive(ProblemSpec.from_dict(d).build())
    assert rep.verdict is Verdict.DIVERGENCE_SUSPECTED and traj is None
    assert [r.status for r in rep.history] == ["Infeasible", "Infeasible"]


def test_control_and_cost_errors_settle_on_lgl():
    for pid in ("e1", "e2"):
        p, ex = get_problem(pid), analytic_solution(pid)
        ctrl, cost = [], []
        for N in (8, 12, 16, 20):
            nlp = transcribe(p, lgl_grid(N))
            e = error_norms(extract_trajectory(nlp, solve(nlp, tol=1e-10, feas_tol=1e-10)), ex)
            ctrl.append(e.control_linf)
            cost.append(e.cost_err)
        assert _non_increasing(ctrl) and _non_increasing(cost)
        assert ctrl[-1] <= 1e-4


@pytest.mark.parametrize("pid", ["e2", "oscillator-energy", "lqr-infinite"])
def test_jackson_consistency(pid):
    traj, rep = solve_adaptive(get_problem(pid))
    assert rep.verdict is Verdict.CONVERGED
    coeffs = state_coeffs(traj)
    for k, (M, V) in enumerate(derivative_bounds(coeffs)):
        for j in range(1, coeffs.shape[0]):
            assert abs(coeffs[j, k]) <= jackson_bound(M, V, j) + 1e-14


def test_warm_start_does_not_hurt():
    p = get_problem("oscillator-energy")
    nlp = transcribe(p, lgl_grid(8))
    prev = extract_trajectory(nlp, solve(nlp, tol=1e-10, feas_tol=1e-10))
    nxt = transcribe(p, lgl_grid(12))
    cold = solve(nxt, tol=1e-10, feas_tol=1e-10)
    warm = solve(nxt, tol=1e-10, feas_tol=1e-10, x0=warm_guess(prev, nxt))
    assert warm.converged and cold.converged
    assert warm.objective <= cold.objective + 1e-9


def test_fixed_order_verdicts():
    _, rep = solve_fixed(get_problem("e2"), 10)
    assert rep.verdict is Verdict.CONVERGED and len(rep.history) == 1
    _, rep = solve_fixed(get_problem("e2"), 10, family="lg", W="one", force=True)
    assert rep.verdict is Verdict.DIVERGENCE_SUSPECTED
    _, rep = solve_fixed(get_problem("e1"), 12, family="uniform", force=True, allow_negative_weights=True)
    assert rep.verdict is Verdict.DIVERGENCE_SUSPECTED
    _, rep = solve_fixed(get_problem("oscillator-energy"), 8)
    assert rep.verdict is Verdict.BUDGET_EXHAUSTED
    _, rep = solve_fixed(get_problem("doubleint-mintime"), 10, max_iter=2)
    assert rep.verdict is None


def test_history_invariants():
    _, rep = solve_adaptive(get_problem("lqr-infinite"))
    Ns = [r.N for r in rep.history]
    assert all(b > a for a, b in zip(Ns, Ns[1:]))
    assert rep.verdict is Verdict.CONVERGED
    assert rep.history[-1].jackson_coeff <= 1e-6 and rep.history[-1].dual_residual <= 1e-3

"""
Closed-form solutions and independent checks.

Nothing in the solve pipeline imports this module; tests and the study
command use it to measure errors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EvaluationError, IdMismatch
from .problems import get_problem


@dataclass(frozen=True, eq=False)
class AnalyticSolution:
    """Optimal state, control and costate as functions of physical time.

    Each callable maps a scalar or 1-D array of times to an array of shape
    (len(t), n). `xdot_star` is the exact derivative of `x_star`, used to
    check the dynamics without differentiating numerically.
    """

    problem_id: str
    x_star: Callable
    u_star: Callable
    lam_star: Optional[Callable]
    cost_star: float
    xdot_star: Callable
    t0: float = 0.0
    tf: Optional[float] = None

    def sample(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.x_star(t), self.u_star(t)


def _cols(*fs):
    def g(t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.column_stack([np.broadcast_to(f(t), t.shape) for f in fs])
    return g


_PI = np.pi
_P = np.sqrt(2.0) - 1.0

_SOLUTIONS = {
    "e1": AnalyticSolution(
        "e1", _cols(lambda t: -t), _cols(lambda t: -np.ones_like(t)), _cols(lambda t: np.ones_like(t)),
        -2.0, _cols(lambda t: -np.ones_like(t)), 0.0, 2.0),
    "e2": AnalyticSolution(
        "e2", _cols(lambda t: t, lambda t: np.ones_like(t)), _cols(lambda t: np.ones_like(t)),
        _cols(lambda t: -2.0 * np.ones_like(t), lambda t: -np.ones_like(t)),
        1.0, _cols(lambda t: np.ones_like(t), lambda t: np.zeros_like(t)), 0.0, 1.0),
    "doubleint-mintime": AnalyticSolution(
        "doubleint-mintime",
        _cols(lambda t: np.where(t <= 1.0, 0.5 * t**2, 1.0 - 0.5 * (2.0 - t) ** 2),
              lambda t: np.where(t <= 1.0, t, 2.0 - t)),
        _cols(lambda t: np.where(t <= 1.0, 1.0, -1.0)),
        _cols(lambda t: -np.ones_like(t), lambda t: t - 1.0),
        2.0,
        _cols(lambda t: np.where(t <= 1.0, t, 2.0 - t), lambda t: np.where(t <= 1.0, 1.0, -1.0)),
        0.0, 2.0),
    "oscillator-energy": AnalyticSolution(
        "oscillator-energy",
        _cols(lambda t: np.cos(t) + (np.sin(t) - t * np.cos(t)) / _PI,
              lambda t: (t / _PI - 1.0) * np.sin(t)),
        _cols(lambda t: 2.0 / _PI * np.sin(t)),
        _cols(lambda t: 2.0 / _PI * np.cos(t), lambda t: -2.0 / _PI * np.sin(t)),
        1.0 / _PI,
        _cols(lambda t: (t / _PI - 1.0) * np.sin(t),
              lambda t: np.sin(t) / _PI + (t / _PI - 1.0) * np.cos(t)),
        0.0, _PI),
    "lq-toy": AnalyticSolution(
        "lq-toy", _cols(lambda t: t), _cols(lambda t: np.ones_like(t)), _cols(lambda t: -np.ones_like(t)),
        0.5, _cols(lambda t: np.ones_like(t)), 0.0, 1.0),
    "lqr-infinite": AnalyticSolution(
        "lqr-infinite", _cols(lambda t: np.exp(-np.sqrt(2.0) * t)),
        _cols(lambda t: -_P * np.exp(-np.sqrt(2.0) * t)),
        _cols(lambda t: _P * np.exp(-np.sqrt(2.0) * t)),
        0.5 * _P, _cols(lambda t: -np.sqrt(2.0) * np.exp(-np.sqrt(2.0) * t)), 0.0, None),
    "constant-toy": AnalyticSolution(
        "constant-toy", _cols(lambda t: t), lambda t: np.zeros((np.size(t), 0)),
        _cols(lambda t: np.ones_like(t)), 1.0, _cols(lambda t: np.ones_like(t)), 0.0, 1.0),
}


def dynamics_residual(sol: AnalyticSolution, n=100, seed=0):
    """max |x*'(t) - f(x*(t), u*(t), t)| at n random times."""
    p = get_problem(sol.problem_id)
    hi = sol.tf if sol.tf is not None else sol.t0 + 20.0
    t = np.random.default_rng(seed).uniform(sol.t0, hi, n)
    X, U, Xd = sol.x_star(t), sol.u_star(t), sol.xdot_star(t)
    return max(float(np.max(np.abs(Xd[k] - p.f(X[k], U[k], t[k])))) for k in range(n))


def _check_registry():
    for sol in _SOLUTIONS.values():
        r = dynamics_residual(sol)
        if r > 1e-12:
            raise AssertionError(f"closed form for {sol.problem_id} misses its dynamics by {r:.2e}")


_check_registry()


def analytic_solution(problem_id) -> AnalyticSolution:
    try:
        return _SOLUTIONS[problem_id]
    except KeyError:
        raise KeyError(f"no closed-form solution registered for {problem_id!r}") from None


def has_analytic(problem_id):
    return problem_id in _SOLUTIONS


def rk_integrate(f, x0, t0, tf, steps, u=None):
    """Classical fixed-step RK4 for x' = f(x, t), or f(x, u(t), t) when `u` is given."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    rhs = (lambda x, t: f(x, u(t), t)) if u is not None else f

    def ev(x, t):
        v = np.asarray(rhs(x, t), dtype=float)
        if not np.all(np.isfinite(v)):
            raise EvaluationError(f"non-finite derivative at t={t}")
        return v

    x = np.array(x0, dtype=float)
    h = (tf - t0) / steps
    t = t0
    for k in range(steps):
        k1 = ev(x, t)
        k2 = ev(x + 0.5 * h * k1, t + 0.5 * h)
        k3 = ev(x + 0.5 * h * k2, t + 0.5 * h)
        k4 = ev(x + h * k3, t + h)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (k + 1) * h
    return x


@dataclass(frozen=True)
class ErrorNorms:
    state_linf: float
    control_linf: float
    cost_err: float
    costate_linf: Optional[float] = None


def error_norms(traj, exact: AnalyticSolution) -> ErrorNorms:
    """Nodal max-norm errors against a closed-form solution."""
    if traj.problem_id and traj.problem_id != exact.problem_id:
        raise IdMismatch(f"trajectory is for {traj.problem_id!r}, solution for {exact.problem_id!r}")
    t = traj.times
    X, U = exact.sample(t)
    lam_err = None
    if traj.costates is not None and exact.lam_star is not None:
        lam_err = float(np.max(np.abs(traj.costates - exact.lam_star(t))))
    ctrl = float(np.max(np.abs(traj.controls - U), initial=0.0))
    return ErrorNorms(float(np.max(np.abs(traj.states - X))), ctrl,
                      abs(float(traj.cost) - exact.cost_star), lam_err)

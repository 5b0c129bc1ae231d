"""
Adaptive spectral refinement.

Solve on LGL (finite horizon) or LGR (infinite horizon) grids of growing
order, warm starting each solve from the previous solution, until the last
Legendre coefficient of every state component drops below `delta_x` and the
discrete adjoint equation holds to `dual_tol`.
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import legendre as npleg

from .covector import attach_duals, dual_residuals
from .errors import MissingDuals, NegativeWeights, PsocError
from .interp import ONE, ONE_MINUS_T, interpolate, spectral_coeffs, weight_fn
from .legendre import Family, lgl_grid, make_grid
from .nlp import Status, solve
from .ocp import OcpProblem
from .transcribe import Trajectory, flatten, transcribe, trajectory_from_vector

log = logging.getLogger(__name__)


class Verdict(str, enum.Enum):
    CONVERGED = "Converged"
    DIVERGENCE_SUSPECTED = "DivergenceSuspected"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass(frozen=True)
class Record:
    N: int
    cost: float
    max_defect: float
    jackson_coeff: float
    dual_residual: float
    status: str


@dataclass
class SpectralReport:
    history: list = field(default_factory=list)
    verdict: Optional[Verdict] = None
    final_n: Optional[int] = None
    coeffs: Optional[np.ndarray] = None


def jackson_bound(M, V, j):
    """Upper bound 6 (M + V) / (j^(3/2) sqrt(pi)) on |a_j|, j >= 1."""
    if j < 1:
        raise ValueError("j must be >= 1")
    if M < 0 or V < 0:
        raise ValueError("M and V must be non-negative")
    return 6.0 * (M + V) / (j**1.5 * math.sqrt(math.pi))


def state_coeffs(traj: Trajectory):
    """Legendre coefficients of the state interpolant, shape (N+1, nx).

    Non-LGL solutions are first resampled at the LGL nodes of the same order.
    """
    if traj.grid.family is Family.LGL:
        return spectral_coeffs(traj.grid, traj.states)
    g = lgl_grid(traj.grid.N)
    return spectral_coeffs(g, interpolate(traj.grid, traj.states, traj.W, g.nodes))


def derivative_bounds(coeffs, samples=4001):
    """(M, V) per column: sup |y'| and the total variation of y' on [-1, 1].

    Estimated from dense samples of the derivative of the Legendre series.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float).T).T
    t = np.linspace(-1.0, 1.0, samples)
    out = []
    for k in range(coeffs.shape[1]):
        dy = npleg.legval(t, npleg.legder(coeffs[:, k]))
        out.append((float(np.max(np.abs(dy))), float(np.sum(np.abs(np.diff(dy))))))
    return out


def warm_guess(prev: Trajectory, nlp):
    """Interpolate a previous solution onto the nodes of a new transcription."""
    nodes = nlp.grid.nodes
    X = interpolate(prev.grid, prev.states, prev.W, nodes)
    if prev.controls.shape[1]:
        U = interpolate(prev.grid, prev.controls, prev.W, nodes)
    else:
        U = np.zeros((nodes.size, 0))
    z = nlp.layout.pack(X, U, prev.t0, prev.tf)
    return np.clip(z, nlp.xl, nlp.xu)


def _growing(values, runs):
    """True when the last `runs` steps of `values` all strictly increase."""
    if len(values) < runs + 1:
        return False
    tail = values[-(runs + 1):]
    return all(np.isfinite(tail)) and all(b > a for a, b in zip(tail, tail[1:]))


def _solve_one(p, grid, W, prev, force, allow_negative_weights, tol, feas_tol, max_iter):
    """Solve on one grid; returns (trajectory, record, converged, coefficients)."""
    nlp = transcribe(p, grid, W, force=force, allow_negative_weights=allow_negative_weights)
    guess = warm_guess(prev, nlp) if prev is not None else None
    sol = solve(nlp, tol=tol, feas_tol=feas_tol, max_iter=max_iter, x0=guess)
    traj = trajectory_from_vector(nlp, sol.x, cost=sol.objective, status=sol.status.value,
                                  iterations=sol.iterations)
    coeffs = state_coeffs(traj)
    aN = float(np.max(np.abs(coeffs[-1]), initial=0.0))
    dual = math.inf
    if sol.converged:
        traj.meta["dual_residuals"] = None
        try:
            traj = attach_duals(nlp, sol, traj)
            res = dual_residuals(p, traj)
            traj.meta["dual_residuals"] = res
            dual = res.adjoint_defect
        except (MissingDuals, NegativeWeights):
            pass
    defect = float(np.max(np.abs(nlp.defects(sol.x))))
    rec = Record(grid.N, float(sol.objective), defect, aN, dual, sol.status.value)
    log.info("N=%d cost=%.12g |a_N|=%.3e dual=%.3e status=%s", grid.N, rec.cost, aN, dual, rec.status)
    return traj, rec, sol, coeffs


def _defaults(p, family, W):
    if family is None:
        family = Family.LGR if p.horizon.infinite else Family.LGL
    family = Family(family)
    if W is None:
        W = ONE_MINUS_T if (p.horizon.infinite and family is Family.LGR) else ONE
    return family, weight_fn(W)


def _dual_worsening(duals, runs, dual_tol):
    """True when the last `runs` + 1 adjoint defects all exceed `dual_tol` and
    the newest is larger than the oldest of that window."""
    if len(duals) < runs + 1:
        return False
    tail = duals[-(runs + 1):]
    return all(math.isfinite(d) and d > dual_tol for d in tail) and tail[-1] > tail[0]


def solve_adaptive(p: OcpProblem, N0=8, Nmax=64, step=4, delta_x=1e-6, dual_tol=1e-3,
                   family=None, W=None, force=False, allow_negative_weights=False,
                   tol=1e-10, feas_tol=1e-10, max_iter=500, growth_runs=2,
                   on_record: Optional[Callable] = None):
    """Run the refinement loop; returns (trajectory, SpectralReport).

    The loop ends with DivergenceSuspected after `growth_runs` consecutive
    increases of |a_N| (three consecutive orders by default), after two
    infeasible NLPs, or when the adjoint defect stays above `dual_tol` over
    `growth_runs` + 1 orders and ends higher than it started. The trajectory is the
    last one that converged, or None if no solve converged.
    """
    family, W = _defaults(p, family, W)
    if delta_x < 1e-12:
        log.warning("delta_x=%g is below the practical floor 1e-12", delta_x)

    report = SpectralReport()
    best = None
    infeasible = 0
    a_hist, dual_hist = [], []
    N = N0
    while N <= Nmax:
        traj, rec, sol, coeffs = _solve_one(p, make_grid(family, N), W, best, force,
                                            allow_negative_weights, tol, feas_tol, max_iter)
        if sol.status is Status.INFEASIBLE:
            infeasible += 1
        if sol.converged:
            best = traj
        report.history.append(rec)
        a_hist.append(rec.jackson_coeff if sol.converged else math.nan)
        dual_hist.append(rec.dual_residual)
        report.final_n, report.coeffs = N, coeffs
        if on_record is not None:
            on_record(rec)
        if sol.converged and rec.jackson_coeff <= delta_x and rec.dual_residual <= dual_tol:
            report.verdict = Verdict.CONVERGED
            return traj, report
        if (infeasible >= 2 or _growing(a_hist, growth_runs)
                or _dual_worsening(dual_hist, growth_runs, dual_tol)):
            report.verdict = Verdict.DIVERGENCE_SUSPECTED
            return best, report
        N += step
    report.verdict = Verdict.BUDGET_EXHAUSTED
    return best, report


def solve_fixed(p: OcpProblem, N, family=None, W=None, force=False, allow_negative_weights=False,
                dual_tol=1e-3, step=4, probes=2, tol=1e-10, feas_tol=1e-10, max_iter=500):
    """Solve at one order N and attach a verdict; returns (trajectory, SpectralReport).

    The verdict is None when the NLP fails. Otherwise it is Converged when
    the adjoint defect is within `dual_tol`, DivergenceSuspected when the
    grid has a non-positive weight or the defect worsens over `probes`
    extra solves at N + step, N + 2 step, ..., and BudgetExhausted
    when the probes are inconclusive. The returned trajectory is always the
    order-N solution.
    """
    family, W = _defaults(p, family, W)
    grid = make_grid(family, N)
    traj, rec, sol, coeffs = _solve_one(p, grid, W, None, force, allow_negative_weights,
                                        tol, feas_tol, max_iter)
    report = SpectralReport(history=[rec], final_n=N, coeffs=coeffs)
    if not sol.converged:
        return traj, report
    if np.any(grid.weights <= 0.0):
        report.verdict = Verdict.DIVERGENCE_SUSPECTED
        return traj, report
    if rec.dual_residual <= dual_tol:
        report.verdict = Verdict.CONVERGED
        return traj, report
    prev, duals = traj, [rec.dual_residual]
    for k in range(1, probes + 1):
        t, r, s, _ = _solve_one(p, make_grid(family, N + k * step), W, prev, force,
                                allow_negative_weights, tol, feas_tol, max_iter)
        report.history.append(r)
        if not s.converged:
            break
        prev = t
        duals.append(r.dual_residual)
    grew = len(duals) == probes + 1 and _dual_worsening(duals, probes, dual_tol)
    report.verdict = Verdict.DIVERGENCE_SUSPECTED if grew else Verdict.BUDGET_EXHAUSTED
    return traj, report

"""
Dense sequential quadratic programming.

    minimize f(x)  subject to  cl <= c(x) <= cu,  xl <= x <= xu

Equality rows are those with cl == cu. Multipliers follow the sign
convention of the Lagrangian L = f + y.c + z.x: a multiplier is <= 0 when
its row (or variable) sits on the lower bound, >= 0 on the upper bound, and
zero when strictly inside.

Each iteration solves a strictly convex QP built from a damped BFGS
approximation of the Lagrangian Hessian. The QP eliminates equality rows
through an SVD null-space basis and solves the remaining inequality problem
as a least-distance program via non-negative least squares. Steps are safeguarded
by an l1 merit line search with a second-order correction; inconsistent
linearizations switch to an elastic QP.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.optimize import lsq_linear

from .errors import EvaluationError
from .ocp import fd_jacobian

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    CONVERGED = "Converged"
    ITER_LIMIT = "IterLimit"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"


@dataclass(eq=False)
class Nlp:
    """A dense NLP. Missing derivatives are taken by central differences.

    `mult_metric` and `bound_metric` are positive weights used only to pick
    a multiplier when the KKT multipliers are not unique: the solver reports
    the one minimising sum(y**2 / metric).
    """

    nvar: int
    objective: Callable
    constraints: Optional[Callable] = None
    cl: Optional[np.ndarray] = None
    cu: Optional[np.ndarray] = None
    xl: Optional[np.ndarray] = None
    xu: Optional[np.ndarray] = None
    x0: Optional[np.ndarray] = None
    gradient: Optional[Callable] = None
    jacobian: Optional[Callable] = None
    mult_metric: Optional[np.ndarray] = None
    bound_metric: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.nvar
        self.xl = np.full(n, -np.inf) if self.xl is None else np.asarray(self.xl, float)
        self.xu = np.full(n, np.inf) if self.xu is None else np.asarray(self.xu, float)
        self.x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, float)
        if self.cl is not None:
            m = len(self.cl)
        elif self.constraints is not None:
            m = len(np.atleast_1d(self.constraints(self.x0)))
        else:
            m = 0
        self.cl = np.zeros(m) if self.cl is None else np.asarray(self.cl, float)
        self.cu = np.zeros(m) if self.cu is None else np.asarray(self.cu, float)
        if self.cl.shape != (m,) or self.cu.shape != (m,):
            raise ValueError("constraint bounds must match the number of constraints")
        if self.mult_metric is None:
            self.mult_metric = np.ones(m)
        if self.bound_metric is None:
            self.bound_metric = np.ones(n)

    @property
    def ncon(self):
        return self.cl.size

    def eval_f(self, x):
        v = float(self.objective(x))
        if not np.isfinite(v):
            raise EvaluationError("objective returned a non-finite value")
        return v

    def eval_c(self, x):
        if self.ncon == 0:
            return np.zeros(0)
        c = np.asarray(self.constraints(x), dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise EvaluationError("constraints returned a non-finite value")
        return c

    def eval_g(self, x):
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=float).reshape(-1)
        return fd_jacobian(lambda z: self.objective(z), x, central=True)[0]

    def eval_J(self, x):
        if self.ncon == 0:
            return np.zeros((0, self.nvar))
        if self.jacobian is not None:
            return np.asarray(self.jacobian(x), dtype=float).reshape(self.ncon, self.nvar)
        return fd_jacobian(self.eval_c, x, central=True)


@dataclass
class NlpSolution:
    x: np.ndarray
    mults: np.ndarray
    bound_mults: np.ndarray
    status: Status
    kkt_residual: float
    iterations: int
    objective: float
    max_violation: float
    equality: np.ndarray = field(repr=False, default=None)

    @property
    def converged(self):
        return self.status is Status.CONVERGED

    @property
    def eq_mults(self):
        return self.mults[self.equality]

    @property
    def ineq_mults(self):
        return self.mults[~self.equality]


@dataclass(frozen=True)
class KktReport:
    stationarity: float
    feasibility: float
    complementarity: float

    @property
    def worst(self):
        return max(self.stationarity, self.feasibility, self.complementarity)


# ---------------------------------------------------------------------------
# residuals


def _violation(v, lo, hi):
    return np.maximum(0.0, np.maximum(lo - v, v - hi))


def _complementarity(v, lo, hi, mult):
    """|mult| times the distance to the bound its sign points at (capped at 1)."""
    gap = np.where(mult > 0, hi - v, np.where(mult < 0, v - lo, 0.0))
    gap = np.where(lo == hi, 0.0, gap)
    gap = np.minimum(np.maximum(gap, 0.0), 1.0)
    gap = np.where(np.isfinite(gap), gap, 1.0)
    return np.abs(mult) * gap


def _kkt(g, c, J, x, y, z, nlp):
    stat = g + J.T @ y + z
    viol = np.concatenate([_violation(c, nlp.cl, nlp.cu), _violation(x, nlp.xl, nlp.xu)])
    comp = np.concatenate([_complementarity(c, nlp.cl, nlp.cu, y),
                           _complementarity(x, nlp.xl, nlp.xu, z)])
    return KktReport(
        float(np.max(np.abs(stat), initial=0.0)),
        float(np.max(viol, initial=0.0)),
        float(np.max(comp, initial=0.0)),
    )


def kkt_report(nlp: Nlp, sol: NlpSolution) -> KktReport:
    """Stationarity, feasibility and complementarity recomputed from scratch."""
    x = np.asarray(sol.x, float)
    return _kkt(nlp.eval_g(x), nlp.eval_c(x), nlp.eval_J(x), x,
                np.asarray(sol.mults, float), np.asarray(sol.bound_mults, float), nlp)


# ---------------------------------------------------------------------------
# QP subproblem


class QpInfeasible(Exception):
    pass


def _nnls(M, b):
    # bounded-variable least squares; scipy 1.15's nnls can return non-optimal points
    sol = lsq_linear(M, b, bounds=(0.0, np.inf), method="bvls", tol=1e-14)
    return np.maximum(sol.x, 0.0)


def solve_qp(H, g, A, lo, hi, bl, bu, eq_tol=1e-9):
    """Solve min 1/2 d'Hd + g'd s.t. lo <= A d <= hi, bl <= d <= bu.

    H must be symmetric positive definite. Returns (d, y, z) with
    H d + g + A'y + z = 0 and the sign convention of this module.
    Raises QpInfeasible when the constraints are inconsistent.
    """
    n = g.size
    m = lo.size
    eq_rows = np.flatnonzero(lo == hi)
    eq_vars = np.flatnonzero(bl == bu)
    Ae = np.vstack([A[eq_rows], np.eye(n)[eq_vars]])
    be = np.concatenate([lo[eq_rows], bl[eq_vars]])

    # inequalities in the form G d >= h; `owner` remembers where each came from
    G, h, owner = [], [], []
    for rows, src in ((A, "row"), (np.eye(n), "var")):
        lov, hiv = (lo, hi) if src == "row" else (bl, bu)
        free = lov < hiv
        idx = np.flatnonzero(free & np.isfinite(lov))
        G.append(rows[idx]); h.append(lov[idx]); owner += [(src, i, -1.0) for i in idx]
        idx = np.flatnonzero(free & np.isfinite(hiv))
        G.append(-rows[idx]); h.append(-hiv[idx]); owner += [(src, i, 1.0) for i in idx]
    G = np.vstack(G) if owner else np.zeros((0, n))
    h = np.concatenate(h) if owner else np.zeros(0)

    # equality elimination d = dp + Z w
    if Ae.shape[0]:
        U, S, Vt = np.linalg.svd(Ae, full_matrices=True)
        r = int(np.sum(S > S[0] * 1e-12)) if S.size else 0
        Ur, Sr, Vr = U[:, :r], S[:r], Vt[:r].T
        dp = Vr @ ((Ur.T @ be) / Sr)
        if np.max(np.abs(Ae @ dp - be)) > eq_tol * (1.0 + np.max(np.abs(be))):
            raise QpInfeasible("inconsistent equality constraints")
        Z = Vt[r:].T
    else:
        dp, Z = np.zeros(n), np.eye(n)
        Ur = Sr = Vr = None

    nr = Z.shape[1]
    lam = np.zeros(h.size)
    if nr == 0:
        d = dp
        if h.size and np.min(G @ d - h) < -eq_tol * (1.0 + np.max(np.abs(h))):
            raise QpInfeasible("no room left for the inequalities")
        resid = H @ d + g
        act = np.flatnonzero(G @ d - h <= eq_tol * (1.0 + np.abs(h)))
        M = np.hstack([Ae.T, G[act].T])
        lb = np.concatenate([np.full(Ae.shape[0], -np.inf), np.zeros(act.size)])
        if M.shape[1]:
            sol = lsq_linear(M, resid, bounds=(lb, np.inf), method="bvls", tol=1e-14)
            mu, lam[act] = sol.x[:Ae.shape[0]], sol.x[Ae.shape[0]:]
        else:
            mu = np.zeros(0)
    else:
        Hr = Z.T @ H @ Z
        q = Z.T @ (H @ dp + g)
        L = np.linalg.cholesky(0.5 * (Hr + Hr.T))
        Lq = solve_triangular(L, q, lower=True)
        if h.size:
            Gz = G @ Z
            E = solve_triangular(L, Gz.T, lower=True).T
            f = h - G @ dp + E @ Lq
            if np.all(f <= 0.0):
                v = np.zeros(nr)
            else:
                # least-distance program min |v| s.t. E v >= f, via NNLS
                scale = max(1.0, np.max(np.abs(f)))
                Mnn = np.vstack([E.T, f[None, :]]) / scale
                rhs = np.zeros(nr + 1)
                rhs[-1] = 1.0
                u = _nnls(Mnn, rhs)
                res = Mnn @ u - rhs
                if -res[-1] <= 1e-12:
                    raise QpInfeasible("inconsistent inequality constraints")
                v = -res[:-1] / res[-1]
                lam = u / (-res[-1]) / scale
        else:
            v = np.zeros(nr)
        w = solve_triangular(L.T, v - Lq, lower=False)
        d = dp + Z @ w
        if Ae.shape[0]:
            resid = H @ d + g - G.T @ lam
            mu = Ur @ ((Vr.T @ resid) / Sr)
        else:
            mu = np.zeros(0)

    y, z = np.zeros(m), np.zeros(n)
    ne_rows = eq_rows.size
    y[eq_rows] = -mu[:ne_rows]
    z[eq_vars] = -mu[ne_rows:]
    for k, (src, i, sgn) in enumerate(owner):
        if lam[k]:
            if src == "row":
                y[i] += sgn * lam[k]
            else:
                z[i] += sgn * lam[k]
    return d, y, z


def _elastic_qp(H, g, A, lo, hi, bl, bu, penalty):
    """QP with the violated part of the linearization scaled by (1 - zeta)."""
    n, m = g.size, lo.size
    # at d = 0 the linearized rows read lo <= 0 + ... ; find the shortfall
    short = np.where(lo > 0, lo, np.where(hi < 0, hi, 0.0))
    Ha = np.zeros((n + 1, n + 1))
    Ha[:n, :n] = H
    Ha[n, n] = 1.0
    ga = np.concatenate([g, [penalty]])
    Aa = np.hstack([A, short[:, None]])
    d, y, z = solve_qp(Ha, ga, Aa, lo, hi, np.append(bl, 0.0), np.append(bu, 1.0), eq_tol=1e-7)
    return d[:n], d[n], y, z[:n]


# ---------------------------------------------------------------------------
# SQP driver


def _merit(f, c, nlp, rho):
    return f + float(rho @ _violation(c, nlp.cl, nlp.cu))


def _bfgs(B, s, yk):
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 1e-300:
        return B
    sy = float(s @ yk)
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        yk = theta * yk + (1.0 - theta) * Bs
        sy = float(s @ yk)
    B = B - np.outer(Bs, Bs) / sBs + np.outer(yk, yk) / sy
    return 0.5 * (B + B.T)


def _refine_multipliers(nlp, x, g, c, J, y, z, act_tol):
    """Among all KKT multipliers at x, return the one of least metric norm."""
    n, m = x.size, c.size
    lo_r = np.flatnonzero((c - nlp.cl <= act_tol) | (nlp.cl == nlp.cu))
    hi_r = np.flatnonzero((nlp.cu - c <= act_tol) & (nlp.cl < nlp.cu))
    lo_v = np.flatnonzero(x - nlp.xl <= act_tol)
    hi_v = np.flatnonzero((nlp.xu - x <= act_tol) & (nlp.xl < nlp.xu))
    rows = np.union1d(lo_r, hi_r)
    vars_ = np.union1d(lo_v, hi_v)
    k = rows.size + vars_.size
    if k == 0:
        return y, z
    Amat = np.hstack([J[rows].T, np.eye(n)[:, vars_]])
    metric = np.concatenate([nlp.mult_metric[rows], nlp.bound_metric[vars_]])
    metric = np.maximum(np.abs(metric), 1e-300)
    lbv = np.where(np.isin(rows, hi_r) & ~np.isin(rows, lo_r), 0.0, -np.inf)
    ubv = np.where(np.isin(rows, lo_r) & ~np.isin(rows, hi_r) & (nlp.cl[rows] < nlp.cu[rows]), 0.0, np.inf)
    eqr = nlp.cl[rows] == nlp.cu[rows]
    lbv, ubv = np.where(eqr, -np.inf, lbv), np.where(eqr, np.inf, ubv)
    vfix = nlp.xl[vars_] == nlp.xu[vars_]
    lbz = np.where(np.isin(vars_, hi_v) & ~np.isin(vars_, lo_v) & ~vfix, 0.0, -np.inf)
    ubz = np.where(np.isin(vars_, lo_v) & ~np.isin(vars_, hi_v) & ~vfix, 0.0, np.inf)
    # solve in scaled variables t = mult / sqrt(metric)
    sq = np.sqrt(metric)
    Asc = Amat * sq[None, :]
    lb = np.concatenate([lbv, lbz]) / sq
    ub = np.concatenate([ubv, ubz]) / sq
    try:
        t, _, _ = solve_qp(np.eye(k), np.zeros(k), Asc, -g, -g, lb, ub, eq_tol=1e-6)
    except (QpInfeasible, np.linalg.LinAlgError):
        return y, z
    mult = t * sq
    y2, z2 = np.zeros(m), np.zeros(n)
    y2[rows] = mult[:rows.size]
    z2[vars_] = mult[rows.size:]
    old = np.max(np.abs(g + J.T @ y + z), initial=0.0)
    new = np.max(np.abs(g + J.T @ y2 + z2), initial=0.0)
    if new > max(old, 1e-10) * 10:
        return y, z
    return y2, z2


def solve(nlp: Nlp, tol=1e-8, feas_tol=1e-8, max_iter=500, x0=None) -> NlpSolution:
    """Run SQP from `x0` (default nlp.x0). Failures come back as a status."""
    n = nlp.nvar
    x = np.clip(np.asarray(nlp.x0 if x0 is None else x0, float).copy(), nlp.xl, nlp.xu)
    equality = nlp.cl == nlp.cu
    f, c = nlp.eval_f(x), nlp.eval_c(x)
    g, J = nlp.eval_g(x), nlp.eval_J(x)
    B = np.eye(n)
    rho = np.zeros(nlp.ncon)
    y, z = np.zeros(nlp.ncon), np.zeros(n)
    elastic_run = 0
    status = Status.ITER_LIMIT
    it = 0
    first_update = True

    def finish(status, x, f, c, g, J, y, z, it):
        if status is Status.CONVERGED:
            y, z = _refine_multipliers(nlp, x, g, c, J, y, z, act_tol=max(10 * feas_tol, 1e-7))
        rep = _kkt(g, c, J, x, y, z, nlp)
        return NlpSolution(x=x, mults=y, bound_mults=z, status=status,
                           kkt_residual=max(rep.stationarity, rep.complementarity),
                           iterations=it, objective=f, max_violation=rep.feasibility,
                           equality=equality)

    for it in range(1, max_iter + 1):
        lo, hi = nlp.cl - c, nlp.cu - c
        bl, bu = nlp.xl - x, nlp.xu - x
        zeta = 0.0
        try:
            d, yq, zq = solve_qp(B, g, J, lo, hi, bl, bu)
            elastic_run = 0
        except (QpInfeasible, np.linalg.LinAlgError):
            elastic_run += 1
            penalty = 1e4 * max(1.0, np.max(rho, initial=0.0))
            try:
                d, zeta, yq, zq = _elastic_qp(B, g, J, lo, hi, bl, bu, penalty)
            except (QpInfeasible, np.linalg.LinAlgError):
                return finish(Status.INFEASIBLE, x, f, c, g, J, y, z, it)
            yq = yq / max(1.0 - zeta, 1e-12) if zeta < 1 else yq
            if elastic_run > 100 or (zeta > 1.0 - 1e-10 and np.max(np.abs(d)) < 1e-12):
                return finish(Status.INFEASIBLE, x, f, c, g, J, y, z, it)

        rep = _kkt(g, c, J, x, yq, zq, nlp)
        if zeta == 0.0 and rep.feasibility <= feas_tol and rep.stationarity <= tol \
                and rep.complementarity <= tol:
            return finish(Status.CONVERGED, x, f, c, g, J, yq, zq, it)
        if not np.isfinite(f) or f < -1e20 or np.max(np.abs(x), initial=0.0) > 1e20:
            return finish(Status.UNBOUNDED, x, f, c, g, J, y, z, it)

        # Powell's penalty update: follows |y| but may decrease slowly
        rho = np.maximum(np.abs(yq), 0.5 * (rho + np.abs(yq))) + 1e-10
        vvec = _violation(c, nlp.cl, nlp.cu)
        dphi = float(g @ d) - float(rho @ vvec) * (zeta if zeta else 1.0)
        if zeta and dphi >= 0.0 and vvec.any():
            rho = rho * (2.0 * max(1.0, float(g @ d) / (zeta * float(rho @ vvec) + 1e-300))) + 1.0
            dphi = float(g @ d) - zeta * float(rho @ vvec)
        phi0 = _merit(f, c, nlp, rho)

        # merit changes below this are rounding noise
        eps = np.finfo(float).eps
        noise = 64.0 * eps * (1.0 + abs(f)) + eps * float(
            rho @ (1.0 + np.abs(J) @ np.abs(x)))
        tiny = np.max(np.abs(d), initial=0.0) <= 1e-9 * (1.0 + np.max(np.abs(x), initial=0.0))
        alpha, accepted, step = 1.0, False, d
        for ls in range(40):
            xt = np.clip(x + alpha * step, nlp.xl, nlp.xu)
            ft, ct = nlp.eval_f(xt), nlp.eval_c(xt)
            phit = _merit(ft, ct, nlp, rho)
            armijo = phit <= phi0 + 1e-4 * alpha * min(dphi, 0.0)
            if armijo or tiny or (-dphi <= noise and phit <= phi0 + noise):
                accepted = True
                break
            if ls == 0 and zeta == 0.0 and nlp.ncon:
                # second-order correction against the Maratos effect
                try:
                    d2, _, _ = solve_qp(B, g, J, nlp.cl - ct + J @ d, nlp.cu - ct + J @ d, bl, bu)
                    xs = np.clip(x + d2, nlp.xl, nlp.xu)
                    fs, cs = nlp.eval_f(xs), nlp.eval_c(xs)
                    if _merit(fs, cs, nlp, rho) <= phi0 + 1e-4 * min(dphi, 0.0):
                        xt, ft, ct, accepted = xs, fs, cs, True
                        break
                except (QpInfeasible, np.linalg.LinAlgError):
                    pass
            alpha *= 0.5
        if not accepted:
            # the model is off; restart curvature and take a small step anyway
            B = np.eye(n)
            first_update = True
            xt = np.clip(x + alpha * d, nlp.xl, nlp.xu)
            ft, ct = nlp.eval_f(xt), nlp.eval_c(xt)

        gt, Jt = nlp.eval_g(xt), nlp.eval_J(xt)
        s = xt - x
        yk = (gt + Jt.T @ yq) - (g + J.T @ yq)
        if first_update:
            sy, yy = float(s @ yk), float(yk @ yk)
            if sy > 1e-12 * max(1.0, float(s @ s)) and yy > 0:
                B = (yy / sy) * np.eye(n)
                first_update = False
        B = _bfgs(B, s, yk)
        x, f, c, g, J = xt, ft, ct, gt, Jt
        y, z = yq, zq
        log.debug("sqp %d f=%.10g viol=%.2e stat=%.2e alpha=%g", it, f, rep.feasibility,
                  rep.stationarity, alpha)

    return finish(status, x, f, c, g, J, y, z, it)

"""
Transcription of an optimal control problem into a dense NLP on one grid.

Decision vector layout (state-major, then controls, then free times)::

    z = [x_1(t_0..t_N), ..., x_nx(t_0..t_N), u_1(t_0..t_N), ..., [t0], [tf]]

Constraint rows: nx*(N+1) defects (state-major), ne endpoint rows, then
nh*(N+1) path rows (component-major). The defect of state i at node j is

    sum_k D[j, k] x_i(t_k) - s(tau_j) f_i(x(t_j), u(t_j), t_j)

with s = dt/dtau. Endpoint rows see the first and last nodal values.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import domain
from .errors import IncompatiblePairing, InvalidSmoothness, NegativeWeights, NotConverged
from .interp import NATURAL_W, DiffMatrix, check_pairing, diff_matrix, interpolate, weight_fn
from .legendre import Grid
from .nlp import Nlp, NlpSolution
from .ocp import OcpProblem, fd_jacobian, split_jacobian

__all__ = [
    "consistency_tolerance", "Layout", "NlpProblem", "Trajectory", "transcribe",
    "extract_trajectory", "flatten", "default_guess", "IncompatiblePairing",
]


def consistency_tolerance(N, mx=2):
    """delta^N = (N - 1)^(3/2 - mx)."""
    if mx < 2:
        raise InvalidSmoothness(f"smoothness index must be >= 2, got {mx}")
    if N < 2:
        raise ValueError(f"need N >= 2, got {N}")
    return float((N - 1.0) ** (1.5 - mx))


@dataclass(frozen=True)
class Layout:
    nx: int
    nu: int
    n1: int
    free_t0: bool = False
    free_tf: bool = False

    @property
    def nvar(self):
        return (self.nx + self.nu) * self.n1 + int(self.free_t0) + int(self.free_tf)

    @property
    def t0_index(self):
        return (self.nx + self.nu) * self.n1 if self.free_t0 else None

    @property
    def tf_index(self):
        return (self.nx + self.nu) * self.n1 + int(self.free_t0) if self.free_tf else None

    def state_index(self, i, j):
        return i * self.n1 + j

    def control_index(self, k, j):
        return (self.nx + k) * self.n1 + j

    def unpack(self, z, t0=None, tf=None):
        """(X, U, t0, tf) with X of shape (N+1, nx) and U of shape (N+1, nu)."""
        z = np.asarray(z, dtype=float)
        nxn = self.nx * self.n1
        X = z[:nxn].reshape(self.nx, self.n1).T
        U = z[nxn:nxn + self.nu * self.n1].reshape(self.nu, self.n1).T
        if self.free_t0:
            t0 = z[self.t0_index]
        if self.free_tf:
            tf = z[self.tf_index]
        return X, U, t0, tf

    def pack(self, X, U, t0=None, tf=None):
        parts = [np.asarray(X, float).T.ravel(), np.asarray(U, float).reshape(self.n1, self.nu).T.ravel()]
        if self.free_t0:
            parts.append([t0])
        if self.free_tf:
            parts.append([tf])
        return np.concatenate(parts)


@dataclass(eq=False)
class NlpProblem(Nlp):
    problem: Optional[OcpProblem] = None
    grid: Optional[Grid] = None
    W: object = None
    D: Optional[DiffMatrix] = None
    layout: Optional[Layout] = None
    delta_n: float = 0.0
    band: float = 0.0
    quad_w: Optional[np.ndarray] = None

    @property
    def n_defect(self):
        return self.problem.nx * self.grid.N + self.problem.nx

    @property
    def n_endpoint(self):
        return self.problem.ne

    @property
    def n_path(self):
        return self.problem.nh * (self.grid.N + 1)

    def times(self, z):
        """Physical node times and the scale s(tau_j) at a decision vector."""
        _, _, t0, tf = self.layout.unpack(z, self.problem.horizon.t0, self.problem.horizon.tf)
        tau = self.grid.nodes
        t = domain.to_physical(self.problem.horizon, tau, t0, tf)
        s = np.broadcast_to(domain.dynamics_scale(self.problem.horizon, tau, t0, tf), tau.shape)
        return t, np.array(s, dtype=float), t0, tf

    def defects(self, z):
        """Defect matrix of shape (N+1, nx)."""
        X, U, _, _ = self.layout.unpack(z)
        t, s, _, _ = self.times(z)
        p = self.problem
        fx = np.array([p.f(X[j], U[j], t[j]) for j in range(X.shape[0])])
        return self.D.entries @ X - s[:, None] * fx

    def running_cost(self, z):
        p = self.problem
        if p.running_cost is None:
            return 0.0
        X, U, _, _ = self.layout.unpack(z)
        t, s, _, _ = self.times(z)
        vals = np.array([p.F(X[j], U[j], t[j]) for j in range(X.shape[0])])
        return float(np.sum(self.quad_w * s * vals))


def _node_arrays(nlp, z):
    X, U, t0, tf = nlp.layout.unpack(z, nlp.problem.horizon.t0, nlp.problem.horizon.tf)
    t, s, _, _ = nlp.times(z)
    return X, U, t0, tf, t, s


def _time_sensitivities(p, tau, t0, tf):
    """d t_j / d(t0, tf) and d s / d(t0, tf) for the affine map."""
    if p.horizon.infinite:
        return (np.ones_like(tau), np.zeros_like(tau)), (np.zeros_like(tau), np.zeros_like(tau))
    return ((1.0 - tau) / 2.0, (1.0 + tau) / 2.0), (np.full_like(tau, -0.5), np.full_like(tau, 0.5))


def _objective(nlp, z):
    X, U, t0, tf, t, s = _node_arrays(nlp, z)
    return nlp.problem.E(X[0], X[-1], t0, tf) + nlp.running_cost(z)


def _objective_grad(nlp, z):
    p, lay = nlp.problem, nlp.layout
    X, U, t0, tf, t, s = _node_arrays(nlp, z)
    nx, n1 = p.nx, lay.n1
    g = np.zeros(lay.nvar)
    if p.endpoint_cost is not None:
        v = np.concatenate([X[0], X[-1], [t0, tf if tf is not None else 0.0]])
        gE = fd_jacobian(lambda v: p.E(v[:nx], v[nx:2 * nx], v[-2], v[-1] if tf is not None else None),
                         v, central=True)[0]
        for i in range(nx):
            g[lay.state_index(i, 0)] += gE[i]
            g[lay.state_index(i, n1 - 1)] += gE[nx + i]
        if lay.free_t0:
            g[lay.t0_index] += gE[-2]
        if lay.free_tf:
            g[lay.tf_index] += gE[-1]
    if p.running_cost is not None:
        Fv = np.empty(n1)
        Ft = np.empty(n1)
        free = lay.free_t0 or lay.free_tf
        for j in range(n1):
            Fx, Fu, Ft[j] = p.F_grad(X[j], U[j], t[j], with_t=free)
            Fv[j] = p.F(X[j], U[j], t[j])
            c = nlp.quad_w[j] * s[j]
            for i in range(nx):
                g[lay.state_index(i, j)] += c * Fx[i]
            for k in range(p.nu):
                g[lay.control_index(k, j)] += c * Fu[k]
        (dt0, dtf), (ds0, dsf) = _time_sensitivities(p, nlp.grid.nodes, t0, tf)
        w = nlp.quad_w
        if lay.free_t0:
            g[lay.t0_index] += np.sum(w * (ds0 * Fv + s * Ft * dt0))
        if lay.free_tf:
            g[lay.tf_index] += np.sum(w * (dsf * Fv + s * Ft * dtf))
    return g


def _constraints(nlp, z):
    p = nlp.problem
    X, U, t0, tf, t, s = _node_arrays(nlp, z)
    rows = [nlp.defects(z).T.ravel()]
    if p.ne:
        rows.append(p.e(X[0], X[-1], t0, tf))
    if p.nh:
        H = np.array([p.h(X[j], U[j], t[j]) for j in range(X.shape[0])])
        rows.append(H.T.ravel())
    return np.concatenate(rows)


def _constraints_jac(nlp, z):
    p, lay = nlp.problem, nlp.layout
    X, U, t0, tf, t, s = _node_arrays(nlp, z)
    nx, nu, n1 = p.nx, p.nu, lay.n1
    m = nx * n1 + p.ne + p.nh * n1
    J = np.zeros((m, lay.nvar))
    D = nlp.D.entries
    for i in range(nx):
        J[i * n1:(i + 1) * n1, i * n1:(i + 1) * n1] = D
    (dt0, dtf), (ds0, dsf) = _time_sensitivities(p, nlp.grid.nodes, t0, tf)
    jj = np.arange(n1)
    for j in range(n1):
        fx, fu, ft = p.f_jac(X[j], U[j], t[j])
        fj = p.f(X[j], U[j], t[j])
        for i in range(nx):
            r = i * n1 + j
            J[r, jj[j] + np.arange(nx) * n1] -= s[j] * fx[i]
            J[r, nx * n1 + jj[j] + np.arange(nu) * n1] -= s[j] * fu[i]
            if lay.free_t0:
                J[r, lay.t0_index] -= ds0[j] * fj[i] + s[j] * ft[i] * dt0[j]
            if lay.free_tf:
                J[r, lay.tf_index] -= dsf[j] * fj[i] + s[j] * ft[i] * dtf[j]
    r0 = nx * n1
    if p.ne:
        v = np.concatenate([X[0], X[-1], [t0, tf if tf is not None else 0.0]])
        Je = fd_jacobian(lambda v: p.e(v[:nx], v[nx:2 * nx], v[-2], v[-1] if tf is not None else None),
                         v, central=True)
        for i in range(nx):
            J[r0:r0 + p.ne, lay.state_index(i, 0)] += Je[:, i]
            J[r0:r0 + p.ne, lay.state_index(i, n1 - 1)] += Je[:, nx + i]
        if lay.free_t0:
            J[r0:r0 + p.ne, lay.t0_index] = Je[:, -2]
        if lay.free_tf:
            J[r0:r0 + p.ne, lay.tf_index] = Je[:, -1]
    r0 += p.ne
    if p.nh:
        for j in range(n1):
            hx, hu, ht = split_jacobian(p.h, X[j], U[j], t[j])
            for l in range(p.nh):
                r = r0 + l * n1 + j
                J[r, j + np.arange(nx) * n1] = hx[l]
                J[r, nx * n1 + j + np.arange(nu) * n1] = hu[l]
                if lay.free_t0:
                    J[r, lay.t0_index] = ht[l] * dt0[j]
                if lay.free_tf:
                    J[r, lay.tf_index] = ht[l] * dtf[j]
    return J


def _free_time_bounds(p):
    hz = p.horizon
    span = (hz.tf - hz.t0) if not hz.infinite else 1.0
    t0b = tfb = None
    if hz.free_t0:
        t0b = p.t0_bounds or (hz.t0 - 10.0 * span, hz.t0)
    if hz.free_tf:
        base = t0b[1] if t0b else hz.t0
        tfb = p.tf_bounds or (base + 1e-3, 10.0 * hz.tf if hz.tf > 0 else hz.t0 + 10.0 * span)
    return t0b, tfb


def _box_guess(lo, hi):
    out = np.zeros(lo.size)
    both = np.isfinite(lo) & np.isfinite(hi)
    out[both] = 0.5 * (lo[both] + hi[both])
    out[np.isfinite(lo) & ~np.isfinite(hi)] = lo[np.isfinite(lo) & ~np.isfinite(hi)]
    out[~np.isfinite(lo) & np.isfinite(hi)] = hi[~np.isfinite(lo) & np.isfinite(hi)]
    return out


def default_guess(p: OcpProblem, grid: Grid, layout: Layout):
    """Straight line between boundary data for states, box midpoints for controls."""
    if p.x_guess is not None:
        a, b = (np.asarray(v, float).reshape(p.nx) for v in p.x_guess)
    else:
        a = b = _box_guess(*p.x_box)
    r = 0.5 * (grid.nodes + 1.0)
    X = a[None, :] + r[:, None] * (b - a)[None, :]
    U = np.tile(_box_guess(*p.u_box), (grid.N + 1, 1))
    return layout.pack(X, U, p.horizon.t0, p.horizon.tf)


def transcribe(p: OcpProblem, grid: Grid, W=None, *, force=False, allow_negative_weights=False,
               relax=False, guess=None) -> NlpProblem:
    """Build the NLP for problem `p` on `grid` with interpolation weight W.

    Parameters
    ----------
    W : WeightFn or str, optional
        Defaults to the weight the grid family pairs with.
    force : bool
        Accept grid/W combinations outside the recommended pairings.
    allow_negative_weights : bool
        Accept grids whose quadrature weights are not all positive.
    relax : bool
        Replace the defect equalities by bands of half-width delta^N and
        widen the endpoint bounds by delta^N. Off by default: the band lets
        the discrete optimum move away from the continuous one by O(delta^N).
    guess : array_like, optional
        Initial decision vector; defaults to `default_guess`.
    """
    W = weight_fn(NATURAL_W[grid.family] if W is None else W)
    check_pairing(grid, W, force=force)
    if not allow_negative_weights and np.any(grid.weights <= 0.0):
        raise NegativeWeights(
            f"{grid.family.value} grid with N={grid.N} has non-positive quadrature weights")
    D = diff_matrix(grid, W)
    n1 = grid.N + 1
    lay = Layout(p.nx, p.nu, n1, p.horizon.free_t0, p.horizon.free_tf)
    delta = consistency_tolerance(max(grid.N, 2), p.mx)
    band = delta if relax else 0.0

    m_def = p.nx * n1
    cl = np.concatenate([np.full(m_def, -band), p.e_bounds[0] - band, np.repeat(p.h_bounds[0], n1)])
    cu = np.concatenate([np.full(m_def, band), p.e_bounds[1] + band, np.repeat(p.h_bounds[1], n1)])
    xl = np.concatenate([np.repeat(p.x_box[0], n1), np.repeat(p.u_box[0], n1)])
    xu = np.concatenate([np.repeat(p.x_box[1], n1), np.repeat(p.u_box[1], n1)])
    t0b, tfb = _free_time_bounds(p)
    if t0b:
        xl, xu = np.append(xl, t0b[0]), np.append(xu, t0b[1])
    if tfb:
        xl, xu = np.append(xl, tfb[0]), np.append(xu, tfb[1])

    # metric for picking among non-unique multipliers: the discrete L2 norm
    # of the costate estimates they map to
    tau = grid.nodes
    s_nom = np.broadcast_to(domain.dynamics_scale(p.horizon, tau), tau.shape)
    aw = np.abs(grid.weights) + 1e-300
    node_metric = aw * np.abs(s_nom)
    mult_metric = np.concatenate([np.tile(aw, p.nx), np.ones(p.ne), np.tile(node_metric, p.nh)])
    bound_metric = np.concatenate([np.tile(node_metric, p.nx + p.nu),
                                   np.ones(int(lay.free_t0) + int(lay.free_tf))])

    x0 = default_guess(p, grid, lay) if guess is None else np.asarray(guess, float)
    if x0.size != lay.nvar:
        raise ValueError(f"guess has {x0.size} entries, layout needs {lay.nvar}")
    nlp = NlpProblem(
        nvar=lay.nvar, objective=None, cl=cl, cu=cu, xl=xl, xu=xu, x0=np.clip(x0, xl, xu),
        mult_metric=mult_metric, bound_metric=bound_metric,
        problem=p, grid=grid, W=W, D=D, layout=lay, delta_n=delta, band=band,
        quad_w=np.array(grid.weights),
    )
    nlp.objective = lambda z: _objective(nlp, z)
    nlp.gradient = lambda z: _objective_grad(nlp, z)
    nlp.constraints = lambda z: _constraints(nlp, z)
    nlp.jacobian = lambda z: _constraints_jac(nlp, z)
    return nlp


@dataclass(eq=False)
class Trajectory:
    """Nodal solution on one grid; dual fields are filled by costate estimation."""

    grid: Grid
    states: np.ndarray
    controls: np.ndarray
    t0: float
    tf: Optional[float]
    cost: float
    W: object = None
    horizon: Optional[domain.HorizonSpec] = None
    costates: Optional[np.ndarray] = None
    path_mults: Optional[np.ndarray] = None
    endpoint_mults: Optional[np.ndarray] = None
    state_box_mults: Optional[np.ndarray] = None
    control_box_mults: Optional[np.ndarray] = None
    problem_id: str = ""
    meta: dict = field(default_factory=dict)

    @property
    def N(self):
        return self.grid.N

    @property
    def times(self):
        spec = self.horizon or domain.HorizonSpec(t0=self.t0, tf=self.tf)
        return domain.to_physical(spec, self.grid.nodes, self.t0, self.tf)

    def _tau(self, t):
        spec = self.horizon or domain.HorizonSpec(t0=self.t0, tf=self.tf)
        if spec.infinite:
            return domain.bilinear_inverse(self.t0, t)
        return domain.affine_inverse(self.t0, self.tf, t)

    def state_at(self, t):
        """States at physical times `t` from the weighted interpolant."""
        return interpolate(self.grid, self.states, self.W, self._tau(t))

    def control_at(self, t):
        """Controls at physical times `t`; used for display and propagation only."""
        return interpolate(self.grid, self.controls, self.W, self._tau(t))


def extract_trajectory(nlp: NlpProblem, sol: NlpSolution) -> Trajectory:
    if not sol.converged:
        raise NotConverged(f"NLP status is {sol.status.value}")
    return trajectory_from_vector(nlp, sol.x, cost=sol.objective, status=sol.status.value)


def trajectory_from_vector(nlp: NlpProblem, z, cost=None, **meta) -> Trajectory:
    """Unflatten a decision vector without any status check."""
    p = nlp.problem
    X, U, t0, tf = nlp.layout.unpack(z, p.horizon.t0, p.horizon.tf)
    return Trajectory(
        grid=nlp.grid, states=X.copy(), controls=U.copy(),
        t0=float(t0), tf=None if tf is None else float(tf),
        cost=float(nlp.objective(z) if cost is None else cost),
        W=nlp.W, horizon=p.horizon, problem_id=p.name, meta=dict(meta),
    )


def flatten(nlp: NlpProblem, traj: Trajectory):
    """Inverse of extract_trajectory on the primal part."""
    return nlp.layout.pack(traj.states, traj.controls, traj.t0, traj.tf)

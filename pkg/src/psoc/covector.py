"""
Costate estimates from NLP multipliers, and the discrete dual residuals.

The defect rows are written as D x - s f, so the NLP multiplier of the
defect of state i at node j is -w_j * lambda_i(t_j) at a KKT point. The map
back is diagonal:

    lambda_j = DEFECT_SIGN * y_j / w_j

Path and box multipliers are divided by s_j * w_j. Residuals are reported in
computational time tau, where the adjoint equation reads
D lambda + s dH/dx = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import domain
from .errors import MissingDuals, NegativeWeights
from .interp import DiffMatrix, diff_matrix
from .legendre import Family, Grid
from .nlp import NlpSolution
from .ocp import OcpProblem, fd_jacobian, hamiltonian, split_jacobian
from .transcribe import NlpProblem, Trajectory, extract_trajectory

# sign linking defect multipliers to costates; the only place it lives
DEFECT_SIGN = -1.0


@dataclass(frozen=True, eq=False)
class CovectorMap:
    """Diagonal map P = diag(1/w_j) from scaled multipliers to costates."""

    diag: np.ndarray
    family: Family
    dual_weight: object = None

    @classmethod
    def for_grid(cls, grid: Grid, W=None):
        w = np.asarray(grid.weights, dtype=float)
        if np.any(w <= 0.0):
            raise NegativeWeights("costate mapping needs positive quadrature weights")
        d = 1.0 / w
        d.flags.writeable = False
        return cls(d, grid.family, W)

    @property
    def matrix(self):
        return np.diag(self.diag)

    def inverse(self):
        return np.diag(1.0 / self.diag)

    def apply(self, mults):
        mults = np.asarray(mults, dtype=float)
        if mults.shape[0] != self.diag.size:
            raise ValueError(f"expected {self.diag.size} rows, got {mults.shape[0]}")
        return self.diag[:, None] * mults if mults.ndim == 2 else self.diag * mults


def harmonize_sign(defect_mults):
    """Turn raw defect multipliers into the scaled costates lambda_j * w_j."""
    return DEFECT_SIGN * np.asarray(defect_mults, dtype=float)


def map_multipliers(defect_mults, grid: Grid):
    """lambda_j = lambda~_j / w_j for (N+1,) or (N+1, nx) scaled multipliers."""
    return CovectorMap.for_grid(grid).apply(defect_mults)


def attach_duals(nlp: NlpProblem, sol: NlpSolution, traj: Trajectory = None) -> Trajectory:
    """Return a copy of the trajectory with costates and multipliers filled in."""
    if traj is None:
        traj = extract_trajectory(nlp, sol)
    p, grid = nlp.problem, nlp.grid
    n1 = grid.N + 1
    y = np.asarray(sol.mults, dtype=float)
    z = np.asarray(sol.bound_mults, dtype=float)
    nd = p.nx * n1
    defect = y[:nd].reshape(p.nx, n1).T
    lam = map_multipliers(harmonize_sign(defect), grid)
    _, s, _, _ = nlp.times(sol.x)
    sw = s * grid.weights
    nu = y[nd:nd + p.ne].copy()
    mu = (y[nd + p.ne:].reshape(p.nh, n1).T / sw[:, None]) if p.nh else np.zeros((n1, 0))
    zx = z[:nd].reshape(p.nx, n1).T / sw[:, None]
    zu = z[nd:nd + p.nu * n1].reshape(p.nu, n1).T / sw[:, None]
    return replace(traj, costates=lam, endpoint_mults=nu, path_mults=mu,
                   state_box_mults=zx, control_box_mults=zu)


estimate_costates = attach_duals


@dataclass(frozen=True)
class DualResiduals:
    adjoint_defect: float
    stationarity: float
    transversality0: float
    transversality_f: float

    def max(self):
        return max(self.adjoint_defect, self.stationarity, self.transversality0, self.transversality_f)

    def as_dict(self):
        return {
            "adjointDefect": self.adjoint_defect,
            "stationarity": self.stationarity,
            "transversality0": self.transversality0,
            "transversalityF": self.transversality_f,
        }


def _hbar_node(p, lam, mu, mux, muu, x, u, t):
    """H + mu.h + box multipliers, as a function of (x, u, t)."""
    def fn(x, u, t):
        v = hamiltonian(p, lam, x, u, t)
        if p.nh:
            v += float(mu @ p.h(x, u, t))
        return np.atleast_1d(v + mux @ x + muu @ u)
    return fn


def dual_residuals(p: OcpProblem, traj: Trajectory, grid: Grid = None, Dstar=None) -> DualResiduals:
    """Max-norm residuals of the discrete dual system at a trajectory.

    adjointDefect   max |sum_j D*_ij lambda_j + s_i dHbar/dx(i)|
    stationarity    max |s_i dHbar/du(i)|
    transversality0 max |lambda_0 + dEbar/dx0|
    transversalityF max |lambda_N - dEbar/dxf|

    Hbar includes path and box multipliers when present.
    """
    grid = traj.grid if grid is None else grid
    if traj.costates is None or (p.ne and traj.endpoint_mults is None):
        raise MissingDuals("trajectory has no costates or endpoint multipliers")
    if Dstar is None:
        Dstar = diff_matrix(grid, traj.W)
    Dm = np.asarray(Dstar.entries if isinstance(Dstar, DiffMatrix) else Dstar, dtype=float)
    lam = np.asarray(traj.costates, float)
    n1 = grid.N + 1
    mu = traj.path_mults if traj.path_mults is not None else np.zeros((n1, p.nh))
    mux = traj.state_box_mults if traj.state_box_mults is not None else np.zeros((n1, p.nx))
    muu = traj.control_box_mults if traj.control_box_mults is not None else np.zeros((n1, p.nu))
    horizon = traj.horizon or domain.HorizonSpec(t0=traj.t0, tf=traj.tf)
    t = domain.to_physical(horizon, grid.nodes, traj.t0, traj.tf)
    s = np.broadcast_to(domain.dynamics_scale(horizon, grid.nodes, traj.t0, traj.tf), (n1,))

    Hx = np.zeros((n1, p.nx))
    Hu = np.zeros((n1, p.nu))
    for j in range(n1):
        fn = _hbar_node(p, lam[j], mu[j], mux[j], muu[j], traj.states[j], traj.controls[j], t[j])
        hx, hu, _ = split_jacobian(fn, traj.states[j], traj.controls[j], t[j])
        Hx[j], Hu[j] = hx[0], hu[0]
    adj = Dm @ lam + s[:, None] * Hx
    stat = s[:, None] * Hu

    nu = np.asarray(traj.endpoint_mults if traj.endpoint_mults is not None else np.zeros(0), float)
    x0, xf = traj.states[0], traj.states[-1]
    tf = traj.tf

    def ebar_vec(v):
        a, b = v[:p.nx], v[p.nx:]
        out = p.E(a, b, traj.t0, tf)
        if p.ne:
            out += float(nu @ p.e(a, b, traj.t0, tf))
        return np.atleast_1d(out)

    gE = fd_jacobian(ebar_vec, np.concatenate([x0, xf]), central=True)[0]
    tr0 = lam[0] + gE[:p.nx]
    trf = lam[-1] - gE[p.nx:]
    m = lambda a: float(np.max(np.abs(a), initial=0.0))
    return DualResiduals(m(adj), m(stat), m(tr0), m(trf))


def hamiltonian_profile(p: OcpProblem, traj: Trajectory):
    """H(lambda_j, x_j, u_j, t_j) at every node."""
    if traj.costates is None:
        raise MissingDuals("trajectory has no costates")
    t = traj.times
    return np.array([hamiltonian(p, traj.costates[j], traj.states[j], traj.controls[j], t[j])
                     for j in range(traj.grid.N + 1)])

"""
The continuous optimal control problem and its dual quantities.

    minimize   E(x0, xf, t0, tf) + int F(x, u, t) dt
    subject to x' = f(x, u, t)
               eL <= e(x0, xf, t0, tf) <= eU
               hL <= h(x, u, t) <= hU
               x in [xL, xU], u in [uL, uU]

Callbacks take and return 1-D numpy arrays (scalars for E and F) and receive
time in physical units.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domain import HorizonSpec
from .errors import DimensionMismatch, EvaluationError

_SQRT_EPS = np.sqrt(np.finfo(float).eps)
_CBRT_EPS = np.finfo(float).eps ** (1.0 / 3.0)


def _arr(v):
    return np.asarray(v, dtype=float).reshape(-1)


def _bounds(pair, n, what):
    if pair is None:
        lo, hi = np.full(n, -np.inf), np.full(n, np.inf)
    else:
        lo, hi = (np.array(v, dtype=float).reshape(-1) for v in pair)
    if lo.shape != (n,) or hi.shape != (n,):
        raise DimensionMismatch(f"{what} bounds need {n} entries")
    if np.any(lo > hi):
        raise ValueError(f"{what}: lower bound above upper bound")
    lo.flags.writeable = hi.flags.writeable = False
    return lo, hi


@dataclass(frozen=True, eq=False)
class OcpProblem:
    nx: int
    nu: int
    dynamics: Callable
    endpoint_cost: Optional[Callable] = None
    running_cost: Optional[Callable] = None
    endpoint: Optional[Callable] = None
    e_bounds: Optional[tuple] = None
    path: Optional[Callable] = None
    h_bounds: Optional[tuple] = None
    x_box: Optional[tuple] = None
    u_box: Optional[tuple] = None
    horizon: HorizonSpec = field(default_factory=HorizonSpec)
    mx: int = 2
    name: str = ""
    # free-horizon search intervals; defaults follow transcribe's rules
    t0_bounds: Optional[tuple] = None
    tf_bounds: Optional[tuple] = None
    # (x at t0, x at tf) used for the default straight-line guess
    x_guess: Optional[tuple] = None
    # optional analytic derivatives: (x, u, t) -> (df/dx, df/du) and (dF/dx, dF/du)
    dynamics_jac: Optional[Callable] = None
    running_cost_grad: Optional[Callable] = None

    def __post_init__(self):
        if self.nx < 1 or self.nu < 0:
            raise DimensionMismatch("need nx >= 1 and nu >= 0")
        ne = 0 if self.e_bounds is None else len(np.atleast_1d(self.e_bounds[0]))
        nh = 0 if self.h_bounds is None else len(np.atleast_1d(self.h_bounds[0]))
        if (self.endpoint is None) != (ne == 0):
            raise DimensionMismatch("endpoint function and e_bounds go together")
        if (self.path is None) != (nh == 0):
            raise DimensionMismatch("path function and h_bounds go together")
        object.__setattr__(self, "e_bounds", _bounds(self.e_bounds, ne, "endpoint"))
        object.__setattr__(self, "h_bounds", _bounds(self.h_bounds, nh, "path"))
        object.__setattr__(self, "x_box", _bounds(self.x_box, self.nx, "state box"))
        object.__setattr__(self, "u_box", _bounds(self.u_box, self.nu, "control box"))
        if not isinstance(self.horizon, HorizonSpec):
            object.__setattr__(self, "horizon", HorizonSpec(**dict(self.horizon)))

    @property
    def ne(self):
        return self.e_bounds[0].size

    @property
    def nh(self):
        return self.h_bounds[0].size

    # -- callback wrappers -------------------------------------------------
    # inputs are coerced to float arrays so callbacks can rely on numpy semantics
    def f(self, x, u, t):
        x, u = _arr(x), _arr(u)
        out = np.asarray(self.dynamics(x, u, t), dtype=float).reshape(-1)
        if out.size != self.nx:
            raise DimensionMismatch(f"dynamics returned {out.size} values, expected {self.nx}")
        return _finite(out, "dynamics")

    def F(self, x, u, t):
        if self.running_cost is None:
            return 0.0
        return float(_finite(np.asarray(self.running_cost(_arr(x), _arr(u), t), float), "running cost"))

    def E(self, x0, xf, t0, tf):
        if self.endpoint_cost is None:
            return 0.0
        return float(_finite(np.asarray(self.endpoint_cost(_arr(x0), _arr(xf), t0, tf), float),
                             "endpoint cost"))

    def e(self, x0, xf, t0, tf):
        if self.ne == 0:
            return np.zeros(0)
        out = np.asarray(self.endpoint(_arr(x0), _arr(xf), t0, tf), dtype=float).reshape(-1)
        if out.size != self.ne:
            raise DimensionMismatch(f"endpoint function returned {out.size} values, expected {self.ne}")
        return _finite(out, "endpoint function")

    def h(self, x, u, t):
        if self.nh == 0:
            return np.zeros(0)
        out = np.asarray(self.path(_arr(x), _arr(u), t), dtype=float).reshape(-1)
        if out.size != self.nh:
            raise DimensionMismatch(f"path function returned {out.size} values, expected {self.nh}")
        return _finite(out, "path function")

    def f_jac(self, x, u, t):
        """(df/dx, df/du, df/dt) at one point."""
        if self.dynamics_jac is not None:
            fx, fu = self.dynamics_jac(x, u, t)
            fx = np.asarray(fx, float).reshape(self.nx, self.nx)
            fu = np.asarray(fu, float).reshape(self.nx, self.nu)
            ft = fd_jacobian(lambda s: self.f(x, u, s[0]), np.array([t], float), central=True)[:, 0]
            return fx, fu, ft
        return split_jacobian(self.f, x, u, t)

    def F_grad(self, x, u, t, with_t=True):
        """(dF/dx, dF/du, dF/dt) at one point; dF/dt is 0.0 unless `with_t`."""
        if self.running_cost_grad is None:
            Fx, Fu, Ft = split_jacobian(lambda a, b, c: np.atleast_1d(self.F(a, b, c)), x, u, t)
            return Fx[0], Fu[0], float(Ft[0])
        Fx, Fu = self.running_cost_grad(_arr(x), _arr(u), t)
        Fx = np.asarray(Fx, float).reshape(self.nx)
        Fu = np.asarray(Fu, float).reshape(self.nu)
        Ft = 0.0
        if with_t:
            Ft = float(fd_jacobian(lambda s: np.atleast_1d(self.F(x, u, s[0])),
                                   np.array([t], float), central=True)[0, 0])
        return Fx, Fu, Ft


@dataclass(frozen=True)
class DualPoint:
    lam: np.ndarray
    mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nu: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for name in ("lam", "mu", "nu"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            _finite(v, name)
            object.__setattr__(self, name, v)


def _finite(a, what):
    if not np.all(np.isfinite(a)):
        raise EvaluationError(f"{what} returned a non-finite value")
    return a


def fd_jacobian(fun, z, f0=None, central=False):
    """Finite-difference Jacobian.

    Forward differences use steps sqrt(eps) * (1 + |z|); central ones use
    eps**(1/3) * (1 + |z|).
    """
    z = np.asarray(z, dtype=float)
    f0 = np.atleast_1d(np.asarray(fun(z) if f0 is None else f0, dtype=float))
    J = np.empty((f0.size, z.size))
    for k in range(z.size):
        zk = z.copy()
        if central:
            zm = z.copy()
            zk[k] += _CBRT_EPS * (1.0 + abs(z[k]))
            zm[k] -= _CBRT_EPS * (1.0 + abs(z[k]))
            J[:, k] = (np.atleast_1d(np.asarray(fun(zk), dtype=float))
                       - np.atleast_1d(np.asarray(fun(zm), dtype=float))) / (zk[k] - zm[k])
            continue
        zk[k] += _SQRT_EPS * (1.0 + abs(z[k]))
        h = zk[k] - z[k]  # the step actually taken
        J[:, k] = (np.atleast_1d(np.asarray(fun(zk), dtype=float)) - f0) / h
    return J


def split_jacobian(func, x, u, t):
    """Jacobian of func(x, u, t) split into (d/dx, d/du, d/dt)."""
    x = np.asarray(x, float)
    u = np.asarray(u, float)
    nx, nu = x.size, u.size
    z = np.concatenate([x, u, [t]])
    J = fd_jacobian(lambda z: func(z[:nx], z[nx:nx + nu], z[-1]), z, central=True)
    return J[:, :nx], J[:, nx:nx + nu], J[:, -1]


def _check_dims(p, lam=None, x=None, u=None):
    for v, n, what in ((lam, p.nx, "costate"), (x, p.nx, "state"), (u, p.nu, "control")):
        if v is not None and np.asarray(v).size != n:
            raise DimensionMismatch(f"{what} has {np.asarray(v).size} entries, expected {n}")


def hamiltonian(p: OcpProblem, lam, x, u, t):
    """H = F(x, u, t) + lam . f(x, u, t)."""
    _check_dims(p, lam, x, u)
    lam, x, u = (np.asarray(v, float).reshape(-1) for v in (lam, x, u))
    return p.F(x, u, t) + float(lam @ p.f(x, u, t))


def hbar(p: OcpProblem, mu, lam, x, u, t):
    """Lagrangian of the Hamiltonian, H + mu . h(x, u, t)."""
    mu = np.asarray(mu, float).reshape(-1)
    if mu.size != p.nh:
        raise DimensionMismatch(f"path multiplier has {mu.size} entries, expected {p.nh}")
    H = hamiltonian(p, lam, x, u, t)
    if p.nh == 0:
        return H
    return H + float(mu @ p.h(np.asarray(x, float), np.asarray(u, float), t))


def ebar(p: OcpProblem, nu, x0, xf, t0, tf):
    """Endpoint Lagrangian, E + nu . e(x0, xf, t0, tf)."""
    nu = np.asarray(nu, float).reshape(-1)
    if nu.size != p.ne:
        raise DimensionMismatch(f"endpoint multiplier has {nu.size} entries, expected {p.ne}")
    _check_dims(p, x=x0)
    _check_dims(p, x=xf)
    x0, xf = np.asarray(x0, float), np.asarray(xf, float)
    out = p.E(x0, xf, t0, tf)
    if p.ne:
        out += float(nu @ p.e(x0, xf, t0, tf))
    return out


def complementarity_residual(values, lo, hi, mult, tol=0.0):
    """Largest violation of the multiplier sign pattern for bounded values.

    A multiplier may be <= 0 only where its value sits at the lower bound,
    >= 0 only at the upper bound, must vanish strictly inside, and is free
    for an equality (lo == hi). `tol` is the distance within which a value
    counts as being at a bound; the violation of an entry is its multiplier
    magnitude.
    """
    values, lo, hi, mult = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (values, lo, hi, mult))
    at_lo = values <= lo + tol
    at_hi = values >= hi - tol
    equality = lo == hi
    viol = np.where(mult > 0, np.where(at_hi, 0.0, mult),
                    np.where(mult < 0, np.where(at_lo, 0.0, -mult), 0.0))
    viol = np.where(equality, 0.0, viol)
    viol = np.where(np.abs(viol) <= tol, 0.0, viol)
    return float(viol.max()) if viol.size else 0.0

"""
Problem spec files and the built-in problem registry.

A spec file is JSON. Dynamics, costs and constraints are named built-in
components with parameter maps; infinite bounds are written as null.
Example::

    {
      "id": "e1",
      "nx": 1, "nu": 1,
      "dynamics": {"name": "linear", "params": {"A": [[0]], "B": [[1]]}},
      "endpoint_cost": {"name": "linear", "params": {"xf": [1]}},
      "endpoint": {"name": "boundary", "params": {"x0": [0], "xf": [null]}},
      "u_box": [[-1], [10]],
      "horizon": {"kind": "FiniteFixed", "t0": 0, "tf": 2}
    }
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .domain import HorizonSpec
from .ocp import OcpProblem

# ---------------------------------------------------------------------------
# components


def _mat(v, rows, cols, what):
    if v is None:
        return np.zeros((rows, cols))
    a = np.array(v, dtype=float).reshape(rows, cols) if np.size(v) == rows * cols else None
    if a is None:
        raise ValueError(f"{what} must have shape ({rows}, {cols})")
    return a


def _vec(v, n, what, default=0.0):
    if v is None:
        return np.full(n, default)
    a = np.array([np.nan if e is None else e for e in np.atleast_1d(v)], dtype=float)
    if a.size != n:
        raise ValueError(f"{what} must have {n} entries")
    return a


def _linear_dynamics(nx, nu, params):
    A = _mat(params.get("A"), nx, nx, "A")
    B = _mat(params.get("B"), nx, nu, "B")
    c = _vec(params.get("c"), nx, "c")
    return (lambda x, u, t: A @ x + B @ u + c), (lambda x, u, t: (A, B))


def _constant_dynamics(nx, nu, params):
    c = _vec(params.get("c"), nx, "c", default=1.0)
    zx, zu = np.zeros((nx, nx)), np.zeros((nx, nu))
    return (lambda x, u, t: c.copy()), (lambda x, u, t: (zx, zu))


DYNAMICS = {"linear": _linear_dynamics, "constant": _constant_dynamics}


def _quadratic_cost(nx, nu, params):
    """F = x'Qx/2 + u'Ru/2 + x'Su + q.x + r.u."""
    Q = _mat(params.get("Q"), nx, nx, "Q")
    R = _mat(params.get("R"), nu, nu, "R")
    S = _mat(params.get("S"), nx, nu, "S")
    q = _vec(params.get("q"), nx, "q")
    r = _vec(params.get("r"), nu, "r")
    Qs, Rs = 0.5 * (Q + Q.T), 0.5 * (R + R.T)
    return ((lambda x, u, t: 0.5 * x @ Q @ x + 0.5 * u @ R @ u + x @ S @ u + q @ x + r @ u),
            (lambda x, u, t: (Qs @ x + S @ u + q, Rs @ u + S.T @ x + r)))


RUNNING_COSTS = {"quadratic": _quadratic_cost}


def _linear_endpoint_cost(nx, nu, params):
    """E = c0.x(t0) + cf.x(tf) + kt0*t0 + ktf*tf."""
    c0 = _vec(params.get("x0"), nx, "x0")
    cf = _vec(params.get("xf"), nx, "xf")
    k0, kf = float(params.get("t0", 0.0)), float(params.get("tf", 0.0))

    def E(x0, xf, t0, tf):
        out = c0 @ x0 + cf @ xf + k0 * t0
        if kf:
            out += kf * tf
        return out
    return E


ENDPOINT_COSTS = {"linear": _linear_endpoint_cost}


def _boundary(nx, nu, params):
    """Fix selected components of x(t0) and x(tf); null entries stay free."""
    v0 = _vec(params.get("x0"), nx, "x0", default=np.nan)
    vf = _vec(params.get("xf"), nx, "xf", default=np.nan)
    i0, i_f = np.flatnonzero(~np.isnan(v0)), np.flatnonzero(~np.isnan(vf))
    vals = np.concatenate([v0[i0], vf[i_f]])

    def e(x0, xf, t0, tf):
        return np.concatenate([x0[i0], xf[i_f]])
    return e, (vals, vals.copy())


def _linear_path(nx, nu, params):
    """h = C x + D u, with bounds lo <= h <= hi."""
    lo = _vec(params.get("lo"), len(params.get("lo", [])), "lo", default=-np.inf)
    lo = np.where(np.isnan(lo), -np.inf, lo)
    nh = lo.size
    hi = _vec(params.get("hi"), nh, "hi", default=np.inf)
    hi = np.where(np.isnan(hi), np.inf, hi)
    C = _mat(params.get("C"), nh, nx, "C")
    Dm = _mat(params.get("D"), nh, nu, "D")
    return (lambda x, u, t: C @ x + Dm @ u), (lo, hi)


ENDPOINTS = {"boundary": _boundary}
PATHS = {"linear": _linear_path}


# ---------------------------------------------------------------------------
# spec model


@dataclass
class Component:
    name: str
    params: dict = field(default_factory=dict)


def _box(pair, n):
    if pair is None:
        return None
    lo, hi = pair
    lo = [-np.inf if v is None else float(v) for v in lo]
    hi = [np.inf if v is None else float(v) for v in hi]
    if len(lo) != n or len(hi) != n:
        raise ValueError(f"box bounds need {n} entries")
    return np.array(lo), np.array(hi)


def _jsonable_box(pair):
    if pair is None:
        return None
    return [[None if not np.isfinite(v) else float(v) for v in side] for side in pair]


@dataclass
class ProblemSpec:
    id: str
    nx: int
    nu: int
    dynamics: Component
    horizon: dict = field(default_factory=lambda: {"kind": "FiniteFixed", "t0": 0.0, "tf": 1.0})
    running_cost: Optional[Component] = None
    endpoint_cost: Optional[Component] = None
    endpoint: Optional[Component] = None
    path: Optional[Component] = None
    x_box: Optional[list] = None
    u_box: Optional[list] = None
    mx: int = 2
    x_guess: Optional[list] = None
    t0_bounds: Optional[list] = None
    tf_bounds: Optional[list] = None

    def __post_init__(self):
        for name in ("dynamics", "running_cost", "endpoint_cost", "endpoint", "path"):
            v = getattr(self, name)
            if isinstance(v, dict):
                setattr(self, name, Component(**v))
        self.x_box = _jsonable_box(_box(self.x_box, self.nx))
        self.u_box = _jsonable_box(_box(self.u_box, self.nu))
        self.horizon = _horizon_dict(HorizonSpec(**self.horizon))

    # -- serialization -----------------------------------------------------
    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown problem spec fields: {sorted(extra)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(fh.read())

    # -- model -------------------------------------------------------------
    def build(self) -> OcpProblem:
        nx, nu = self.nx, self.nu
        f, fjac = _lookup(DYNAMICS, self.dynamics, "dynamics")(nx, nu, self.dynamics.params)
        kw = {}
        if self.running_cost:
            kw["running_cost"], kw["running_cost_grad"] = _lookup(
                RUNNING_COSTS, self.running_cost, "running cost")(nx, nu, self.running_cost.params)
        if self.endpoint_cost:
            kw["endpoint_cost"] = _lookup(ENDPOINT_COSTS, self.endpoint_cost, "endpoint cost")(
                nx, nu, self.endpoint_cost.params)
        if self.endpoint:
            kw["endpoint"], kw["e_bounds"] = _lookup(ENDPOINTS, self.endpoint, "endpoint")(
                nx, nu, self.endpoint.params)
        if self.path:
            kw["path"], kw["h_bounds"] = _lookup(PATHS, self.path, "path")(nx, nu, self.path.params)
        return OcpProblem(
            nx=nx, nu=nu, dynamics=f, dynamics_jac=fjac,
            x_box=_box(self.x_box, nx), u_box=_box(self.u_box, nu),
            horizon=HorizonSpec(**self.horizon), mx=self.mx, name=self.id,
            x_guess=None if self.x_guess is None else tuple(np.array(v, float) for v in self.x_guess),
            t0_bounds=None if self.t0_bounds is None else tuple(self.t0_bounds),
            tf_bounds=None if self.tf_bounds is None else tuple(self.tf_bounds),
            **kw,
        )


def _horizon_dict(h: HorizonSpec):
    return {"kind": h.kind.value, "t0": float(h.t0), "tf": None if h.tf is None else float(h.tf)}


def _lookup(table, comp, what):
    try:
        return table[comp.name]
    except KeyError:
        raise ValueError(f"unknown {what} component {comp.name!r}; known: {sorted(table)}") from None


# ---------------------------------------------------------------------------
# registry

_REGISTRY = {
    # min x(2), x' = u, u >= -1, x(0) = 0. The upper control bound is a
    # computational cap that keeps negative-weight transcriptions bounded.
    "e1": dict(
        nx=1, nu=1,
        dynamics={"name": "linear", "params": {"A": [[0]], "B": [[1]]}},
        endpoint_cost={"name": "linear", "params": {"xf": [1]}},
        endpoint={"name": "boundary", "params": {"x0": [0], "xf": [None]}},
        u_box=[[-1], [10]],
        horizon={"kind": "FiniteFixed", "t0": 0, "tf": 2},
        x_guess=[[0], [0]],
    ),
    # min int x2 u, x1' = x2, x2' = -x2 + u, x2 >= 0, 0 <= u <= 2
    "e2": dict(
        nx=2, nu=1,
        dynamics={"name": "linear", "params": {"A": [[0, 1], [0, -1]], "B": [[0], [1]]}},
        running_cost={"name": "quadratic", "params": {"S": [[0], [1]]}},
        endpoint={"name": "boundary", "params": {"x0": [0, 1], "xf": [1, 1]}},
        x_box=[[None, 0], [None, None]],
        u_box=[[0], [2]],
        horizon={"kind": "FiniteFixed", "t0": 0, "tf": 1},
        x_guess=[[0, 1], [1, 1]],
    ),
    # rest-to-rest over unit distance in minimum time, |u| <= 1
    "doubleint-mintime": dict(
        nx=2, nu=1,
        dynamics={"name": "linear", "params": {"A": [[0, 1], [0, 0]], "B": [[0], [1]]}},
        endpoint_cost={"name": "linear", "params": {"tf": 1}},
        endpoint={"name": "boundary", "params": {"x0": [0, 0], "xf": [1, 0]}},
        u_box=[[-1], [1]],
        horizon={"kind": "FiniteFreeFinal", "t0": 0, "tf": 1.5},
        tf_bounds=[0.1, 10.0],
        x_guess=[[0, 0], [1, 0]],
    ),
    # minimum control energy for the harmonic oscillator over [0, pi]
    "oscillator-energy": dict(
        nx=2, nu=1,
        dynamics={"name": "linear", "params": {"A": [[0, 1], [-1, 0]], "B": [[0], [1]]}},
        running_cost={"name": "quadratic", "params": {"R": [[1]]}},
        endpoint={"name": "boundary", "params": {"x0": [1, 0], "xf": [0, 0]}},
        horizon={"kind": "FiniteFixed", "t0": 0, "tf": float(np.pi)},
        x_guess=[[1, 0], [0, 0]],
    ),
    # x' = u, min int u^2/2, x(0) = 0, x(1) = 1
    "lq-toy": dict(
        nx=1, nu=1,
        dynamics={"name": "linear", "params": {"A": [[0]], "B": [[1]]}},
        running_cost={"name": "quadratic", "params": {"R": [[1]]}},
        endpoint={"name": "boundary", "params": {"x0": [0], "xf": [1]}},
        horizon={"kind": "FiniteFixed", "t0": 0, "tf": 1},
        x_guess=[[0], [1]],
    ),
    # x' = -x + u, min int (x^2 + u^2)/2 over [0, inf), x(0) = 1
    "lqr-infinite": dict(
        nx=1, nu=1,
        dynamics={"name": "linear", "params": {"A": [[-1]], "B": [[1]]}},
        running_cost={"name": "quadratic", "params": {"Q": [[1]], "R": [[1]]}},
        endpoint={"name": "boundary", "params": {"x0": [1], "xf": [None]}},
        horizon={"kind": "Infinite", "t0": 0},
        x_guess=[[1], [0]],
    ),
    # x' = 1, x(0) = 0, min x(1); nothing to optimize
    "constant-toy": dict(
        nx=1, nu=0,
        dynamics={"name": "constant", "params": {"c": [1]}},
        endpoint_cost={"name": "linear", "params": {"xf": [1]}},
        endpoint={"name": "boundary", "params": {"x0": [0], "xf": [None]}},
        horizon={"kind": "FiniteFixed", "t0": 0, "tf": 1},
        x_guess=[[0], [1]],
    ),
}


def problem_ids():
    return sorted(_REGISTRY)


def get_spec(problem_id) -> ProblemSpec:
    if problem_id not in _REGISTRY:
        raise KeyError(f"unknown problem {problem_id!r}; known: {', '.join(problem_ids())}")
    return ProblemSpec(id=problem_id, **json.loads(json.dumps(_REGISTRY[problem_id])))


def get_problem(problem_id) -> OcpProblem:
    return get_spec(problem_id).build()


def resolve(ref) -> ProblemSpec:
    """A registry id or a path to a JSON spec file."""
    if ref in _REGISTRY:
        return get_spec(ref)
    return ProblemSpec.load(ref)

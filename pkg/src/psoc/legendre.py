"""
Legendre polynomials and the Gaussian node families used for collocation.

All grids live on [-1, 1] with nodes in ascending order. A grid of order N
carries N+1 nodes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergence

MAX_N = 256
_NEWTON_MAXITER = 100
_ROOT_TOL = 1e-14


class Family(str, enum.Enum):
    LGL = "lgl"
    LGR = "lgr"
    LG = "lg"
    CHEBYSHEV_GL = "chebgl"
    UNIFORM = "uniform"
    CUSTOM = "custom"


class WeightKind(str, enum.Enum):
    """Interpolation weight functions W(t) of the weighted Lagrange interpolant."""

    ONE = "one"
    ONE_MINUS_T = "1-t"
    ONE_MINUS_T2 = "1-t2"


@dataclass(frozen=True, eq=False)
class Grid:
    """Collocation nodes with their quadrature weights.

    `weights` are the W=1 integration weights of the nodal Lagrange basis,
    regardless of `paired_w`; `paired_w` records which interpolation weight
    function the grid is meant to be used with.
    """

    nodes: np.ndarray
    weights: np.ndarray
    family: Family
    paired_w: WeightKind = WeightKind.ONE
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        weights = np.array(self.weights, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a grid needs at least two nodes")
        if weights.shape != nodes.shape:
            raise ValueError("nodes and weights must have the same length")
        if np.any(np.diff(nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if nodes[0] < -1.0 or nodes[-1] > 1.0:
            raise ValueError("nodes must lie in [-1, 1]")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(self, "paired_w", WeightKind(self.paired_w))

    @property
    def N(self) -> int:
        return self.nodes.size - 1

    def __len__(self):
        return self.nodes.size

    def __repr__(self):
        return f"Grid(family={self.family.value}, N={self.N}, W={self.paired_w.value})"


def legendre_eval(n, t):
    """Value and first derivative of the degree-n Legendre polynomial.

    Uses the three-term recurrence for L_n and the recurrence
    L'_{k+1} = L'_{k-1} + (2k+1) L_k for the derivative, so the endpoint
    values L_n(1) = 1, L'_n(1) = n(n+1)/2 come out exact.

    Parameters
    ----------
    n : int
        Degree, n >= 0.
    t : float or array_like
        Evaluation points.

    Returns
    -------
    (L, dL) with the shape of `t`.
    """
    if n < 0:
        raise ValueError("degree must be non-negative")
    t = np.asarray(t, dtype=float)
    p_prev, p = np.ones_like(t), t.copy()
    d_prev, d = np.zeros_like(t), np.ones_like(t)
    if n == 0:
        return _unwrap(p_prev), _unwrap(d_prev)
    for k in range(1, n):
        p_next = ((2 * k + 1) * t * p - k * p_prev) / (k + 1)
        d_next = d_prev + (2 * k + 1) * p
        p_prev, p = p, p_next
        d_prev, d = d, d_next
    return _unwrap(p), _unwrap(d)


def legendre_table(n, t):
    """Matrix L[i, j] = L_j(t_i) for j = 0..n."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((t.size, n + 1))
    out[:, 0] = 1.0
    if n >= 1:
        out[:, 1] = t
    for k in range(1, n):
        out[:, k + 1] = ((2 * k + 1) * t * out[:, k] - k * out[:, k - 1]) / (k + 1)
    return out


def _unwrap(a):
    return float(a) if np.ndim(a) == 0 else a


def _check_order(N):
    if int(N) != N or N < 1:
        raise ValueError(f"grid order must be an integer >= 1, got {N!r}")
    if N > MAX_N:
        raise ValueError(f"grid order {N} exceeds the supported maximum {MAX_N}")
    return int(N)


def _newton(x, func, lo=-1.0, hi=1.0, what="roots"):
    """Damped simultaneous Newton iteration for well-separated simple roots.

    `func(x)` returns (value, derivative, residual). Steps are halved while
    they would leave (lo, hi) or cross into a neighbour's bracket.
    """
    x = np.array(x, dtype=float)
    if x.size == 0:
        return x
    for _ in range(_NEWTON_MAXITER):
        val, der, _ = func(x)
        step = val / der
        # keep each iterate inside the gap between its neighbours
        left = np.concatenate(([lo], x[:-1]))
        right = np.concatenate((x[1:], [hi]))
        new = x - step
        bad = (new <= left) | (new >= right)
        damp = np.ones_like(x)
        while np.any(bad):
            damp[bad] *= 0.5
            new = x - damp * step
            bad = ((new <= left) | (new >= right)) & (damp > 1e-12)
        x = new
        if np.max(np.abs(damp * step)) <= 1e-16 * max(1.0, np.max(np.abs(x))):
            break
    else:
        _, _, res = func(x)
        if np.max(np.abs(res)) > _ROOT_TOL:
            raise NonConvergence(f"Newton iteration for {what} did not converge")
    # a couple of polishing sweeps after the steps have stalled
    for _ in range(2):
        val, der, _ = func(x)
        x = x - val / der
    _, _, res = func(x)
    if np.max(np.abs(res)) > _ROOT_TOL:
        raise NonConvergence(
            f"{what}: residual {np.max(np.abs(res)):.3e} above {_ROOT_TOL:g}")
    return x


def _lobatto_interior(N):
    def func(x):
        L, dL = legendre_eval(N, x)
        d2L = (2.0 * x * dL - N * (N + 1) * L) / (1.0 - x * x)
        # residual normalized by max|L'_N| = N(N+1)/2
        return dL, d2L, (1.0 - x * x) * dL / (0.5 * N * (N + 1))

    guess = -np.cos(np.pi * np.arange(1, N) / N)
    return _newton(guess, func, what=f"LGL nodes (N={N})")


def lgl_grid(N):
    """Legendre-Gauss-Lobatto grid: -1, +1 and the roots of L'_N."""
    N = _check_order(N)
    x = np.empty(N + 1)
    x[0], x[-1] = -1.0, 1.0
    if N > 1:
        inner = _lobatto_interior(N)
        # symmetrize: the roots come in +/- pairs
        inner = 0.5 * (inner - inner[::-1])
        x[1:-1] = inner
    L, _ = legendre_eval(N, x)
    w = 2.0 / (N * (N + 1) * L**2)
    return Grid(x, w, Family.LGL, WeightKind.ONE)


def lgr_grid(N):
    """Legendre-Gauss-Radau grid anchored at -1 (node +1 excluded).

    Nodes are -1 and the roots of (L_N + L_{N+1})/(1 + t).
    """
    N = _check_order(N)

    def func(x):
        a, da = legendre_eval(N, x)
        b, db = legendre_eval(N + 1, x)
        g, dg = a + b, da + db
        # Newton on g/(1+t) to stay away from the known root at -1
        q = g / (1.0 + x)
        dq = (dg - q) / (1.0 + x)
        return q, dq, g / ((N + 1) ** 2)

    guess = -np.cos(2.0 * np.pi * np.arange(1, N + 1) / (2 * N + 1))
    inner = _newton(guess, func, what=f"LGR nodes (N={N})")
    x = np.concatenate(([-1.0], inner))
    L, _ = legendre_eval(N, x)
    w = (1.0 - x) / ((N + 1) ** 2 * L**2)
    return Grid(x, w, Family.LGR, WeightKind.ONE)


def gauss_rule(npts):
    """Nodes and weights of the npts-point Legendre-Gauss rule."""
    n = int(npts)

    def func(x):
        L, dL = legendre_eval(n, x)
        return L, dL, L / (0.5 * n * (n + 1))

    k = np.arange(n, 0, -1)
    guess = np.cos(np.pi * (k - 0.25) / (n + 0.5))
    x = _newton(guess, func, what=f"Gauss nodes (n={n})")
    x = 0.5 * (x - x[::-1])
    _, dL = legendre_eval(n, x)
    w = 2.0 / ((1.0 - x**2) * dL**2)
    return x, w


def lg_grid(N):
    """Legendre-Gauss grid: the N+1 roots of L_{N+1}, all interior."""
    N = _check_order(N)
    x, w = gauss_rule(N + 1)
    return Grid(x, w, Family.LG, WeightKind.ONE)


def chebyshev_gl_grid(N):
    """Chebyshev-Gauss-Lobatto nodes with Clenshaw-Curtis weights."""
    N = _check_order(N)
    theta = np.pi * np.arange(N + 1) / N
    x = -np.cos(theta)
    x[0], x[-1] = -1.0, 1.0
    if N % 2 == 0:
        x[N // 2] = 0.0
    # Clenshaw-Curtis weights (Trefethen, Spectral Methods in MATLAB, clencurt)
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[ii]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
    w[ii] = 2.0 * v / N
    return Grid(x, w, Family.CHEBYSHEV_GL, WeightKind.ONE)


def uniform_grid(N):
    """Equispaced nodes -1 + 2j/N with their (closed Newton-Cotes) weights.

    Weights go negative for larger N; nothing here checks positivity.
    """
    from .interp import integrate_basis

    N = _check_order(N)
    x = -1.0 + 2.0 * np.arange(N + 1) / N
    x[-1] = 1.0
    if N % 2 == 0:
        x[N // 2] = 0.0
    return Grid(x, integrate_basis(x), Family.UNIFORM, WeightKind.ONE)


def custom_grid(nodes, paired_w=WeightKind.ONE):
    from .interp import integrate_basis

    nodes = np.asarray(nodes, dtype=float)
    return Grid(nodes, integrate_basis(nodes), Family.CUSTOM, paired_w)


_BUILDERS = {
    Family.LGL: lgl_grid,
    Family.LGR: lgr_grid,
    Family.LG: lg_grid,
    Family.CHEBYSHEV_GL: chebyshev_gl_grid,
    Family.UNIFORM: uniform_grid,
}


def make_grid(family, N):
    """Build a grid by family name ('lgl', 'lgr', 'lg', 'chebgl', 'uniform')."""
    family = Family(family)
    if family not in _BUILDERS:
        raise ValueError(f"no builder for family {family.value!r}")
    return _BUILDERS[family](N)

"""
Weighted Lagrange interpolation, differentiation and integration on a grid.

The weighted interpolant of nodal values y_j is

    y(t) = sum_j W(t)/W(t_j) * phi_j(t) * y_j

with phi_j the Lagrange basis of the grid. Everything is evaluated in
barycentric form.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import IncompatiblePairing, IndexOutOfRange, WeightVanishesAtNode, WrongFamily
from .legendre import Family, Grid, WeightKind, gauss_rule, legendre_table

__all__ = [
    "WeightKind", "WeightFn", "DiffMatrix", "ONE", "ONE_MINUS_T", "ONE_MINUS_T2",
    "weight_fn", "barycentric_weights", "lagrange_basis", "lagrange_matrix",
    "interpolate", "diff_matrix", "unweighted_diff_matrix", "quad_weights",
    "integrate_basis", "spectral_coeffs", "check_pairing", "NATURAL_W",
]


@dataclass(frozen=True)
class WeightFn:
    kind: WeightKind

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is WeightKind.ONE:
            return np.ones_like(t)
        if self.kind is WeightKind.ONE_MINUS_T:
            return 1.0 - t
        return 1.0 - t * t

    def deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind is WeightKind.ONE:
            return np.zeros_like(t)
        if self.kind is WeightKind.ONE_MINUS_T:
            return -np.ones_like(t)
        return -2.0 * t

    def eval(self, t):
        return self(t)


ONE = WeightFn(WeightKind.ONE)
ONE_MINUS_T = WeightFn(WeightKind.ONE_MINUS_T)
ONE_MINUS_T2 = WeightFn(WeightKind.ONE_MINUS_T2)

# grid family -> interpolation weight it is meant to be paired with
NATURAL_W = {
    Family.LGL: WeightKind.ONE,
    Family.CHEBYSHEV_GL: WeightKind.ONE,
    Family.LGR: WeightKind.ONE_MINUS_T,
    Family.LG: WeightKind.ONE_MINUS_T2,
    Family.UNIFORM: WeightKind.ONE,
    Family.CUSTOM: WeightKind.ONE,
}


def weight_fn(W) -> WeightFn:
    """Coerce None, a WeightKind, its string value or a WeightFn."""
    if W is None:
        return ONE
    if isinstance(W, WeightFn):
        return W
    return WeightFn(WeightKind(W))


def _check_nodes(grid, W):
    Wn = W(grid.nodes)
    if np.any(Wn == 0.0):
        raise WeightVanishesAtNode(
            f"W={W.kind.value} vanishes at a node of the {grid.family.value} grid")
    return Wn


def check_pairing(grid: Grid, W, force=False):
    """Raise IncompatiblePairing unless (grid family, W) is a recommended pair."""
    W = weight_fn(W)
    _check_nodes(grid, W)
    if force:
        return
    want = NATURAL_W.get(grid.family)
    if want is not None and want is not W.kind:
        raise IncompatiblePairing(
            f"{grid.family.value} grids pair with W={want.value}, not W={W.kind.value}"
            " (pass force=True to override)")


@dataclass(frozen=True, eq=False)
class DiffMatrix:
    entries: np.ndarray
    grid: Grid
    weight: WeightKind

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __matmul__(self, other):
        return self.entries @ other

    @property
    def shape(self):
        return self.entries.shape


def barycentric_weights(nodes):
    """Barycentric weights 1/prod_{k != j}(t_j - t_k), rescaled to max |v| = 1.

    Differences are multiplied by 2 (the reciprocal capacity of [-1, 1]) so
    the products stay in floating-point range for every supported N.
    """
    x = np.asarray(nodes, dtype=float)
    diff = 2.0 * (x[:, None] - x[None, :])
    np.fill_diagonal(diff, 1.0)
    v = 1.0 / np.prod(diff, axis=1)
    return v / np.max(np.abs(v))


def lagrange_matrix(grid_or_nodes, t):
    """Matrix Phi[k, j] = phi_j(t_k) via the second barycentric formula."""
    x = grid_or_nodes.nodes if isinstance(grid_or_nodes, Grid) else np.asarray(grid_or_nodes, float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    v = barycentric_weights(x)
    diff = t[:, None] - x[None, :]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        terms = v[None, :] / diff
        phi = terms / np.sum(terms, axis=1, keepdims=True)
    # t on a node, or so close that v / (t - t_j) overflows: the basis is
    # the Kronecker row of the nearest node to working precision
    hit = ~np.all(np.isfinite(terms), axis=1)
    if np.any(hit):
        near = np.argmin(np.abs(diff[hit]), axis=1)
        phi[hit] = 0.0
        phi[np.flatnonzero(hit), near] = 1.0
    return phi


def lagrange_basis(grid: Grid, j: int, t):
    """phi_j(t) for the grid's Lagrange basis."""
    if not 0 <= j <= grid.N:
        raise IndexOutOfRange(f"basis index {j} outside 0..{grid.N}")
    phi = lagrange_matrix(grid, t)[:, j]
    return float(phi[0]) if np.ndim(t) == 0 else phi


def interpolate(grid: Grid, values, W=None, t=0.0):
    """Evaluate the W-weighted interpolant of nodal `values` at `t`.

    `values` may be (N+1,) or (N+1, k); the result follows `t`'s shape
    (plus the trailing k axis).
    """
    W = weight_fn(W)
    Wn = _check_nodes(grid, W)
    values = np.asarray(values, dtype=float)
    if values.shape[0] != grid.N + 1:
        raise ValueError(f"expected {grid.N + 1} nodal values, got {values.shape[0]}")
    phi = lagrange_matrix(grid, t)
    scale = W(np.atleast_1d(t))
    if values.ndim == 1:
        out = scale * (phi @ (values / Wn))
    else:
        out = scale[:, None] * (phi @ (values / Wn[:, None]))
    if np.ndim(t) == 0:
        return float(out[0]) if values.ndim == 1 else out[0]
    return out


def unweighted_diff_matrix(nodes):
    """D_hat[i, j] = phi_j'(t_i), with the negative-sum trick on the diagonal."""
    x = np.asarray(nodes, dtype=float)
    v = barycentric_weights(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (v[None, :] / v[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return D


def diff_matrix(grid: Grid, W=None) -> DiffMatrix:
    """W-weighted differentiation matrix.

    D_ij = [W'(t_i) delta_ij + W(t_i) D_hat_ij] / W(t_j)
    """
    W = weight_fn(W)
    Wn = _check_nodes(grid, W)
    Dh = unweighted_diff_matrix(grid.nodes)
    if W.kind is WeightKind.ONE:
        D = Dh
    else:
        D = (np.diag(W.deriv(grid.nodes)) + Wn[:, None] * Dh) / Wn[None, :]
    D.flags.writeable = False
    return DiffMatrix(D, grid, W.kind)


def integrate_basis(nodes, W=None):
    """w_j = int_{-1}^{1} W(t)/W(t_j) phi_j(t) dt, by an exact Gauss rule.

    The integrand has degree N + deg(W) <= N + 2, so N + 3 Gauss points
    integrate it exactly.
    """
    W = weight_fn(W)
    x = np.asarray(nodes, dtype=float)
    Wn = W(x)
    if np.any(Wn == 0.0):
        raise WeightVanishesAtNode(f"W={W.kind.value} vanishes at a node")
    s, ws = gauss_rule(x.size + 2)
    phi = lagrange_matrix(x, s)
    return (ws * W(s)) @ phi / Wn


def quad_weights(grid: Grid, W=None):
    """Integration weights of the W-weighted interpolant on `grid`."""
    W = weight_fn(W)
    _check_nodes(grid, W)
    return integrate_basis(grid.nodes, W)


def spectral_coeffs(grid: Grid, values):
    """Legendre coefficients a_j = (j + 1/2) sum_i L_j(t_i) w_i y_i, j = 0..N.

    Only defined for LGL grids. `values` may be (N+1,) or (N+1, k).
    """
    if grid.family is not Family.LGL:
        raise WrongFamily(f"spectral coefficients need an LGL grid, got {grid.family.value}")
    values = np.asarray(values, dtype=float)
    L = legendre_table(grid.N, grid.nodes)
    scale = np.arange(grid.N + 1) + 0.5
    if values.ndim == 1:
        return scale * (L.T @ (grid.weights * values))
    return scale[:, None] * (L.T @ (grid.weights[:, None] * values))

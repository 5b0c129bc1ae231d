import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from psoc.legendre import (Family, chebyshev_gl_grid, legendre_eval, lg_grid, lgl_grid, lgr_grid,
                           make_grid, uniform_grid)


def test_legendre_eval_examples():
    assert legendre_eval(0, 0.37) == (1.0, 0.0)
    assert legendre_eval(2, 0.5) == pytest.approx((-0.125, 1.5), abs=1e-15)
    for n in range(1, 12):
        L, dL = legendre_eval(n, 1.0)
        assert L == 1.0
        assert dL == n * (n + 1) / 2


def test_legendre_eval_matches_numpy():
    t = np.linspace(-1, 1, 41)
    for n in range(8):
        c = np.zeros(n + 1)
        c[n] = 1
        L, dL = legendre_eval(n, t)
        np.testing.assert_allclose(L, np.polynomial.legendre.legval(t, c), atol=1e-14)
        np.testing.assert_allclose(dL, np.polynomial.legendre.legval(t, np.polynomial.legendre.legder(c)),
                                   atol=1e-12)


def test_lgl_small_cases():
    g = lgl_grid(1)
    np.testing.assert_array_equal(g.nodes, [-1, 1])
    np.testing.assert_allclose(g.weights, [1, 1], atol=1e-15)
    g = lgl_grid(2)
    np.testing.assert_allclose(g.nodes, [-1, 0, 1], atol=1e-15)
    np.testing.assert_allclose(g.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-15)
    g = lgl_grid(4)
    r = math.sqrt(3 / 7)
    np.testing.assert_allclose(g.nodes[1:-1], [-r, 0, r], atol=1e-15)


def test_lgr_small_cases():
    g = lgr_grid(1)
    np.testing.assert_allclose(g.nodes, [-1, 1 / 3], atol=1e-15)
    np.testing.assert_allclose(g.weights, [0.5, 1.5], atol=1e-15)
    for N in (1, 5, 20):
        g = lgr_grid(N)
        assert g.nodes[0] == -1.0 and g.nodes[-1] < 1.0


def test_lg_small_cases():
    g = lg_grid(1)
    np.testing.assert_allclose(g.nodes, [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(g.weights, [1, 1], atol=1e-15)
    for N in (1, 6, 31):
        g = lg_grid(N)
        assert g.nodes.min() > -1 and g.nodes.max() < 1


def test_chebyshev_and_uniform_small_cases():
    np.testing.assert_allclose(chebyshev_gl_grid(1).weights, [1, 1], atol=1e-15)
    for make in (chebyshev_gl_grid, uniform_grid):
        g = make(2)
        np.testing.assert_allclose(g.nodes, [-1, 0, 1], atol=1e-15)
        np.testing.assert_allclose(g.weights, [1 / 3, 4 / 3, 1 / 3], atol=1e-14)
    for N in range(1, 40):
        assert abs(chebyshev_gl_grid(N).weights.sum() - 2) <= 1e-13


def test_uniform_weights_turn_negative():
    # nine nodes (N=8) is the first closed Newton-Cotes rule with a negative weight
    assert uniform_grid(11).weights.min() < 0
    assert uniform_grid(9).weights.min() > 0
    assert uniform_grid(8).weights.min() < 0


# Newton-Cotes weights lose digits to cancellation at high order, so uniform stops at 16
_STRUCTURE_CASES = [(f, N) for f in ("lgl", "lgr", "lg", "chebgl", "uniform")
                    for N in (1, 2, 3, 7, 16, 33) if not (f == "uniform" and N > 16)]


@pytest.mark.parametrize("family,N", _STRUCTURE_CASES)
def test_grid_structure(family, N):
    g = make_grid(family, N)
    assert len(g.nodes) == len(g.weights) == N + 1
    assert np.all(np.diff(g.nodes) > 0)
    assert g.nodes[0] >= -1 and g.nodes[-1] <= 1
    assert abs(g.weights.sum() - 2) <= 1e-13
    assert not g.nodes.flags.writeable


def _monomial_integral(k):
    return 0.0 if k % 2 else 2.0 / (k + 1)


@pytest.mark.parametrize("family,extra", [("lgl", -1), ("lgr", 0), ("lg", 1)])
def test_gaussian_exactness(family, extra):
    for N in range(1, 33):
        g = make_grid(family, N)
        for k in range(2 * N + extra + 1):
            assert abs(g.weights @ g.nodes**k - _monomial_integral(k)) <= 1e-12


def test_lgl_symmetry_and_positivity():
    for N in range(1, 65):
        g = lgl_grid(N)
        assert np.max(np.abs(g.nodes + g.nodes[::-1])) <= 1e-14
        for fam in (Family.LGL, Family.LGR, Family.LG):
            assert make_grid(fam, N).weights.min() > 0


def test_root_residuals():
    # residuals normalized by max |L'| on [-1, 1], i.e. relative to the slope scale
    for N in range(2, 65):
        inner = lgl_grid(N).nodes[1:-1]
        _, dL = legendre_eval(N, inner)
        assert np.max(np.abs(dL)) / (N * (N + 1) / 2) <= 1e-14
        L, _ = legendre_eval(N + 1, lg_grid(N).nodes)
        assert np.max(np.abs(L)) / ((N + 1) * (N + 2) / 2) <= 1e-14


def test_invalid_orders():
    for bad in (0, -1, 2.5, 257):
        with pytest.raises(ValueError):
            lgl_grid(bad)
    with pytest.raises(ValueError):
        make_grid("custom", 4)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40))
def test_grid_construction_is_deterministic(N):
    a, b = lgr_grid(N), lgr_grid(N)
    assert a.nodes.tobytes() == b.nodes.tobytes()
    assert a.weights.tobytes() == b.weights.tobytes()

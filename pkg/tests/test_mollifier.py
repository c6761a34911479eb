import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helmcauchy.assembly import build_grid
from helmcauchy.mollifier import (ExtendedGrid, GaussianKernel, KronOperator, asymptote_ratio,
                                  build_convolution, build_derivatives, build_extension,
                                  build_penalty, convolution_1d, default_ghost_layers,
                                  lemma_bounds, symbol)
from helmcauchy.problem import RectDomain


@pytest.fixture(scope="module")
def egrid():
    g = build_grid(RectDomain(-1.0, 1.0), 21, 17)
    return ExtendedGrid(g, 14, taper_width=2)


def ext_field(eg, fn):
    X, Y = np.meshgrid(eg.x, eg.y)
    return fn(X, Y).ravel()


def base_field(eg, fn):
    X, Y = np.meshgrid(eg.base.x, eg.base.y)
    return fn(X, Y).ravel()


# ---------------------------------------------------------------- kernel

def test_kernel_validates_alpha():
    for a in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            GaussianKernel(a)


def test_symbol_values():
    assert symbol(GaussianKernel(1.0), (0.0, 0.0)) == 1.0
    expected = math.exp(-2 * math.pi**2 * 0.01)
    assert symbol(GaussianKernel(0.1), (1.0, 0.0)) == pytest.approx(expected, rel=1e-14)
    assert symbol(GaussianKernel(0.1), (0.6, 0.8)) == pytest.approx(0.8208687, abs=1e-7)


def test_symbol_decays_monotonically():
    k = GaussianKernel(0.3)
    vals = [symbol(k, (r, 0.0)) for r in np.linspace(0, 20, 50)]
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-100


def test_lemma_bounds_values():
    m, M = lemma_bounds(GaussianKernel(0.1))
    assert m == M
    assert M == pytest.approx(0.0320880, abs=1e-6)
    m1, M1 = lemma_bounds(GaussianKernel(1.0))
    assert 1.0 - M1 == pytest.approx(2 * math.exp(-2 * math.pi**2), rel=1e-6)
    assert 1.0 - M1 == pytest.approx(5.3e-9, rel=0.02)


def test_bounds_strictly_decrease_to_zero():
    alphas = [2.0**-i for i in range(11)]
    M = [lemma_bounds(GaussianKernel(a))[1] for a in alphas]
    assert np.all(np.diff(M) < 0)
    assert M[-1] < 1e-9


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-4, 1.0))
def test_bounds_equal_and_below_four(alpha):
    m, M = lemma_bounds(GaussianKernel(alpha), n_dirs=32)
    assert abs(M - m) <= 1e-12 and 0.0 < M <= 4.0


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 0.01), st.floats(1e-3, 1.0))
def test_symbol_asymptote(product, alpha):
    xi = product / alpha
    k = GaussianKernel(alpha)
    direct = (1 - symbol(k, (xi, 0.0))) / (2 * math.pi**2 * alpha**2 * xi**2)
    assert abs(direct - 1) < 0.01
    assert abs(asymptote_ratio(k, xi) - 1) < 0.01


# ------------------------------------------------------------ extension

def test_extension_restricts_to_identity(egrid):
    E = build_extension(egrid)
    u = np.random.default_rng(0).standard_normal(egrid.base.size)
    assert np.array_equal((E @ u)[egrid.interior_mask()], u)


@pytest.mark.parametrize("coef", [(1.0, 0.0, 0.0), (0.3, 1.0, 2.0), (-2.0, 0.7, -1.3)])
def test_extension_reproduces_affine(egrid, coef):
    c0, cx, cy = coef
    fn = lambda X, Y: c0 + cx * X + cy * Y
    Eu = build_extension(egrid) @ base_field(egrid, fn)
    mask = egrid.untapered_mask()
    assert mask.sum() > egrid.base.size
    assert np.abs(Eu[mask] - ext_field(egrid, fn)[mask]).max() <= 1e-12


def test_extension_matches_value_and_slope_only(egrid):
    g = egrid.base
    Eu = (build_extension(egrid) @ base_field(egrid, lambda X, Y: Y**2)).reshape(egrid.n_y, egrid.n_x)
    t = g.dy
    ghost = Eu[egrid.p + g.n_y, egrid.p + 3]  # first layer above y = 1
    assert ghost == pytest.approx(1 + 2 * t - 5 * t**2, abs=1e-13)
    assert ghost != pytest.approx((1 + t) ** 2, abs=1e-6)


def test_extension_vanishes_outside_band(egrid):
    Eu = (build_extension(egrid) @ np.ones(egrid.base.size)).reshape(egrid.n_y, egrid.n_x)
    assert np.all(Eu[0] == 0) and np.all(Eu[:, -1] == 0)
    assert Eu.max() <= 1.0 + 1e-15


def test_extended_grid_validation():
    g = build_grid(RectDomain(-1.0, 1.0), 11, 11)
    with pytest.raises(ValueError):
        ExtendedGrid(g, 3, taper_width=2)
    assert ExtendedGrid(g, 40).depth == 5


def test_default_ghost_layers():
    g = build_grid(RectDomain(-1.0, 1.0), 41, 41)
    assert default_ghost_layers(g, 0.35) == 56
    assert default_ghost_layers(g, 0.001) == 4


# ---------------------------------------------------------- convolution

def test_convolution_preserves_constants(egrid):
    C = build_convolution(GaussianKernel(0.2), egrid)
    np.testing.assert_allclose(C @ np.ones(egrid.n_x * egrid.n_y), 1.0, atol=1e-12)
    np.testing.assert_allclose(C.toarray().sum(axis=1), 1.0, atol=1e-12)


def test_convolution_degenerates_to_identity(egrid):
    alpha = egrid.base.dx / 9
    C = build_convolution(GaussianKernel(alpha), egrid)
    assert np.array_equal(C.toarray(), np.eye(egrid.n_x * egrid.n_y))


def test_convolution_keeps_linear_fields_away_from_edges(egrid):
    alpha = 0.1
    C = build_convolution(GaussianKernel(alpha), egrid)
    u = ext_field(egrid, lambda X, Y: X + 0 * Y)
    Cu = (C @ u).reshape(egrid.n_y, egrid.n_x)
    r = math.ceil(4 * alpha / egrid.base.dx)
    core = slice(r, egrid.n_x - r)
    X = np.meshgrid(egrid.x, egrid.y)[0]
    assert np.abs(Cu[:, core] - X[:, core]).max() <= 1e-12


def test_convolution_rejects_narrow_band():
    g = build_grid(RectDomain(-1.0, 1.0), 21, 21)
    with pytest.raises(ValueError):
        build_convolution(GaussianKernel(0.5), ExtendedGrid(g, 4))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 40), st.floats(0.01, 0.3), st.floats(0.001, 0.5))
def test_convolution_rows_have_unit_mass(n, h, alpha):
    C = convolution_1d(n, h, alpha)
    np.testing.assert_allclose(C.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(C >= 0)


# ---------------------------------------------------------- derivatives

def test_difference_operators_are_exact_on_polynomials(egrid):
    Dx, Dy, Dxx, Dyy, Dxy = build_derivatives(egrid)
    np.testing.assert_allclose(Dx @ ext_field(egrid, lambda X, Y: X), 1.0, atol=1e-12)
    np.testing.assert_allclose(Dy @ ext_field(egrid, lambda X, Y: Y), 1.0, atol=1e-11)
    np.testing.assert_allclose(Dxx @ ext_field(egrid, lambda X, Y: X**2), 2.0, atol=1e-10)
    np.testing.assert_allclose(Dyy @ ext_field(egrid, lambda X, Y: Y**2), 2.0, atol=1e-9)
    np.testing.assert_allclose(Dxy @ ext_field(egrid, lambda X, Y: X * Y), 1.0, atol=1e-10)


def test_kron_operator_matches_dense():
    rng = np.random.default_rng(2)
    L, R = rng.standard_normal((3, 4)), rng.standard_normal((5, 2))
    op = KronOperator(L, R)
    v = rng.standard_normal(8)
    np.testing.assert_allclose(op @ v, np.kron(L, R) @ v, atol=1e-13)
    np.testing.assert_allclose(op.T.toarray(), np.kron(L, R).T)
    np.testing.assert_allclose(op.tosparse().toarray(), np.kron(L, R))


# -------------------------------------------------------------- penalty

@pytest.fixture(scope="module")
def stack(egrid):
    return build_penalty(GaussianKernel(0.15), egrid, weight=1.0)


def test_penalty_symmetric_and_psd(stack):
    P = stack.penalty
    scale = np.abs(P).max()
    assert np.abs(P - P.T).max() <= 1e-12 * scale
    rng = np.random.default_rng(4)
    norm2 = np.linalg.norm(P, 2)
    for _ in range(100):
        v = rng.standard_normal(stack.size)
        assert v @ P @ v / (v @ v) >= -1e-10 * norm2


def test_penalty_matrix_free_agrees(stack):
    rng = np.random.default_rng(5)
    u = rng.standard_normal(stack.size)
    Pu = stack.penalty @ u
    np.testing.assert_allclose(stack.apply_penalty(u), Pu, atol=1e-10 * np.abs(Pu).max())
    assert stack.penalty_value(u) == pytest.approx(u @ Pu, rel=1e-10)


def test_penalty_explicit_formula(stack):
    E, C = stack.E.toarray(), stack.C.toarray()
    Ds = [op.toarray() for op in (stack.Dx, stack.Dy, stack.Dxx, stack.Dyy, stack.Dxy)]
    D = np.eye(E.shape[0]) + sum(d.T @ d for d in Ds[:4]) + 2 * Ds[4].T @ Ds[4]
    R = (np.eye(E.shape[0]) - C) @ E
    ref = R.T @ D @ R
    assert np.abs(stack.penalty - ref).max() <= 1e-10 * np.abs(ref).max()


def test_penalty_weight_scales(egrid, stack):
    weighted = build_penalty(GaussianKernel(0.15), egrid, weight=1e-3)
    np.testing.assert_allclose(weighted.penalty, 1e-3 * stack.penalty, rtol=1e-12)
    with pytest.raises(ValueError):
        build_penalty(GaussianKernel(0.15), egrid, weight=0.0)


def test_penalty_vanishes_for_degenerate_kernel(egrid):
    s = build_penalty(GaussianKernel(egrid.base.dx / 9), egrid, weight=1.0)
    assert np.abs(s.penalty).max() == 0.0
    assert np.all(s.apply_penalty(np.ones(s.size)) == 0.0)
    assert np.all(s.diagonal() == 0.0)

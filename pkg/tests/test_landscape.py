import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import fd_directional, fd_gradient, rel_err
from ipmsaddle.landscape import (
    GinzburgLandau1D,
    MetricKind,
    PeriodicGrid,
    ToyPotential2D,
    as_state,
    error_measure,
    eval_gradient,
    eval_potential,
    hessian_vector_product,
    metric_inner,
    metric_norm,
    riesz,
)

coords = st.floats(-2.0, 2.0, allow_nan=False)


@given(coords, st.floats(-1.0, 2.5))
def test_toy_gradient_matches_central_differences(x, y):
    model = ToyPotential2D()
    p = np.array([x, y])
    g = model.gradient(p)
    fd = fd_gradient(model.energy, p)
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-7)


@given(coords, st.floats(-1.0, 2.5))
def test_toy_hessian_matches_gradient_differences(x, y):
    model = ToyPotential2D()
    p = np.array([x, y])
    eps = 1e-6
    cols = [(model.gradient(p + eps * e) - model.gradient(p - eps * e)) / (2 * eps) for e in np.eye(2)]
    fd = np.column_stack(cols)
    assert np.allclose(model.hessian(p), fd, rtol=1e-5, atol=1e-6)


def test_toy_broadcasts_over_leading_axes(toy):
    pts = np.random.default_rng(1).uniform(-1, 1, size=(4, 3, 2))
    e = toy.energy(pts)
    assert e.shape == (4, 3)
    assert toy.energy(pts[2, 1]) == e[2, 1]
    assert np.array_equal(toy.gradient(pts)[1, 2], toy.gradient(pts[1, 2]))
    assert toy.hessian(pts).shape == (4, 3, 2, 2)


def test_toy_catalogue_points_are_critical(toy):
    # catalogue values are rounded to five decimals
    for p in ToyPotential2D.SADDLES:
        assert np.linalg.norm(toy.gradient(np.array(p))) < 1e-3
        lam = np.linalg.eigvalsh(toy.hessian(np.array(p)))
        assert lam[0] < 0 < lam[1]


def test_toy_saddles_are_symmetric(toy_saddles):
    left, right = toy_saddles[1], toy_saddles[0]
    assert np.allclose(left, right * [-1, 1], atol=1e-12)
    assert abs(toy_saddles[2][0]) < 1e-12


@pytest.mark.parametrize("factory", [GinzburgLandau1D.allen_cahn, GinzburgLandau1D.cahn_hilliard])
@given(seed=st.integers(0, 2**32 - 1))
def test_ginzburg_landau_gradient_is_l2_derivative(factory, seed):
    model = factory()
    rng = np.random.default_rng(seed)
    phi = 0.6 + 0.5 * rng.standard_normal(model.dim)
    u = rng.standard_normal(model.dim)
    d = fd_directional(model.energy, phi, u)
    assert d == pytest.approx(model.h * np.dot(model.gradient(phi), u), rel=1e-6, abs=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
def test_ginzburg_landau_hvp_matches_dense_hessian(seed):
    model = GinzburgLandau1D.allen_cahn(n_grid=32)
    rng = np.random.default_rng(seed)
    phi, v = rng.standard_normal((2, model.dim))
    assert np.allclose(model.hvp(phi, v), model.hessian_l2(phi) @ v, atol=1e-12)


def test_fourier_symbol_of_negative_laplacian():
    grid = PeriodicGrid(64)
    for k in (1, 3, 7):
        u = np.sin(2 * np.pi * k * grid.x)
        assert np.allclose(grid.neg_laplacian(u), (2 * np.pi * k) ** 2 * u, atol=1e-9)
        assert np.allclose(grid.inv_neg_laplacian(u), u / (2 * np.pi * k) ** 2, atol=1e-15)
    assert np.allclose(grid.inv_neg_laplacian(np.ones(64)), 0.0)


def test_hminus1_norm_of_sine():
    n = 100
    metric = MetricKind.hminus1(1.0 / n)
    u = np.sin(2 * np.pi * np.arange(n) / n)
    # ||sin||_{L2}^2 = 1/2, divided by the symbol (2 pi)^2
    assert metric_inner(metric, u, u) == pytest.approx(0.5 / (2 * np.pi) ** 2, rel=1e-12)


@given(seed=st.integers(0, 2**32 - 1))
def test_metric_inner_is_symmetric_and_riesz_inverts_it(seed):
    n = 48
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, n))
    u -= u.mean()
    v -= v.mean()
    metric = MetricKind.hminus1(1.0 / n)
    assert metric_inner(metric, u, v) == metric_inner(metric, v, u)
    # <riesz(g), v>_{H^-1} == <g, v>_{L2} for mean-zero v
    g = rng.standard_normal(n)
    assert metric_inner(metric, riesz(metric, g), v) == pytest.approx(np.dot(g, v) / n, abs=1e-12)


def test_hminus1_rejects_and_warns_on_mean():
    n = 16
    metric = MetricKind.hminus1(1.0 / n)
    u = np.sin(2 * np.pi * np.arange(n) / n)
    with pytest.raises(ValueError, match="mean"):
        metric_norm(metric, u + 1e-6)
    with pytest.warns(RuntimeWarning, match="removing mean"):
        metric_norm(metric, u + 1e-13)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        metric_norm(metric, u)


def test_metric_and_state_validation(toy):
    with pytest.raises(ValueError):
        MetricKind("H1")
    with pytest.raises(ValueError):
        MetricKind.l2(0.0)
    with pytest.raises(ValueError, match="non-finite"):
        as_state([np.nan, 1.0])
    with pytest.raises(ValueError, match="dimension"):
        as_state([1.0, 2.0, 3.0], 2)
    with pytest.raises(ValueError, match="dimension"):
        toy.gradient(np.zeros(3))
    with pytest.raises(ValueError, match="periodic"):
        eval_gradient(toy, np.zeros(2), MetricKind.hminus1(0.5))
    with pytest.raises(ValueError):
        metric_inner(MetricKind.l2(), np.zeros(2), np.zeros(3))
    with pytest.raises(ValueError):
        GinzburgLandau1D(kappa=0.0)


def test_cahn_hilliard_gradient_conserves_mass(ch):
    rng = np.random.default_rng(3)
    phi = ch.project_mass(rng.uniform(-1, 1, ch.dim))
    assert np.mean(phi) == pytest.approx(0.6, abs=1e-15)
    g = eval_gradient(ch, phi)
    assert abs(np.mean(g)) < 1e-15 * np.max(np.abs(g))


def test_module_level_wrappers(ac, toy):
    phi = 0.3 * np.cos(2 * np.pi * ac.x)
    assert eval_potential(ac, phi) == ac.energy(phi)
    v = np.sin(2 * np.pi * ac.x)
    assert np.array_equal(hessian_vector_product(ac, phi, v), ac.hvp(phi, v))
    assert error_measure(toy, np.array([1.0, 0.0])) == pytest.approx(np.linalg.norm(toy.gradient([1.0, 0.0])))
    assert rel_err(error_measure(ac, phi), np.sqrt(ac.h) * np.linalg.norm(ac.gradient(phi))) < 1e-14


def test_stiff_symbol_matches_linear_part(ch, ac):
    u = np.cos(4 * np.pi * ac.x)
    lin = ac.kappa**2 * ac.grid.neg_laplacian(u) + 2.0 * u
    assert np.allclose(ac.grid.apply_symbol(u, ac.stiff_symbol(ac.metric, 2.0)), lin)
    u = np.cos(4 * np.pi * ch.x)
    lin = ch.grid.neg_laplacian(ch.kappa**2 * ch.grid.neg_laplacian(u) + 2.0 * u)
    assert np.allclose(ch.grid.apply_symbol(u, ch.stiff_symbol(ch.metric, 2.0)), lin, rtol=1e-10)

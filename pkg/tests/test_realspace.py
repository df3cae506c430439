import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import trapezoid
from scipy.special import eval_hermite, gammaln

from rabiknots.errors import GridTooNarrowError, ValidationError
from rabiknots.model import ModelParams, solve_spectrum
from rabiknots.realspace import (
    Grid,
    default_grid,
    hermite_basis,
    hermite_series,
    spin_components,
    spin_texture,
    to_position,
)


def hermite_reference(n, x):
    # textbook normalization, fine for moderate n and |x|
    log_norm = -0.5 * (n * math.log(2.0) + gammaln(n + 1) + 0.5 * math.log(math.pi))
    return eval_hermite(n, x) * np.exp(log_norm - 0.5 * x * x)


def test_grid_symmetric_and_contains_zero():
    g = Grid(7.3, 101)
    x = g.x
    assert np.array_equal(x[::-1], -x)
    assert x[50] == 0.0
    assert g.h == pytest.approx(2 * 7.3 / 100)


@pytest.mark.parametrize("n_points", [100, 1])
def test_grid_rejects_even_or_tiny(n_points):
    with pytest.raises(ValidationError):
        Grid(5.0, n_points)


@pytest.mark.parametrize("n", [0, 1, 2, 5, 17, 30])
def test_hermite_against_scipy(n):
    x = np.linspace(-6, 6, 301)
    np.testing.assert_allclose(hermite_basis(x, n)[n], hermite_reference(n, x), atol=1e-12)


def test_hermite_orthonormal():
    x = np.linspace(-16, 16, 6001)
    phi = hermite_basis(x, 60)
    gram = trapezoid(phi[:, None, :] * phi[None, :, :], x, axis=2)
    assert np.abs(gram - np.eye(61)).max() < 1e-10


def test_hermite_high_order_finite():
    x = np.linspace(-40, 40, 2001)
    phi = hermite_basis(x, 400)
    assert np.all(np.isfinite(phi))
    assert np.abs(phi).max() <= math.pi ** -0.25 + 1e-12


def test_hermite_order_budget():
    with pytest.raises(ValidationError):
        hermite_basis(np.zeros(3), 401)


def test_series_matches_basis():
    c = np.array([0.3, -0.2, 0.5, 0.1])
    x = np.linspace(-3, 3, 11)
    np.testing.assert_allclose(hermite_series(c, x), c @ hermite_basis(x, 3))


def test_spin_components_unit_norm():
    lv = solve_spectrum(ModelParams(g=0.6, lam=0.3))[3]
    cu, cd = spin_components(lv)
    assert cu @ cu + cd @ cd == pytest.approx(1.0)


def test_state_normalized_and_parity_related():
    p = ModelParams.from_gs(1.2, lam=1.5)
    lv = solve_spectrum(p)[5]
    st_ = to_position(lv, default_grid(p))
    assert st_.norm_residual < 1e-6
    np.testing.assert_allclose(st_.psi_minus, lv.parity * st_.psi_plus[::-1], atol=1e-12)
    p_mid, m_mid = st_.evaluate(np.array([0.37, -1.1]))
    i = np.searchsorted(st_.x, 0.37)
    assert abs(p_mid[0] - st_.psi_plus[i]) < 0.05


def test_evaluate_reproduces_grid():
    p = ModelParams(g=0.5, lam=0.2)
    st_ = to_position(solve_spectrum(p)[2], default_grid(p, 401))
    p_vals, m_vals = st_.evaluate(st_.x)
    np.testing.assert_allclose(p_vals, st_.psi_plus, atol=1e-14)
    np.testing.assert_allclose(st_.component("psi_down_tilde", st_.x), st_.psi_down_tilde, atol=1e-14)


def test_narrow_grid_detected():
    p = ModelParams.from_gs(3.0, lam=1.0)
    with pytest.raises(GridTooNarrowError):
        to_position(solve_spectrum(p)[1], Grid(3.0, 401))


def test_texture_components():
    p = ModelParams.from_gs(2.0, lam=0.5)
    tx = spin_texture(to_position(solve_spectrum(p)[1], default_grid(p)))
    st_ = tx.state
    np.testing.assert_allclose(tx.s_z, 2 * st_.psi_up_tilde * st_.psi_down_tilde, atol=1e-14)
    rho = st_.psi_plus**2 + st_.psi_minus**2
    assert np.all(tx.s_z**2 + tx.s_x**2 <= rho**2 + 1e-14)


@settings(max_examples=20, deadline=None)
@given(g=st.floats(0.05, 5.0), lam=st.floats(0.0, 3.0), j_e=st.integers(1, 6))
def test_symmetry_properties(g, lam, j_e):
    p = ModelParams.from_gs(g, lam=lam)
    lv = solve_spectrum(p)[j_e]
    st_ = to_position(lv, default_grid(p))
    tx = spin_texture(st_)
    assert np.abs(tx.s_y).max() <= 1e-10
    assert np.abs(tx.s_x - tx.s_x[::-1]).max() <= 1e-9
    assert np.abs(tx.s_z + tx.s_z[::-1]).max() <= 1e-9
    assert np.abs(st_.psi_minus - lv.parity * st_.psi_plus[::-1]).max() <= 1e-9

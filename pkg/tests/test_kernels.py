import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from memlaw.kernels import (
    KernelError,
    KernelMatrix,
    ScaledTemporalKernel,
    gauss_legendre_integral,
    normalize_spatial,
    poly_bump,
    poly_decay,
    read_kernel_csv,
    scaled_first_moment,
    spatial_cell_averages,
    tabulated_spatial,
    tabulated_temporal,
    temporal_cell_averages,
    temporal_cell_masses,
    uniform,
)


def test_poly_bump_amplitude_unit_width():
    assert poly_bump(1.0).amplitude == pytest.approx(20.0, rel=1e-14)


def test_poly_bump_amplitude_quarter_width():
    assert poly_bump(0.25).amplitude == pytest.approx(20480.0, rel=1e-9)


def test_uniform_amplitude():
    assert uniform(2.0).amplitude == 0.5


def test_poly_bump_mass_independent_quadrature():
    from scipy.integrate import quad

    mu = poly_bump(0.25)
    mass, _ = quad(lambda x: float(mu(x)), 0.0, 0.25, epsabs=1e-14)
    assert mass == pytest.approx(1.0, abs=1e-12)


def test_spatial_kernel_zero_outside_support():
    mu = poly_bump(0.5)
    assert np.all(mu(np.array([-0.1, -1e-12, 0.5, 0.7])) == 0.0)
    assert np.all(mu(np.linspace(0.0, 0.5, 101)) >= 0.0)


def test_unknown_family_rejected():
    with pytest.raises(KernelError):
        normalize_spatial("gaussian", 1.0)
    with pytest.raises(KernelError):
        normalize_spatial("poly_bump", 0.0)


def test_uniform_cell_averages_constant():
    w = spatial_cell_averages(uniform(2.0), 0.5)
    np.testing.assert_allclose(w, [0.5, 0.5, 0.5, 0.5], rtol=1e-14)


def test_poly_bump_first_weight_golden():
    # 16 * integral of 20480 s (1/4 - s)^3 over [0, 1/16], exact rational 47/8
    w = spatial_cell_averages(poly_bump(0.25), 0.0625)
    assert len(w) == 4
    assert w[0] == pytest.approx(47.0 / 8.0, rel=1e-13)
    assert 0.0625 * w.sum() == pytest.approx(1.0, abs=1e-10)


def test_derivative_peak_at_origin():
    mu = poly_bump(0.25)
    xs = np.linspace(0.0, 0.25, 100_001)
    d1 = np.abs(mu.derivative(xs, 1))
    assert xs[np.argmax(d1)] == 0.0
    assert d1.max() == pytest.approx(320.0, rel=1e-12)


def test_derivatives_match_symbolic():
    import sympy as sp

    s = sp.symbols("s")
    expr = 20480 * s * (sp.Rational(1, 4) - s) ** 3
    mu = poly_bump(0.25)
    x = np.linspace(0.0, 0.25, 9)[:-1]
    for order in (1, 2):
        exact = [float(sp.diff(expr, s, order).subs(s, sp.Rational(str(v)))) for v in x]
        np.testing.assert_allclose(mu.derivative(x, order), exact, rtol=1e-12, atol=1e-9)


def test_temporal_averages_two_cells():
    g = temporal_cell_averages(ScaledTemporalKernel(poly_decay(), 1.0), 0.5)
    np.testing.assert_allclose(g, [1.75, 0.25], rtol=1e-14)


def test_temporal_single_cell_when_step_exceeds_radius():
    gamma = ScaledTemporalKernel(poly_decay(), 0.01)
    dt = 0.02
    assert temporal_cell_averages(gamma, dt).tolist() == [1.0 / dt]
    assert temporal_cell_masses(gamma, dt).tolist() == [1.0]


def test_temporal_mass_at_reference_step():
    dt = 0.1286 * 0.00625
    g = temporal_cell_averages(ScaledTemporalKernel(poly_decay(), 0.0125), dt)
    assert len(g) == math.ceil(0.0125 / dt)
    assert dt * g.sum() == pytest.approx(1.0, abs=1e-10)
    assert np.all(g >= 0.0)


@pytest.mark.parametrize("delta", [1.0, 0.5, 0.1, 0.0125])
def test_first_moment_scales_linearly(delta):
    assert scaled_first_moment(ScaledTemporalKernel(poly_decay(), delta)) == pytest.approx(delta / 4, rel=1e-10)


def test_base_moment_by_quadrature():
    gamma = poly_decay()
    moment = gauss_legendre_integral(lambda t: t * gamma(t), 0.0, 1.0)[0]
    assert moment == pytest.approx(gamma.first_moment, abs=1e-12)


def test_scaled_kernel_value_law():
    gamma = ScaledTemporalKernel(poly_decay(), 0.2)
    t = np.array([0.0, 0.05, 0.1, 0.19])
    np.testing.assert_allclose(gamma(t), 3 * (1 - t / 0.2) ** 2 / 0.2, rtol=1e-14)
    assert gamma(np.array([0.21]))[0] == 0.0


def test_tabulated_spatial_normalised_and_exact_averages():
    # hat function on [0, 1]: piecewise linear, so split GL cell averages are exact
    mu = tabulated_spatial([0.0, 0.5, 1.0], [0.0, 3.0, 0.0])
    w = spatial_cell_averages(mu, 0.25)
    np.testing.assert_allclose(w, [0.5, 1.5, 1.5, 0.5], rtol=1e-13)


def test_tabulated_temporal_moment():
    gamma = tabulated_temporal([0.0, 1.0], [2.0, 0.0])
    assert gamma.first_moment == pytest.approx(1.0 / 3.0, rel=1e-13)


def test_tabulated_temporal_support_limited():
    with pytest.raises(KernelError):
        tabulated_temporal([0.0, 2.0], [1.0, 1.0])


def test_read_kernel_csv(tmp_path):
    path = tmp_path / "k.csv"
    path.write_text("# x,value\n0,0\n0.5,2\n1,0\n")
    nodes, values = read_kernel_csv(path)
    assert nodes.tolist() == [0.0, 0.5, 1.0]
    assert values.tolist() == [0.0, 2.0, 0.0]


def test_kernel_matrix_aliasing_survives_rescale():
    mats = KernelMatrix.shared(2, poly_bump(0.25), ScaledTemporalKernel(poly_decay(), 0.1))
    scaled = mats.with_delta(0.05)
    assert scaled[0, 0][1] is scaled[1, 1][1]
    assert scaled[0, 1][1].delta == 0.05


@settings(max_examples=60, deadline=None)
@given(eta=st.floats(0.05, 3.0), cells=st.integers(1, 200))
def test_spatial_weights_carry_unit_mass(eta, cells):
    dx = eta / cells * 1.37
    w = spatial_cell_averages(poly_bump(eta), dx)
    assert np.all(w >= 0.0)
    assert dx * w.sum() == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(delta=st.floats(1e-3, 1.0), dt=st.floats(1e-4, 0.5))
def test_temporal_masses_sum_to_one(delta, dt):
    masses = temporal_cell_masses(ScaledTemporalKernel(poly_decay(), delta), dt)
    assert np.all(masses >= 0.0)
    assert masses.sum() == pytest.approx(1.0, abs=1e-10)
    assert len(masses) == max(1, math.ceil(delta / dt * (1 - 1e-9)))

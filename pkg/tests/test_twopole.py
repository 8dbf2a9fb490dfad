import math
from fractions import Fraction
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from abclab.geometry import PoleConfiguration, Rectangle, build_crack_layout
from abclab.mesh import GradingSpec, generate
from abclab.potential import solve_Veps
from abclab.references import rectangle_mode
from abclab.twopole import (BISECTOR, NODAL, EllipticFrame, beta_from_taylor, fourier_c, fourier_d,
                            leading_coefficient, leading_energy, mode_coefficients, polynomial,
                            series_energy, series_solution, sums_check, taylor_coefficients)


def test_fourier_examples():
    assert fourier_c(1) == [0, 1]
    assert fourier_c(2) == [1, 0, Fraction(1, 2)]
    assert fourier_d(2) == [0, Fraction(1, 2)]
    assert fourier_c(3) == [0, Fraction(3, 4), 0, Fraction(1, 4)]


@pytest.mark.parametrize("m", range(1, 13))
def test_coefficient_structure(m):
    mc = mode_coefficients(m)
    for j, c in enumerate(mc.c):
        if (m - j) % 2:
            assert c == 0
    for j, d in enumerate(mc.d, start=1):
        assert d == Fraction(j, m) * mc.c[j]


def test_float_route_beyond_twelve():
    c = fourier_c(14)
    assert all(isinstance(x, float) for x in c)
    assert sum(c[1:]) + c[0] / 2 == pytest.approx(1.0, abs=1e-14)


def test_sums_examples():
    assert sums_check(1)[0] == 1
    assert sums_check(3)[0] == Fraction(3, 4)
    assert sums_check(2)[1] == Fraction(1, 8)


@given(st.integers(1, 24))
def test_sums_match_closed_forms(m):
    s_c, s_d, closed_c, closed_d = sums_check(m)
    assert s_c == closed_c and s_d == closed_d


def test_leading_coefficients():
    assert leading_coefficient(1, 1.0, 1.0, BISECTOR) == pytest.approx(math.pi)
    assert leading_coefficient(1, 1.0, 1.0, NODAL) == pytest.approx(-math.pi)
    assert leading_coefficient(2, 1.0, 1.0, BISECTOR) == pytest.approx(math.pi / 2)
    with pytest.raises(ValueError):
        leading_coefficient(1, 1.0, 1.0, "other")


def test_beta_from_taylor_rectangle_modes():
    centre = np.zeros(2)
    bis = rectangle_mode(1, 0.8, 2, 1, origin=(-0.5, -0.4))
    assert beta_from_taylor(bis.partials(centre, 1), 1, math.pi / 2) == pytest.approx(4 * math.pi / math.sqrt(0.8))
    nod = rectangle_mode(1, 0.8, 1, 2, origin=(-0.5, -0.4))
    beta = beta_from_taylor(nod.partials(centre, 1), 1, 0.0)
    # the x2 derivative at the centre is negative for this mode
    assert beta == pytest.approx(-5 * math.pi / math.sqrt(0.8))
    assert beta ** 2 == pytest.approx(25 * math.pi ** 2 / 0.8)


@given(st.integers(1, 6), st.integers(0, 5), st.booleans())
def test_beta_sign_flip(m, j, bisector):
    partials = [1.3, -0.7] + [0.0] * (m - 1)
    shift = 0.5 if bisector else 0.0
    a = beta_from_taylor(partials, m, (j + shift) * math.pi / m)
    b = beta_from_taylor(partials, m, (j + 1 + shift) * math.pi / m)
    assert a == -b and a != 0


def test_beta_requires_special_angle():
    with pytest.raises(ValueError):
        beta_from_taylor([1.0, 1.0], 1, 0.3)


def test_taylor_polynomial_roundtrip():
    l = taylor_coefficients([6.0, 2.0, -4.0, 12.0], 3)
    np.testing.assert_allclose(l, [1.0, 1.0, -2.0, 2.0])
    val, grad = polynomial([1.0, 2.0], 1)
    np.testing.assert_allclose(val(np.array([[0.5, 0.25]])), [1.0])
    np.testing.assert_allclose(grad(np.array([[0.5, 0.25]])), [[1.0, 2.0]])


def test_frame_geometry():
    f = EllipticFrame(0.5, 0.2, 0.3)
    assert f.xi_eps == pytest.approx(math.asinh(3.0))
    a, b = f.semi_axes
    x = f.to_cartesian(np.full(8, f.xi_eps), np.linspace(0, 2 * math.pi, 8, endpoint=False))
    np.testing.assert_allclose((x[:, 0] / a) ** 2 + (x[:, 1] / b) ** 2, 1.0, rtol=1e-13)
    xi, eta = f.from_cartesian(np.array([[0.05, 0.02], [-0.03, -0.04]]))
    back = f.to_cartesian(xi, eta)
    np.testing.assert_allclose(back, [[0.05, 0.02], [-0.03, -0.04]], atol=1e-15)
    with pytest.raises(ValueError):
        EllipticFrame(0.5, 0.0, 0.3)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_series_solution_conditions(m):
    frame = EllipticFrame(0.5, 0.1, 1.0)
    l0, l1 = 0.7, -1.1
    V = series_solution(m, l0, l1, frame)
    eta = np.linspace(0.05, math.pi - 0.05, 64)
    f = frame.focal
    np.testing.assert_allclose(V(frame.xi_eps, eta), 0.0, atol=1e-10 * f ** m)
    # trace sum twice P_m on the focal segment
    np.testing.assert_allclose(V(0.0, eta) + V(0.0, -eta), 2 * l0 * (f * np.cos(eta)) ** m,
                               atol=1e-10 * f ** m)
    # two-sided normal derivatives sum to twice d P_m / d x2
    dsum = (V.d_xi(0.0, eta) - V.d_xi(0.0, -eta)) / (f * np.sin(eta))
    np.testing.assert_allclose(dsum, 2 * l1 * (f * np.cos(eta)) ** (m - 1), atol=1e-10 * f ** (m - 1))
    # harmonic in (xi, eta)
    xi, h = 0.3, 1e-3
    lap = (V(xi + h, eta) + V(xi - h, eta) + V(xi, eta + h) + V(xi, eta - h) - 4 * V(xi, eta)) / h ** 2
    assert np.max(np.abs(lap)) < 1e-5 * f ** m


@pytest.mark.parametrize("m", [1, 2, 3])
def test_parseval(m):
    frame = EllipticFrame(0.5, 0.2, 0.6)
    V = series_solution(m, 0.4, 0.9, frame)
    gx, gw = np.polynomial.legendre.leggauss(60)
    xi = 0.5 * frame.xi_eps * (gx + 1)
    wxi = 0.5 * frame.xi_eps * gw
    eta = np.linspace(0, 2 * math.pi, 257)[:-1]
    XI, ETA = np.meshgrid(xi, eta, indexing="ij")
    dens = V.gradient_density(XI, ETA)
    quad = float(np.sum(wxi[:, None] * dens) * (2 * math.pi / len(eta)))
    assert quad == pytest.approx(series_energy(m, 0.4, 0.9, frame), rel=1e-7)


def test_series_energy_zero_data_and_leading_ratio():
    assert series_energy(3, 0.0, 0.0, EllipticFrame(0.5, 0.1, 1.0)) == 0.0
    ratios = []
    for eps in (1e-1, 1e-2, 1e-3):
        fr = EllipticFrame(0.5, eps, 1.0)
        ratios.append(series_energy(3, 0.8, 1.2, fr) / leading_energy(3, 0.8, 1.2, fr))
    assert abs(ratios[-1] - 1) < 1e-6
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)


def test_fem_energy_between_ellipses():
    rect = Rectangle(-0.5, 0.5, -0.4, 0.4)
    cfg = PoleConfiguration(0, 1, [0.0], [0.3, 0.3], 0.35)
    eps = 0.2
    mesh = generate(rect, build_crack_layout(cfg, eps, rect), 0.05, GradingSpec(ratio=0.2))
    l1 = 1.0
    val, grad = polynomial([0.0, l1], 1)
    sol = solve_Veps(mesh, SimpleNamespace(u=val, grad=grad), cfg, eps)
    # inscribed ellipse L = 0.39, circumscribed L = 0.8; FEM underestimates by its own error
    energy = lambda L: series_energy(1, 0.0, l1, EllipticFrame(0.3, eps, L))
    assert energy(0.2) < sol.norm2 < energy(0.8)
    assert sol.norm2 > 0.99 * energy(0.39)
    assert sol.E_eps == pytest.approx(-0.5 * sol.norm2, rel=1e-9)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from abclab.geometry import (RAY, SEGMENT, STUB, BlowupProfile, ConfigurationError, Disk, PoleConfiguration,
                             Rectangle, build_crack_layout, polar_angle, psi0, psi0_normal_derivative, sign_f,
                             wrap_angle)


def test_single_pole_layout_in_unit_disk():
    cfg = PoleConfiguration(1, 0, [0.0], [0.5], 0.6)
    lay = build_crack_layout(cfg, 0.5, Disk(1.0))
    ray, stub = lay.cracks
    assert ray.kind == RAY and stub.kind == STUB
    np.testing.assert_allclose(ray.start, [0, 0])
    np.testing.assert_allclose(ray.end, [-1, 0], atol=1e-12)
    np.testing.assert_allclose(stub.end, [0.25, 0], atol=1e-15)
    np.testing.assert_allclose(stub.normal, [0, 1])


def test_pair_layout_is_one_segment():
    cfg = PoleConfiguration(0, 1, [0.0], [0.5, 0.5], 0.6)
    lay = build_crack_layout(cfg, 0.5, Disk(1.0))
    assert [c.kind for c in lay.cracks] == [SEGMENT]
    seg = lay.cracks[0]
    ends = sorted([seg.start[0], seg.end[0]])
    np.testing.assert_allclose(ends, [-0.25, 0.25], atol=1e-15)
    np.testing.assert_allclose([seg.start[1], seg.end[1]], [0, 0], atol=1e-15)
    assert not lay.by_kind(RAY)


def test_collinear_solo_poles_rejected():
    with pytest.raises(ConfigurationError):
        PoleConfiguration(2, 0, [0.0, math.pi], [0.5, 0.5], 0.6)


def test_configuration_counts_checked():
    with pytest.raises(ConfigurationError):
        PoleConfiguration(1, 1, [0.0], [0.1, 0.1, 0.1], 0.5)
    with pytest.raises(ConfigurationError):
        PoleConfiguration(0, 0, [], [], 0.5)
    with pytest.raises(ConfigurationError):
        PoleConfiguration(1, 0, [0.0], [0.7], 0.5)


def test_partner_angles_and_points():
    cfg = PoleConfiguration(1, 1, [0.3, -0.5], [0.1, 0.2, 0.25], 0.5)
    np.testing.assert_allclose(cfg.all_angles(), [0.3, -0.5, -0.5 + math.pi])
    assert cfg.k == 3 and cfg.parity == 1
    p = cfg.points(0.5)
    np.testing.assert_allclose(np.hypot(p[:, 0], p[:, 1]), [0.05, 0.1, 0.125])


def test_layout_rejects_large_eps():
    cfg = PoleConfiguration(1, 0, [0.0], [0.5], 0.6)
    with pytest.raises(ConfigurationError):
        build_crack_layout(cfg, 1.5, Disk(1.0))


def test_stubs_inside_eps_R():
    cfg = PoleConfiguration(2, 1, [0.2, 1.9, -1.0], [0.3, 0.2, 0.25, 0.35], 0.4)
    eps = 0.3
    lay = build_crack_layout(cfg, eps, Rectangle(-1, 1, -1, 1))
    for c in lay.cracks:
        if c.kind != RAY:
            for p in (c.start, c.end):
                assert np.hypot(*p) <= eps * cfg.R


def test_sign_f_examples():
    t = np.array([0.0, 1.0, math.pi - 1e-9, math.pi, 4.0, 2 * math.pi - 1e-9])
    np.testing.assert_array_equal(sign_f(t, [0.0]), [1, 1, 1, -1, -1, -1])
    np.testing.assert_array_equal(sign_f(t, []), np.ones_like(t))
    pts = np.array([0.0, math.pi / 2 + 1e-9, math.pi + 1e-9, 1.5 * math.pi + 1e-9, 2 * math.pi - 1e-9])
    np.testing.assert_array_equal(sign_f(pts, [0.0, math.pi / 2, -math.pi / 2]), [1, -1, 1, -1, -1])


@given(st.lists(st.floats(-3.1, 3.1), min_size=1, max_size=5), st.floats(0, 2 * math.pi))
def test_sign_f_is_a_sign(angles, t):
    assert sign_f(t, angles) in (-1.0, 1.0)


def test_psi0_example_value():
    cfg = PoleConfiguration(1, 0, [0.0], [0.5], 0.6)
    val, _ = psi0(np.array([0.0, 1.0]), BlowupProfile(1, 1.0, 0.0), cfg)
    assert val == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


def test_psi0_vanishes_on_alpha0_ray():
    cfg = PoleConfiguration(1, 0, [0.2], [0.5], 0.6)
    prof = BlowupProfile(3, 1.7, 0.9)
    r = np.linspace(0.1, 3, 10)
    x = np.column_stack([r * math.cos(0.9), r * math.sin(0.9)])
    np.testing.assert_allclose(psi0(x, prof, cfg, gradient=False), 0.0, atol=1e-14)


def test_psi0_trace_sum_across_ray():
    cfg = PoleConfiguration(1, 0, [0.4], [0.5], 0.6)
    prof = BlowupProfile(1, 1.3, 0.25)
    a = 0.4 + math.pi
    r = np.linspace(0.05, 2.0, 10)
    e = np.column_stack([np.cos(a), np.sin(a)])
    n = np.array([-math.sin(a), math.cos(a)])
    up = psi0(r[:, None] * e + 1e-12 * n, prof, cfg, gradient=False)
    down = psi0(r[:, None] * e - 1e-12 * n, prof, cfg, gradient=False)
    np.testing.assert_allclose(up + down, 0.0, atol=1e-10)
    assert np.all(np.abs(up) > 1e-3)


def test_psi0_gradient_matches_polar_formula_on_stub():
    cfg = PoleConfiguration(1, 0, [0.7], [0.5], 0.6)
    prof = BlowupProfile(3, 2.0, 0.3)
    r = np.array([0.2, 0.5, 1.1])
    x = np.column_stack([r * math.cos(0.7), r * math.sin(0.7)])
    dn = psi0_normal_derivative(x, cfg.normal(0), prof, cfg)
    f = sign_f(0.7, cfg)
    want = 2.0 * 1.5 * r ** 0.5 * f * math.cos(1.5 * (0.7 - 0.3))
    np.testing.assert_allclose(dn, want, rtol=1e-13)


def test_psi0_gradient_undefined_at_origin():
    cfg = PoleConfiguration(1, 0, [0.0], [0.5], 0.6)
    with pytest.raises(ZeroDivisionError):
        psi0(np.zeros((1, 2)), BlowupProfile(1, 1.0, 0.0), cfg)


def test_profile_validation():
    with pytest.raises(ConfigurationError):
        BlowupProfile(2, 1.0, 0.0, odd=True)
    with pytest.raises(ConfigurationError):
        BlowupProfile(1, 1.0, 7.0)
    assert BlowupProfile(2, 1.0, 0.1, odd=False).mu == 2.0
    np.testing.assert_allclose(BlowupProfile(3, 1.0, 0.0).nodal_angles(), [0, 2 * math.pi / 3, 4 * math.pi / 3])


@settings(max_examples=40, deadline=None)
@given(st.sampled_from([1, 3, 5]), st.floats(0.1, 3.0), st.floats(0.0, 2 * math.pi - 1e-6),
       st.floats(0.05, 0.95))
def test_psi0_homogeneity(m, s, t, frac):
    cfg = PoleConfiguration(1, 0, [0.3], [0.5], 0.6)
    prof = BlowupProfile(m, 1.0, frac * 2 * math.pi / m)
    x = np.array([math.cos(t), math.sin(t)])
    v1 = psi0(s * x, prof, cfg, gradient=False)
    v0 = psi0(x, prof, cfg, gradient=False)
    assert v1 == pytest.approx(s ** (m / 2) * v0, abs=1e-12)


def test_psi0_harmonic_off_cracks():
    cfg = PoleConfiguration(3, 0, [0.0, 2 * math.pi / 3, -2 * math.pi / 3], [0.5] * 3, 0.6)
    prof = BlowupProfile(3, 1.0, 0.2)
    rng = np.random.default_rng(3)
    rays = np.mod(np.array(cfg.angles) + math.pi, 2 * math.pi)
    pts = []
    while len(pts) < 20:
        r, t = rng.uniform(0.5, 2.0), rng.uniform(0, 2 * math.pi)
        if np.min(np.abs(np.angle(np.exp(1j * (t - rays))))) > 0.1 and abs(t) > 0.05 and abs(t - 2 * math.pi) > 0.05:
            pts.append([r * math.cos(t), r * math.sin(t)])
    x = np.array(pts)
    h = 1e-3
    f = lambda y: psi0(y, prof, cfg, gradient=False)
    lap = (f(x + [h, 0]) + f(x - [h, 0]) + f(x + [0, h]) + f(x - [0, h]) - 4 * f(x)) / h ** 2
    assert np.max(np.abs(lap)) < 1e-4


def test_angle_helpers():
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert polar_angle(np.array([0.0, -1.0])) == pytest.approx(1.5 * math.pi)
    assert polar_angle(np.array([1.0, -1e-300])) < 2 * math.pi

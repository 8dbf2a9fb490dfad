"""Scalar gauge phases for the multipole Aharonov-Bohm potential.

Each pole b carries a branch-rotated polar angle theta_{b,alpha} whose cut is
the half-line from b in direction -alpha.  The alternating half-sum of these
angles is the phase Theta_eps with grad Theta_eps = sum (-1)^(j+1) A_{a^j_eps},
and its cuts run along the cracks of the layout.
"""

from __future__ import annotations

import math

import numpy as np

from .geometry import TWO_PI, PoleConfiguration

_CUT_TOL = 1e-13


class PoleError(ValueError):
    pass


def _angle(d, side: int = 1):
    """Polar angle in [0, 2 pi) of d; on the cut (angle 0) return the +side limit.

    side=+1 picks the limit 2 pi reached from below the cut ray (clockwise
    side), side=-1 picks 0.
    """
    d = np.asarray(d, float)
    t = np.mod(np.arctan2(d[..., 1], d[..., 0]), TWO_PI)
    on_cut = (t < _CUT_TOL) | (t > TWO_PI - _CUT_TOL)
    return np.where(on_cut, TWO_PI if side > 0 else 0.0, t)


def _check_off(x, b):
    if np.any(np.hypot(x[..., 0] - b[0], x[..., 1] - b[1]) == 0.0):
        raise PoleError("evaluation point coincides with a pole")


def theta_b(x, b):
    """Polar angle of x - b in [0, 2 pi), cut along {x1 >= b1, x2 = b2}."""
    x, b = np.asarray(x, float), np.asarray(b, float)
    _check_off(x, b)
    t = np.mod(np.arctan2(x[..., 1] - b[1], x[..., 0] - b[0]), TWO_PI)
    t = np.where(t >= TWO_PI, 0.0, t)
    return float(t) if t.ndim == 0 else t


def theta_b_alpha(x, b, alpha: float, side: int = 1):
    """theta_b after rotating about b by alpha: value alpha + t at b + r(cos t, sin t).

    The cut is the half-line from b in direction -alpha.  On the cut the
    value is the one-sided limit selected by ``side`` (+1: 2 pi, -1: 0).
    """
    x, b = np.asarray(x, float), np.asarray(b, float)
    _check_off(x, b)
    c, s = math.cos(alpha), math.sin(alpha)
    d = x - b
    rd = np.stack([c * d[..., 0] - s * d[..., 1], s * d[..., 0] + c * d[..., 1]], axis=-1)
    t = _angle(rd, side)
    return float(t) if t.ndim == 0 else t


def vector_potential(x, b):
    """A_b(x) = (1/2) (-(x2 - b2), x1 - b1) / |x - b|^2."""
    x, b = np.asarray(x, float), np.asarray(b, float)
    _check_off(x, b)
    d = x - b
    r2 = d[..., 0] ** 2 + d[..., 1] ** 2
    return 0.5 * np.stack([-d[..., 1], d[..., 0]], axis=-1) / r2[..., None]


def pole_signs(config: PoleConfiguration) -> np.ndarray:
    """(-1)^(j+1) for poles j = 1..k."""
    return np.array([1.0 if j % 2 == 0 else -1.0 for j in range(config.k)])


def branch_rotations(config: PoleConfiguration) -> np.ndarray:
    """alpha used by each pole: pi - a^j for solo and first pair poles, -a^j for partners."""
    ang = config.all_angles()
    split = config.k1 + config.k2
    return np.array([math.pi - a if j < split else -a for j, a in enumerate(ang)])


def multipole_potential(x, config: PoleConfiguration, eps: float):
    """Sum_j (-1)^(j+1) A_{eps a^j}(x)."""
    pts = config.points(eps)
    return sum(s * vector_potential(x, p) for s, p in zip(pole_signs(config), pts))


def Theta_eps(x, config: PoleConfiguration, eps: float, side: int = 1):
    """(1/2) sum_j (-1)^(j+1) theta_eps^j at x; cuts lie along the crack layout.

    On a cut the limit from the +nu side is returned (side=-1 for the other).
    """
    pts = config.points(eps)
    out = 0.0
    for s, p, a in zip(pole_signs(config), pts, branch_rotations(config)):
        out = out + 0.5 * s * theta_b_alpha(x, p, a, side)
    return out


def Theta_0(x, config: PoleConfiguration, side: int = 1):
    """Limit phase with cuts along the solo rays Gamma_0^j; zero when k1 = 0."""
    x = np.asarray(x, float)
    if config.k1 == 0:
        return 0.0 * x[..., 0] if x.ndim > 1 else 0.0
    out = 0.0
    for j in range(config.k1):
        s = 1.0 if j % 2 == 0 else -1.0
        out = out + 0.5 * s * theta_b_alpha(x, np.zeros(2), math.pi - config.angles[j], side)
    return out


_GL_X, _GL_W = np.polynomial.legendre.leggauss(10)


def _segment_integral(p, q, field, tol, depth=0):
    def gauss(a, b):
        t = 0.5 * (_GL_X + 1.0)
        x = a[None, :] + t[:, None] * (b - a)[None, :]
        return 0.5 * float(np.sum(_GL_W * (field(x) @ (b - a))))

    whole = gauss(p, q)
    m = 0.5 * (p + q)
    halves = gauss(p, m) + gauss(m, q)
    if abs(whole - halves) < tol or depth > 40:
        return halves
    return (_segment_integral(p, m, field, 0.5 * tol, depth + 1)
            + _segment_integral(m, q, field, 0.5 * tol, depth + 1))


def holonomy(loop, config: PoleConfiguration, eps: float, tol: float = 1e-10) -> float:
    """Circulation of the multipole potential along a closed polyline.

    Composite 10-point Gauss on each edge, panels split until refinements
    agree to ``tol``.  The result is pi times the signed winding count.
    """
    loop = np.asarray(loop, float)
    if not np.allclose(loop[0], loop[-1]):
        loop = np.vstack([loop, loop[:1]])
    pts = config.points(eps)
    for a, b in zip(loop[:-1], loop[1:]):
        d = b - a
        for p in pts:
            t = np.clip(((p - a) @ d) / (d @ d), 0.0, 1.0)
            if np.hypot(*(a + t * d - p)) == 0.0:
                raise PoleError("loop passes through a pole")
    field = lambda x: multipole_potential(x, config, eps)
    return sum(_segment_integral(a, b, field, tol / len(loop)) for a, b in zip(loop[:-1], loop[1:]))


def circle_loop(centre, radius: float, n: int = 64) -> np.ndarray:
    t = np.linspace(0.0, TWO_PI, n + 1)
    return np.asarray(centre, float) + radius * np.column_stack([np.cos(t), np.sin(t)])

"""Exact analytics for two opposite poles: elliptic coordinates and mode sums."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate

NODAL, BISECTOR = "nodal", "bisector"


class SelfCheckError(RuntimeError):
    pass


@dataclass(frozen=True)
class EllipticFrame:
    """x = eps r1 (cosh xi cos eta, sinh xi sin eta); the ellipse is xi < xi_eps."""

    r1: float
    eps: float
    L: float

    def __post_init__(self):
        if self.r1 <= 0 or self.eps <= 0 or self.L <= 0:
            raise ValueError("r1, eps and L must be positive")

    @property
    def focal(self) -> float:
        return self.eps * self.r1

    @property
    def xi_eps(self) -> float:
        return math.asinh(self.L / self.focal)

    @property
    def semi_axes(self):
        return math.sqrt(self.L ** 2 + self.focal ** 2), self.L

    def to_cartesian(self, xi, eta):
        xi, eta = np.asarray(xi, float), np.asarray(eta, float)
        return np.stack([self.focal * np.cosh(xi) * np.cos(eta),
                         self.focal * np.sinh(xi) * np.sin(eta)], axis=-1)

    def from_cartesian(self, x):
        """(xi, eta) with eta in [0, 2 pi); points on the focal segment get xi = 0."""
        z = (x[..., 0] + 1j * x[..., 1]) / self.focal
        w = np.arccosh(np.asarray(z, complex))
        return w.real, np.mod(w.imag, 2 * math.pi)


@dataclass(frozen=True)
class ModeCoefficients:
    m: int
    c: tuple     # c_0 .. c_m
    d: tuple     # d_1 .. d_m (d[0] is d_1)


def _exact_c(m: int):
    # cos^m = 2^-m sum_k C(m,k) cos((m-2k) eta)
    c = [Fraction(0)] * (m + 1)
    for j in range(m + 1):
        if (m - j) % 2:
            continue
        c[j] = Fraction(2 * math.comb(m, (m - j) // 2), 2 ** m)
    return c


def _quad_c(m: int, j: int) -> float:
    f = lambda t: math.cos(t) ** m * math.cos(j * t)
    return integrate.quad(f, 0.0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=400)[0] / math.pi


def _quad_d(m: int, j: int) -> float:
    f = lambda t: math.cos(t) ** (m - 1) * math.sin(t) * math.sin(j * t)
    return integrate.quad(f, 0.0, 2 * math.pi, epsabs=1e-13, epsrel=1e-13, limit=400)[0] / math.pi


def fourier_c(m: int, exact: bool = True, check: bool = True):
    """c_0..c_m of cos^m, as Fractions (m <= 12) or floats, cross-checked by quadrature."""
    if m < 1:
        raise ValueError("m must be >= 1")
    c = _exact_c(m)
    if check:
        for j in range(m + 1):
            q = _quad_c(m, j)
            if abs(float(c[j]) - q) > 1e-12:
                raise SelfCheckError(f"c_{j} for m={m}: expansion {float(c[j])} vs quadrature {q}")
    if exact and m <= 12:
        return c
    return [float(x) for x in c]


def fourier_d(m: int, exact: bool = True, check: bool = True):
    """d_1..d_m with d_j = (j/m) c_j, cross-checked by quadrature."""
    c = _exact_c(m)
    d = [Fraction(j, m) * c[j] for j in range(1, m + 1)]
    if check:
        for j in range(1, m + 1):
            q = _quad_d(m, j)
            if abs(float(d[j - 1]) - q) > 1e-12:
                raise SelfCheckError(f"d_{j} for m={m}: expansion {float(d[j - 1])} vs quadrature {q}")
    if exact and m <= 12:
        return d
    return [float(x) for x in d]


def mode_coefficients(m: int) -> ModeCoefficients:
    return ModeCoefficients(m, tuple(fourier_c(m)), tuple(fourier_d(m)))


def central_binomial_factor(m: int) -> int:
    return math.comb(m - 1, (m - 1) // 2) ** 2


def sums_check(m: int):
    """(sum j c_j^2, sum d_j^2 / j, closed form of each), all exact rationals."""
    c = _exact_c(m)
    d = [Fraction(j, m) * c[j] for j in range(1, m + 1)]
    s_c = sum(j * c[j] ** 2 for j in range(1, m + 1))
    s_d = sum(d[j - 1] ** 2 / j for j in range(1, m + 1))
    b = central_binomial_factor(m)
    closed_c = Fraction(m * b, 4 ** (m - 1))
    closed_d = Fraction(b, m * 4 ** (m - 1))
    if s_c != closed_c or s_d != closed_d:
        raise SelfCheckError(f"mode sums for m={m} disagree with the closed forms")
    return s_c, s_d, closed_c, closed_d


@dataclass(frozen=True)
class SeriesSolution:
    """The potential on the ellipse in elliptic coordinates (upper sheet at xi = 0 for eta in (0, pi))."""

    m: int
    l0: float
    l1: float
    frame: EllipticFrame

    def modes(self, xi):
        """(a_0(xi), [a_j(xi)], [b_j(xi)]) already scaled by (eps r1)^m."""
        xe = self.frame.xi_eps
        s = self.frame.focal ** self.m
        c = [float(x) for x in _exact_c(self.m)]
        d = [float(x) for x in fourier_d(self.m, check=False)]
        xi = np.asarray(xi, float)
        a0 = s * self.l0 * c[0] * (1.0 - xi / xe)
        a = [s * self.l0 * c[j] * np.sinh(j * (xe - xi)) / np.sinh(j * xe) for j in range(1, self.m + 1)]
        b = [-s * self.l1 * d[j - 1] / j * np.sinh(j * (xe - xi)) / np.cosh(j * xe)
             for j in range(1, self.m + 1)]
        return a0, a, b

    def __call__(self, xi, eta):
        a0, a, b = self.modes(xi)
        eta = np.asarray(eta, float)
        v = 0.5 * a0 + 0.0 * eta
        for j in range(1, self.m + 1):
            v = v + a[j - 1] * np.cos(j * eta) + b[j - 1] * np.sin(j * eta)
        return v

    def d_xi(self, xi, eta):
        xe = self.frame.xi_eps
        s = self.frame.focal ** self.m
        c = [float(x) for x in _exact_c(self.m)]
        d = [float(x) for x in fourier_d(self.m, check=False)]
        xi, eta = np.asarray(xi, float), np.asarray(eta, float)
        v = -0.5 * s * self.l0 * c[0] / xe + 0.0 * xi * eta
        for j in range(1, self.m + 1):
            v = v - s * self.l0 * c[j] * j * np.cosh(j * (xe - xi)) / np.sinh(j * xe) * np.cos(j * eta)
            v = v + s * self.l1 * d[j - 1] * np.cosh(j * (xe - xi)) / np.cosh(j * xe) * np.sin(j * eta)
        return v

    def gradient_density(self, xi, eta, h: float = 1e-6):
        """|grad V|^2 in (xi, eta); the map is conformal so this integrates to the energy."""
        dxi = (self(xi + h, eta) - self(xi - h, eta)) / (2 * h)
        deta = (self(xi, eta + h) - self(xi, eta - h)) / (2 * h)
        return dxi ** 2 + deta ** 2


def series_solution(m: int, l0: float, l1: float, frame: EllipticFrame) -> SeriesSolution:
    return SeriesSolution(m, l0, l1, frame)


def series_energy(m: int, l0: float, l1: float, frame: EllipticFrame) -> float:
    """Exact Dirichlet energy of the series potential on the ellipse."""
    c = [float(x) for x in _exact_c(m)]
    d = [float(x) for x in fourier_d(m, check=False)]
    xe = frame.xi_eps
    total = 0.5 * math.pi * l0 ** 2 * c[0] ** 2 / xe
    for j in range(1, m + 1):
        total += math.pi * (j * l0 ** 2 * c[j] ** 2 / math.tanh(j * xe)
                            + l1 ** 2 * d[j - 1] ** 2 * math.tanh(j * xe) / j)
    return frame.focal ** (2 * m) * total


def leading_energy(m: int, l0: float, l1: float, frame: EllipticFrame) -> float:
    """pi (eps r1)^2m (l0^2 sum j c_j^2 + l1^2 sum d_j^2/j)."""
    s_c, s_d, _, _ = sums_check(m)
    return math.pi * frame.focal ** (2 * m) * (l0 ** 2 * float(s_c) + l1 ** 2 * float(s_d))


def leading_coefficient(m: int, beta: float, r1: float, case: str) -> float:
    """Coefficient of eps^2m in the eigenvalue shift for two opposite poles."""
    if case not in (NODAL, BISECTOR):
        raise ValueError(f"case must be {NODAL!r} or {BISECTOR!r}")
    val = m * math.pi * beta ** 2 * r1 ** (2 * m) / 4 ** (m - 1) * central_binomial_factor(m)
    return -val if case == NODAL else val


def beta_from_taylor(partials, m: int, alpha0: float, tol: float = 1e-9) -> float:
    """Amplitude beta from the order-m partials of u0 at the collision point.

    ``partials[i]`` is d^m u0 / dx1^(m-i) dx2^i.  alpha0 must be a nodal
    tangent j pi / m or a bisector pi/(2m) + j pi / m.
    """
    x = alpha0 * m / math.pi
    j = round(x)
    if abs(x - j) < tol:
        return (-1) ** j / math.factorial(m) * partials[1]
    j = round(x - 0.5)
    if abs(x - 0.5 - j) < tol:
        return (-1) ** (j + 1) / math.factorial(m) * partials[0]
    raise ValueError("alpha0 is neither a nodal tangent nor a bisector direction")


def taylor_coefficients(partials, m: int):
    """l_i = partials[i] / ((m-i)! i!), so P_m = sum l_i x1^(m-i) x2^i."""
    return [partials[i] / (math.factorial(m - i) * math.factorial(i)) for i in range(m + 1)]


def polynomial(l, m: int):
    """Homogeneous polynomial sum l_i x1^(m-i) x2^i with its gradient."""
    l = list(l) + [0.0] * (m + 1 - len(l))

    def val(x):
        x = np.asarray(x, float)
        return sum(l[i] * x[..., 0] ** (m - i) * x[..., 1] ** i for i in range(m + 1))

    def grad(x):
        x = np.asarray(x, float)
        gx = sum(l[i] * (m - i) * x[..., 0] ** max(m - i - 1, 0) * x[..., 1] ** i
                 for i in range(m))
        gy = sum(l[i] * i * x[..., 0] ** (m - i) * x[..., 1] ** max(i - 1, 0) for i in range(1, m + 1))
        return np.stack([gx + 0.0 * x[..., 0], gy + 0.0 * x[..., 0]], axis=-1)

    return val, grad

"""Closed-form reference eigenpairs: Dirichlet rectangles and disk Bessel zeros."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import Decimal, getcontext, localcontext

import numpy as np


@dataclass(frozen=True)
class AnalyticEigenpair:
    """Dirichlet mode (2/sqrt(ab)) sin(p pi (x-x0)/a) sin(q pi (y-y0)/b)."""

    lam: float
    p: int
    q: int
    a: float
    b: float
    origin: tuple = (0.0, 0.0)

    @property
    def norm(self) -> float:
        return 2.0 / math.sqrt(self.a * self.b)

    @property
    def wavenumbers(self):
        return self.p * math.pi / self.a, self.q * math.pi / self.b

    def u(self, x):
        x = np.asarray(x, float)
        kx, ky = self.wavenumbers
        return self.norm * np.sin(kx * (x[..., 0] - self.origin[0])) * np.sin(ky * (x[..., 1] - self.origin[1]))

    def grad(self, x):
        x = np.asarray(x, float)
        kx, ky = self.wavenumbers
        X, Y = kx * (x[..., 0] - self.origin[0]), ky * (x[..., 1] - self.origin[1])
        return self.norm * np.stack([kx * np.cos(X) * np.sin(Y), ky * np.sin(X) * np.cos(Y)], axis=-1)

    def partials(self, x, order: int):
        """[d^order u / dx1^(order-i) dx2^i at x for i = 0..order]."""
        kx, ky = self.wavenumbers
        X, Y = kx * (x[0] - self.origin[0]), ky * (x[1] - self.origin[1])
        return [self.norm * kx ** (order - i) * math.sin(X + (order - i) * math.pi / 2)
                * ky ** i * math.sin(Y + i * math.pi / 2) for i in range(order + 1)]


def rectangle_mode(a: float, b: float, p: int, q: int, origin=(0.0, 0.0)) -> AnalyticEigenpair:
    lam = math.pi ** 2 * (p * p / (a * a) + q * q / (b * b))
    return AnalyticEigenpair(lam, p, q, a, b, tuple(origin))


def rectangle_modes(a: float, b: float, count: int, origin=(0.0, 0.0), gap: float = 1e-3):
    """The ``count`` lowest Dirichlet eigenpairs of a rectangle, ascending.

    Raises ValueError if a listed eigenvalue is within ``gap`` (relative) of
    a neighbour, since the experiments need simple eigenvalues.
    """
    n = count + 2
    cand = sorted((math.pi ** 2 * (p * p / (a * a) + q * q / (b * b)), p, q)
                  for p in range(1, n + 1) for q in range(1, n + 1))
    lams = [c[0] for c in cand]
    modes = []
    for i in range(count):
        lam, p, q = cand[i]
        near = [lams[j] for j in (i - 1, i + 1) if 0 <= j < len(lams)]
        if any(abs(lam - x) < gap * lam for x in near):
            raise ValueError(f"eigenvalue {i + 1} (mode {p},{q}) is degenerate")
        modes.append(rectangle_mode(a, b, p, q, origin))
    return modes


def _bessel_series(nu: Decimal, x: Decimal) -> Decimal:
    """x^-nu J_nu(x) up to the positive factor 2^-nu / Gamma(nu + 1)."""
    q = x * x / 4
    term = Decimal(1)
    total = Decimal(1)
    k = 0
    while True:
        k += 1
        term = -term * q / (k * (nu + k))
        total += term
        if abs(term) < Decimal(10) ** (-(getcontext().prec - 5)) * max(abs(total), Decimal(1)):
            return total


def bessel_zero(nu: float, n: int, digits: int = 60) -> float:
    """n-th positive zero of J_nu by sign scan plus bisection on the power series.

    The series is summed in decimal arithmetic so cancellation at large x
    does not cost accuracy.
    """
    if nu < 0 or n < 1:
        raise ValueError("need nu >= 0 and n >= 1")
    with localcontext() as ctx:
        ctx.prec = digits + int(2 * (n + nu))
        dnu = Decimal(repr(float(nu)))
        f = lambda x: _bessel_series(dnu, Decimal(repr(x)))
        # zeros are spaced by about pi; step well below that
        step = 0.25
        x, fx, found = 1e-3, f(1e-3), 0
        while True:
            y = x + step
            fy = f(y)
            if (fx > 0) != (fy > 0):
                found += 1
                if found == n:
                    break
            x, fx = y, fy
        lo, hi = Decimal(repr(x)), Decimal(repr(y))
        flo = fx
        for _ in range(200):
            mid = (lo + hi) / 2
            fm = _bessel_series(dnu, mid)
            if (fm > 0) == (flo > 0):
                lo, flo = mid, fm
            else:
                hi = mid
            if hi - lo < Decimal(10) ** -30:
                break
        return float((lo + hi) / 2)

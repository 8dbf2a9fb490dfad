"""Power-law fits of eigenvalue shifts and Richardson extrapolation."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class AsymptoticFit:
    exponent: float
    coefficient: float     # signed: delta ~ coefficient * eps^exponent
    sign: int
    residual: float        # rms of the log-log regression
    used: tuple            # eps values that entered the fit
    rejected: tuple        # eps values dropped at the noise floor


def fit_rate(points, noise: float = 0.0, min_points: int = 3) -> AsymptoticFit:
    """Least squares on (log eps, log |delta|) for points (eps, delta).

    Points with |delta| <= noise are rejected first.  All remaining deltas
    must share one sign.
    """
    pts = [(float(e), float(d)) for e, d in points]
    kept = [(e, d) for e, d in pts if abs(d) > noise and e > 0]
    rejected = tuple(e for e, d in pts if not (abs(d) > noise and e > 0))
    if len(kept) < min_points:
        raise FitError(f"{len(kept)} usable points (rejected at the noise floor: {rejected})")
    signs = {math.copysign(1, d) for _, d in kept}
    if len(signs) > 1:
        raise FitError("deltas change sign: " + ", ".join(f"({e:g}, {d:.3e})" for e, d in kept))
    x = np.log([e for e, _ in kept])
    y = np.log([abs(d) for _, d in kept])
    A = np.column_stack([x, np.ones_like(x)])
    (p, c), *_ = np.linalg.lstsq(A, y, rcond=None)
    res = float(np.sqrt(np.mean((A @ np.array([p, c]) - y) ** 2)))
    s = int(signs.pop())
    return AsymptoticFit(float(p), s * math.exp(c), s, res, tuple(e for e, _ in kept), rejected)


def richardson(lam_h: float, lam_h2: float, order: float = 2.0) -> float:
    """(2^order lam_{h/2} - lam_h) / (2^order - 1)."""
    f = 2.0 ** order
    return (f * lam_h2 - lam_h) / (f - 1.0)


def aitken_limit(values) -> float:
    """Delta-squared limit of the last three terms; the last term if they do not contract."""
    v = [float(x) for x in values]
    if len(v) < 3:
        return v[-1]
    a, b, c = v[-3:]
    den = (c - b) - (b - a)
    if den == 0 or (c - b) * (b - a) <= 0:
        return c
    return c - (c - b) ** 2 / den


def is_cauchy(values, rtol: float = 0.15) -> bool:
    """Successive relative increments shrink and the last is below rtol."""
    v = np.asarray(values, float)
    if len(v) < 3:
        return False
    inc = np.abs(np.diff(v)) / np.maximum(np.abs(v[1:]), 1e-300)
    return bool(np.all(inc[1:] <= inc[:-1] * (1 + 1e-9)) and inc[-1] < rtol)

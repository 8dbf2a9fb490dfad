"""Pole configurations, crack layouts, the angular sign function and the blow-up profile."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi
COLLINEAR_TOL = 1e-12


class ConfigurationError(ValueError):
    """Raised for invalid pole configurations or crack layouts."""


def wrap_angle(a):
    """Map angles to (-pi, pi]."""
    a = np.mod(np.asarray(a, dtype=float) + math.pi, TWO_PI) - math.pi
    a = np.where(a <= -math.pi, a + TWO_PI, a)
    return float(a) if a.ndim == 0 else a


def polar_angle(x):
    """Polar angle of points in [0, 2*pi)."""
    x = np.asarray(x, dtype=float)
    t = np.arctan2(x[..., 1], x[..., 0])
    t = np.where(t < 0.0, t + TWO_PI, t)
    # arctan2 can round -tiny to 2*pi exactly
    return np.where(t >= TWO_PI, 0.0, t)


@dataclass(frozen=True)
class PoleConfiguration:
    """Poles a^j = r_j (cos a_j, sin a_j) collapsing to the origin.

    ``angles`` lists the k1 solo angles followed by the k2 pair angles; each
    pair angle lies in (-pi, 0] and has an implicit partner at angle + pi.
    ``radii`` has k1 + 2*k2 entries: solo radii, pair radii, partner radii.
    """

    k1: int
    k2: int
    angles: tuple
    radii: tuple
    R: float

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(float(a) for a in self.angles))
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        k1, k2 = self.k1, self.k2
        if k1 < 0 or k2 < 0 or (k1, k2) == (0, 0):
            raise ConfigurationError("need k1, k2 >= 0 and (k1, k2) != (0, 0)")
        if len(self.angles) != k1 + k2:
            raise ConfigurationError(f"expected {k1 + k2} angles, got {len(self.angles)}")
        if len(self.radii) != k1 + 2 * k2:
            raise ConfigurationError(f"expected {k1 + 2 * k2} radii, got {len(self.radii)}")
        for a in self.angles[:k1]:
            if not (-math.pi < a <= math.pi):
                raise ConfigurationError(f"solo angle {a} outside (-pi, pi]")
        for a in self.angles[k1:]:
            if not (-math.pi < a <= 0.0):
                raise ConfigurationError(f"pair angle {a} outside (-pi, 0]")
        if any(r <= 0.0 for r in self.radii):
            raise ConfigurationError("radii must be positive")
        if not all(r < self.R for r in self.radii):
            raise ConfigurationError("all radii must be below the containment radius R")
        solo = self.angles[:k1]
        for i in range(k1):
            for j in range(i + 1, k1):
                if abs(math.sin(solo[i] - solo[j])) < COLLINEAR_TOL:
                    raise ConfigurationError(
                        f"solo poles {i + 1} and {j + 1} are collinear through the origin")

    @property
    def k(self) -> int:
        return self.k1 + 2 * self.k2

    @property
    def parity(self) -> int:
        return self.k % 2

    def all_angles(self) -> np.ndarray:
        """Angles of all k poles, partners appended as pair angle + pi."""
        a = list(self.angles)
        a += [x + math.pi for x in self.angles[self.k1:]]
        return np.array(a)

    def points(self, eps: float = 1.0) -> np.ndarray:
        """Pole positions eps * a^j, shape (k, 2)."""
        a = self.all_angles()
        r = np.array(self.radii)
        return eps * np.column_stack([r * np.cos(a), r * np.sin(a)])

    def normal(self, j: int) -> np.ndarray:
        """Crack normal (-sin a_j, cos a_j) for pole index j < k1 + k2."""
        a = self.angles[j]
        return np.array([-math.sin(a), math.cos(a)])

    def rotated(self, zeta: float) -> "PoleConfiguration":
        """All solo angles rotated by zeta (pairs are not rotated)."""
        if self.k2:
            raise ConfigurationError("rotation is only defined for solo configurations")
        return PoleConfiguration(self.k1, 0, [wrap_angle(a + zeta) for a in self.angles],
                                 self.radii, self.R)


# --- domains -----------------------------------------------------------------

@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned rectangle in coordinates centred at the collision point."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def corners(self) -> np.ndarray:
        return np.array([[self.xmin, self.ymin], [self.xmax, self.ymin],
                         [self.xmax, self.ymax], [self.xmin, self.ymax]])

    def outer_polygon(self, h: float) -> np.ndarray:
        return self.corners()

    def holes(self):
        return []

    def area(self, h: float | None = None) -> float:
        return (self.xmax - self.xmin) * (self.ymax - self.ymin)

    def inradius(self) -> float:
        return min(-self.xmin, self.xmax, -self.ymin, self.ymax)

    def contains(self, p) -> bool:
        return self.xmin < p[0] < self.xmax and self.ymin < p[1] < self.ymax


@dataclass(frozen=True)
class Ellipse:
    """Polygonal ellipse with semi-axes a (along x) and b, centred at the origin."""

    a: float
    b: float
    n_boundary: int | None = None

    def boundary_count(self, h: float) -> int:
        if self.n_boundary:
            return int(self.n_boundary)
        per = math.pi * (3 * (self.a + self.b) - math.sqrt((3 * self.a + self.b) * (self.a + 3 * self.b)))
        return max(16, int(math.ceil(per / h)))

    def outer_polygon(self, h: float) -> np.ndarray:
        n = self.boundary_count(h)
        t = TWO_PI * np.arange(n) / n
        return np.column_stack([self.a * np.cos(t), self.b * np.sin(t)])

    def holes(self):
        return []

    def area(self, h: float):
        return polygon_area(self.outer_polygon(h))

    def inradius(self) -> float:
        return min(self.a, self.b)

    def contains(self, p) -> bool:
        return (p[0] / self.a) ** 2 + (p[1] / self.b) ** 2 < 1.0


def Disk(radius: float = 1.0, n_boundary: int | None = None) -> Ellipse:
    return Ellipse(radius, radius, n_boundary)


@dataclass(frozen=True)
class Annulus:
    """Polygonal annulus r_in < |x| < r_out."""

    r_in: float
    r_out: float
    n_boundary: int | None = None

    def _count(self, r: float, h: float) -> int:
        if self.n_boundary:
            return int(self.n_boundary)
        return max(16, int(math.ceil(TWO_PI * r / h)))

    def outer_polygon(self, h: float) -> np.ndarray:
        n = self._count(self.r_out, h)
        t = TWO_PI * np.arange(n) / n
        return self.r_out * np.column_stack([np.cos(t), np.sin(t)])

    def inner_polygon(self, h: float) -> np.ndarray:
        n = self._count(self.r_in, h)
        t = TWO_PI * np.arange(n) / n
        return self.r_in * np.column_stack([np.cos(t), np.sin(t)])

    def holes(self):
        return [(0.0, 0.0)]

    def area(self, h: float):
        return polygon_area(self.outer_polygon(h)) - polygon_area(self.inner_polygon(h))

    def inradius(self) -> float:
        return 0.0

    def contains(self, p) -> bool:
        return self.r_in < math.hypot(p[0], p[1]) < self.r_out


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def ray_polygon_exit(poly: np.ndarray, start: np.ndarray, direction: np.ndarray):
    """First intersection of the ray start + t*direction (t > 0) with a closed polygon.

    Returns (point, edge index, edge parameter).
    """
    best = None
    n = len(poly)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        e = q - p
        den = direction[0] * (-e[1]) - direction[1] * (-e[0])
        if abs(den) < 1e-300:
            continue
        rhs = p - start
        t = (rhs[0] * (-e[1]) - rhs[1] * (-e[0])) / den
        s = (direction[0] * rhs[1] - direction[1] * rhs[0]) / den
        if t > 1e-14 and -1e-12 <= s <= 1.0 + 1e-12 and (best is None or t < best[0]):
            best = (t, i, min(max(s, 0.0), 1.0))
    if best is None:
        raise ConfigurationError("ray does not leave the domain")
    t, i, s = best
    return start + t * direction, i, s


# --- crack layouts -------------------------------------------------------------

RAY, STUB, SEGMENT = "ray", "stub", "segment"


@dataclass(frozen=True)
class Crack:
    """One straight crack: a polyline start -> end with a fixed normal.

    ``breaks`` are interior points that must become mesh vertices (used for
    nested stub ladders on a single mesh).
    """

    id: int
    kind: str
    pole: int
    start: np.ndarray
    end: np.ndarray
    normal: np.ndarray
    breaks: tuple = ()

    def length(self) -> float:
        return float(np.hypot(*(self.end - self.start)))


@dataclass(frozen=True)
class CrackLayout:
    cracks: tuple
    tips: tuple
    eps: float
    config: PoleConfiguration | None = None
    grading_points: tuple = field(default=())

    def by_kind(self, kind):
        return [c for c in self.cracks if c.kind == kind]

    @property
    def has_origin(self) -> bool:
        # rays start at 0, pair segments pass through it
        return any((c.kind != RAY or np.hypot(*c.start) == 0.0) for c in self.cracks)


def _segments_cross(p1, p2, q1, q2, tol=1e-12):
    """True if closed segments p1p2 and q1q2 share a point other than the origin."""
    def cross(a, b):
        return a[0] * b[1] - a[1] * b[0]
    r, s = p2 - p1, q2 - q1
    den = cross(r, s)
    scale = max(np.hypot(*r), np.hypot(*s), 1e-300)
    if abs(den) < tol * scale * scale:
        if abs(cross(q1 - p1, r)) > tol * scale * scale:
            return False
        # collinear: project onto r and test overlap of positive length
        rr = float(r @ r)
        t0, t1 = sorted([float((q1 - p1) @ r) / rr, float((q2 - p1) @ r) / rr])
        lo, hi = max(0.0, t0), min(1.0, t1)
        return hi - lo > tol
    t = cross(q1 - p1, s) / den
    u = cross(q1 - p1, r) / den
    if -tol <= t <= 1 + tol and -tol <= u <= 1 + tol:
        x = p1 + t * r
        return np.hypot(*x) > 1e-12 * scale
    return False


def build_crack_layout(config: PoleConfiguration, eps: float, domain,
                       breaks=()) -> CrackLayout:
    """Rays, stubs and pair segments of the configuration at scale eps.

    eps = 0 gives the limit layout (solo rays only).  ``breaks`` lists smaller
    scales whose stub endpoints become interior crack vertices.
    """
    if eps < 0.0 or eps > 1.0:
        raise ConfigurationError("eps must lie in [0, 1]")
    if eps * max(config.radii) >= config.R:
        raise ConfigurationError("eps * max r_j must stay below R")
    if not isinstance(domain, Annulus) and domain.inradius() < config.R:
        raise ConfigurationError("domain must contain the disk of radius R")
    outer = domain.outer_polygon(1.0 if isinstance(domain, Rectangle) else 1e-2)
    cracks, tips = [], []
    origin = np.zeros(2)
    pts = config.points(eps)
    brk = sorted(b for b in breaks if 0.0 < b < eps)
    for j in range(config.k1):
        a = config.angles[j]
        nu = config.normal(j)
        d = np.array([math.cos(a + math.pi), math.sin(a + math.pi)])
        if isinstance(domain, Annulus):
            start = domain.r_in * d
            end = domain.r_out * d
        else:
            start = origin
            if isinstance(domain, Rectangle):
                end, _, _ = ray_polygon_exit(outer, origin, d)
            else:
                # exact exit through the ellipse, snapped later onto the polygon
                t = 1.0 / math.sqrt((d[0] / domain.a) ** 2 + (d[1] / domain.b) ** 2)
                end = t * d
        cracks.append(Crack(len(cracks), RAY, j, start, end, nu))
    for j in range(config.k1):
        if eps > 0.0:
            tip = pts[j]
            b = tuple(config.points(e)[j] for e in brk)
            cracks.append(Crack(len(cracks), STUB, j, origin, tip, config.normal(j), b))
            tips.append(tip)
    for i in range(config.k2):
        j = config.k1 + i
        partner = config.k1 + config.k2 + i
        if eps > 0.0:
            p, q = pts[partner], pts[j]
            b = tuple(config.points(e)[partner] for e in reversed(brk)) + \
                tuple(config.points(e)[j] for e in brk)
            cracks.append(Crack(len(cracks), SEGMENT, j, p, q, config.normal(j), b))
            tips.extend([p, q])
    for c1 in range(len(cracks)):
        for c2 in range(c1 + 1, len(cracks)):
            a, b = cracks[c1], cracks[c2]
            if _segments_cross(a.start, a.end, b.start, b.end):
                raise ConfigurationError(
                    f"cracks {a.id} ({a.kind}) and {b.id} ({b.kind}) intersect off the origin")
    return CrackLayout(tuple(cracks), tuple(tips), eps, config)


def interior_crack_layout(cracks, tips=()) -> CrackLayout:
    """Layout from explicit segments (tests and synthetic problems)."""
    return CrackLayout(tuple(cracks), tuple(np.asarray(t, float) for t in tips), 0.0, None)


# --- sign function and profiles ---------------------------------------------------

def sign_f(t, config):
    """Product over solo poles of (-1)^{chi_[a_j + pi, 2 pi)}(t), t in [0, 2 pi].

    ``config`` is a PoleConfiguration or a plain sequence of solo angles.
    """
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    solo = config.angles[:config.k1] if isinstance(config, PoleConfiguration) else config
    for a in solo:
        flip = np.mod(a + math.pi, TWO_PI)
        if flip == 0.0:
            flip = TWO_PI
        out = np.where((t >= flip) & (t < TWO_PI), -out, out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BlowupProfile:
    """Homogeneous profile beta r^mu f(t) sin(mu (t - alpha0)).

    mu = m/2 when the total pole count is odd, mu = m when it is even.
    """

    m: int
    beta: float
    alpha0: float
    odd: bool = True

    @property
    def mu(self) -> float:
        return self.m / 2.0 if self.odd else float(self.m)

    def __post_init__(self):
        if self.m < 0 or (self.odd and self.m % 2 == 0):
            raise ConfigurationError("odd profiles need a positive odd m")
        period = TWO_PI / self.m if self.odd else (math.pi / self.m if self.m else TWO_PI)
        if not (0.0 <= self.alpha0 < period + 1e-14):
            raise ConfigurationError(f"alpha0 must lie in [0, {period})")

    def nodal_angles(self) -> np.ndarray:
        """Angles of the nodal rays in [0, 2 pi)."""
        if self.m == 0:
            return np.array([])
        n = self.m if self.odd else 2 * self.m
        return np.mod(self.alpha0 + np.arange(n) * math.pi / self.mu, TWO_PI)


def psi0(x, profile: BlowupProfile, config: PoleConfiguration, gradient: bool = True):
    """Value (and gradient) of the blow-up profile at points x (..., 2)."""
    x = np.asarray(x, dtype=float)
    r = np.hypot(x[..., 0], x[..., 1])
    t = polar_angle(x)
    mu = profile.mu
    f = sign_f(t, config)
    ph = mu * (t - profile.alpha0)
    val = profile.beta * r ** mu * f * np.sin(ph)
    if not gradient:
        return val
    if np.any(r == 0.0):
        raise ZeroDivisionError("gradient of the profile is undefined at the origin")
    dr = profile.beta * mu * r ** (mu - 1.0) * f * np.sin(ph)
    dt = profile.beta * mu * r ** (mu - 1.0) * f * np.cos(ph)  # (1/r) d/dt
    c, s = np.cos(t), np.sin(t)
    g = np.stack([dr * c - dt * s, dr * s + dt * c], axis=-1)
    return val, g


def psi0_normal_derivative(x, crack_normal, profile: BlowupProfile, config: PoleConfiguration):
    """Derivative of the profile along a crack normal at crack points x."""
    _, g = psi0(x, profile, config)
    return g @ np.asarray(crack_normal, dtype=float)

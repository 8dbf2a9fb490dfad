"""Limit and perturbed cracked eigenproblems and local expansions of eigenfunctions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .fem import ANTI, CONT, DiscreteField, assemble, jump_constraints, reduce_constraints
from .geometry import RAY, SEGMENT, STUB, PoleConfiguration, sign_f
from .linalg import EigenRequest, eigs_shift_invert
from .mesh import CrackedMesh

SIMPLICITY_GAP = 1e-3


class DegenerateEigenvalueError(RuntimeError):
    pass


@dataclass
class EigenSolution:
    index: int             # 1-based position in the spectrum
    lam: float
    field: DiscreteField
    residual: float
    gap: float             # relative distance to the nearest computed neighbour
    simple: bool


@dataclass
class EigenProblem:
    """Matrices of one mesh, shared by every constraint set placed on it."""

    mesh: CrackedMesh
    K: object = None
    M: object = None
    dirichlet: np.ndarray | None = None

    def __post_init__(self):
        if self.K is None:
            self.K, self.M = assemble(self.mesh)
        if self.dirichlet is None:
            self.dirichlet = self.mesh.boundary_nodes()


def _problem(mesh_or_problem) -> EigenProblem:
    if isinstance(mesh_or_problem, EigenProblem):
        return mesh_or_problem
    return EigenProblem(mesh_or_problem)


def limit_modes(crack, midpoint):
    """Rays carry the limit jump condition; stubs and segments are glued."""
    return ANTI if crack.kind == RAY else CONT


def perturbed_modes(config: PoleConfiguration | None, eps: float):
    """ANTI on rays and on the part of each stub or segment inside eps * r_j."""
    def pick(crack, midpoint):
        if crack.kind == RAY:
            return ANTI
        if config is None:
            return ANTI
        r = np.hypot(*midpoint)
        if crack.kind == STUB:
            reach = eps * config.radii[crack.pole]
        else:
            a = config.angles[crack.pole]
            forward = midpoint @ np.array([math.cos(a), math.sin(a)]) > 0
            j = crack.pole if forward else crack.pole + config.k2
            reach = eps * config.radii[j]
        return ANTI if r < reach * (1 + 1e-12) else CONT
    return pick


def solve_modes(problem, modes, nev: int = 4, tol: float = 1e-10, sigma: float = 0.0,
                tag: str = "", gap: float = SIMPLICITY_GAP):
    prob = _problem(problem)
    cs = jump_constraints(prob.mesh, modes)
    red = reduce_constraints(prob.mesh.n, cs, prob.dirichlet)
    res = eigs_shift_invert(red.reduce_matrix(prob.K), red.reduce_matrix(prob.M),
                            EigenRequest(sigma=sigma, nev=nev + 1, tol=tol))
    vals = res.values
    first = res.below_shift if res.below_shift >= 0 else 0
    out = []
    for i in range(min(nev, len(res))):
        u = red.expand(res[i].vector)
        nb = [abs(vals[i] - vals[j]) / abs(vals[i]) for j in (i - 1, i + 1) if 0 <= j < len(vals)]
        g = min(nb) if nb else math.inf
        out.append(EigenSolution(first + i + 1, res[i].value, DiscreteField(prob.mesh, u, tag),
                                 res[i].residual, g, g > gap))
    return out, red


def solve_limit(mesh, config: PoleConfiguration | None = None, nev: int = 4, tol: float = 1e-10):
    """Eigenpairs with ANTI on the rays and continuity across stubs and segments."""
    sols, _ = solve_modes(mesh, limit_modes, nev, tol, tag="limit")
    return sols


def solve_perturbed(mesh, config: PoleConfiguration | None, eps: float, nev: int = 4,
                    tol: float = 1e-10, reference: DiscreteField | None = None):
    """Eigenpairs with ANTI on the rays and on the stubs and segments up to eps.

    With ``reference`` each eigenvector is signed so that its mass product
    with the reference field is positive.
    """
    prob = _problem(mesh)
    sols, _ = solve_modes(prob, perturbed_modes(config, eps), nev, tol, tag=f"perturbed eps={eps:g}")
    if reference is not None:
        for s in sols:
            if s.field.values @ (prob.M @ reference.values) < 0:
                s.field.values = -s.field.values
    return sols


def require_simple(sols, index: int) -> EigenSolution:
    """The solution with 1-based ``index``; raises if it is numerically degenerate."""
    for s in sols:
        if s.index == index:
            if not s.simple:
                raise DegenerateEigenvalueError(
                    f"eigenvalue {index} ({s.lam:.6g}) has relative gap {s.gap:.1e}")
            return s
    raise IndexError(f"eigenvalue {index} was not computed")


# --- local expansion ---------------------------------------------------------------

@dataclass
class LocalExpansion:
    m: int
    beta: float
    alpha0: float
    residual: float
    radii: tuple
    odd: bool
    exponent: float                 # fitted homogeneity from the amplitude ratio
    conclusive: bool = True
    amplitudes: dict = field(default_factory=dict)

    @property
    def mu(self) -> float:
        return self.m / 2.0 if self.odd else float(self.m)


def _candidates(odd: bool):
    return [1, 3, 5, 7] if odd else [0, 1, 2, 3, 4, 5, 6]


def _harmonic_fit(t, g, mus):
    """Least-squares coefficients of g on {sin(mu t), cos(mu t)} for each mu."""
    cols = []
    for mu in mus:
        cols.append(np.sin(mu * t))
        cols.append(np.cos(mu * t))
    B = np.column_stack(cols)
    coef, *_ = np.linalg.lstsq(B, g, rcond=None)
    resid = g - B @ coef
    return coef.reshape(-1, 2), resid


def fit_profile(samples, radii, odd: bool, angles, lam: float | None = None,
                tol: float = 0.05, centre_angles=None):
    """Fit beta f(t) sin(mu (t - alpha0)) to values sampled on circles.

    ``samples[i]`` holds values at polar angles ``angles`` on the circle of
    radius ``radii[i]``; ``centre_angles`` are the solo angles defining f.
    With ``lam`` the radial profile J_mu(sqrt(lam) r) replaces r^mu.
    """
    ms = _candidates(odd)
    mus = [m / 2.0 if odd else float(m) for m in ms]
    # include higher harmonics so they do not leak into the fitted ones
    extra = [mus[-1] + k for k in (1, 2, 3, 4)]
    f = sign_f(angles, centre_angles) if centre_angles else np.ones_like(angles)
    fits = []
    for g in samples:
        coef, resid = _harmonic_fit(angles, f * g, mus + extra)
        fits.append((coef, resid, float(np.sqrt(np.mean(g * g)))))
    amp = {m: [float(np.hypot(*fits[i][0][k])) for i in range(len(radii))] for k, m in enumerate(ms)}
    inner = fits[0]
    scale = max(inner[2], 1e-300)
    # lowest mode whose amplitude is significant on the smallest circle
    picked = None
    for k, m in enumerate(ms):
        if amp[m][0] > 0.05 * scale:
            picked = (k, m)
            break
    if picked is None:
        return LocalExpansion(-1, 0.0, 0.0, math.inf, tuple(radii), odd, math.nan, False, amp)
    k, m = picked
    mu = mus[k]
    if len(radii) > 1 and amp[m][0] > 0 and amp[m][-1] > 0:
        expo = math.log(amp[m][-1] / amp[m][0]) / math.log(radii[-1] / radii[0])
    else:
        expo = math.nan
    A, B = inner[0][k]
    # beta sin(mu (t - a0)) = beta cos(mu a0) sin(mu t) - beta sin(mu a0) cos(mu t)
    if m == 0:
        alpha0, beta = 0.0, B
    else:
        ph = math.atan2(-B, A) % math.pi
        if not odd and ph > math.pi - 1e-3:
            # alpha0 just below the period end is alpha0 = 0 with beta flipped
            ph -= math.pi
        alpha0 = ph / mu
        c = math.cos(ph)
        beta = A / c if abs(c) > 0.5 else -B / math.sin(ph)
    fit_model = np.zeros_like(angles)
    fit_model += (A * np.sin(mu * angles) + B * np.cos(mu * angles))
    rel = float(np.sqrt(np.mean((f * samples[0] - fit_model) ** 2)) / scale)
    r0 = radii[0]
    if m == 0:
        radial = special.jv(0, math.sqrt(lam) * r0) if lam else 1.0
    elif lam:
        radial = special.gamma(mu + 1) * (2.0 / math.sqrt(lam)) ** mu * special.jv(mu, math.sqrt(lam) * r0)
    else:
        radial = r0 ** mu
    beta = beta / radial
    homog_ok = m == 0 or (not math.isnan(expo) and abs(expo - mu) < max(0.15 * mu, 0.1))
    conclusive = homog_ok and rel < tol
    return LocalExpansion(m, float(beta), float(alpha0), rel, tuple(radii), odd, expo, conclusive, amp)


def extract_local_expansion(field_: DiscreteField, parity: int, radii, config: PoleConfiguration | None = None,
                            lam: float | None = None, n_angles: int = 256, centre=(0.0, 0.0),
                            tol: float = 0.05) -> LocalExpansion:
    """Fit (m, beta, alpha0) of a field near the collision point.

    Values are interpolated P1-exactly on circles of the given radii; the
    smallest radius fixes beta and alpha0, the ratio across radii certifies
    the exponent.
    """
    odd = bool(parity % 2)
    t = (np.arange(n_angles) + 0.5) * (2 * math.pi / n_angles) + 1e-3
    solo = list(config.angles[:config.k1]) if config is not None else []
    c = np.asarray(centre, float)
    samples = []
    for r in radii:
        x = c + r * np.column_stack([np.cos(t), np.sin(t)])
        samples.append(field_(x))
    return fit_profile(samples, list(radii), odd, t, lam, tol, solo)


# --- eigenfunction rate --------------------------------------------------------

@dataclass
class RateDiagnostic:
    eps: tuple
    scaled: tuple
    limit: float
    trend: str


def eigenfunction_rate(v_eps, v0, m: int, eps_list, K=None, mu: float | None = None) -> RateDiagnostic:
    """eps^-mu ||v_eps - v0|| in the energy norm, with mu = m/2 by default.

    ``v_eps`` and ``v0`` are lists of aligned fields on matching meshes (one
    pair per eps) or a single v0 shared by all.
    """
    mu = m / 2.0 if mu is None else mu
    if not isinstance(v0, (list, tuple)):
        v0 = [v0] * len(v_eps)
    vals = []
    for e, ve, vz in zip(eps_list, v_eps, v0):
        Km = K if K is not None else assemble(ve.mesh)[0]
        d = ve.values - vz.values
        vals.append(math.sqrt(max(float(d @ (Km @ d)), 0.0)) / e ** mu)
    vals = tuple(vals)
    if len(vals) >= 3 and all(v > 0 for v in vals):
        a, b, c = vals[-3:]
        den = (c - b) - (b - a)
        limit = c - (c - b) ** 2 / den if abs(den) > 1e-14 * abs(c) and (c - b) * (b - a) > 0 else c
    else:
        limit = vals[-1] if vals else math.nan
    diffs = np.diff(vals)
    trend = "stabilizing" if len(diffs) > 1 and abs(diffs[-1]) <= abs(diffs[0]) else "drifting"
    if all(v == 0 for v in vals):
        trend = "zero"
    return RateDiagnostic(tuple(eps_list), vals, float(limit), trend)

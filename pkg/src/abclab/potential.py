"""Crack potentials: V_eps and its energy, the blow-up problem, the rotation scan G and Hardy quotients."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .fem import (AFFINE, ANTI, CONT, DiscreteField, Reduction, assemble, consistent_crack_load,
                  crack_load_Leps, jump_constraints, reduce_constraints, weighted_mass)
from .geometry import (RAY, SEGMENT, STUB, Annulus, BlowupProfile, ConfigurationError, Crack, Disk,
                       PoleConfiguration, build_crack_layout, interior_crack_layout, psi0)
from .linalg import EigenRequest, eigs_shift_invert, factorize
from .mesh import CrackedMesh, GradingSpec, generate
from .spectrum import perturbed_modes

_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


class ExtrapolationError(RuntimeError):
    pass


class NoSignChangeError(RuntimeError):
    pass


@dataclass
class PotentialSolution:
    V: DiscreteField
    E_eps: float               # J_eps(V) = 1/2 ||V||^2 + L_eps(V)
    L_eps_v0: float
    norm2: float               # ||V||^2 in the energy norm
    identity_residual: float   # relative defect of lam0 int V v0 = 2 E_eps - 2 L_eps(v0)
    load: np.ndarray = field(repr=False, default=None)


class ExpansionResidual(NamedTuple):
    lhs: float      # lam_eps - lam_0
    rhs: float      # 2 (E_eps - L_eps(v0))
    ratio: float    # |lhs - rhs| / max(|L_eps(v0)|, ||V||^2)

    @property
    def lhs_ratio(self) -> float:
        """|lhs - rhs| / |lhs|."""
        return abs(self.lhs - self.rhs) / abs(self.lhs) if self.lhs else math.inf


def _loaded_cracks(mesh: CrackedMesh, pick):
    """Ids of stub and segment cracks with at least one edge in the ANTI part."""
    X = mesh.vertices
    ids = set()
    for ap, bp, _, _, cid in mesh.crack_edges:
        c = mesh.cracks[cid]
        if c.kind != RAY and pick(c, 0.5 * (X[ap] + X[bp])) == ANTI:
            ids.add(int(cid))
    return sorted(ids)


def _potential_modes(pick):
    """ANTI stub or segment edges become AFFINE; rays keep ANTI, the rest CONT."""
    def modes(crack, midpoint):
        m = pick(crack, midpoint)
        if crack.kind == RAY:
            return ANTI
        return AFFINE if m == ANTI else CONT
    return modes


def solve_Veps(mesh: CrackedMesh, v0, config: PoleConfiguration | None, eps: float,
               lam0: float | None = None, K=None, M=None, dirichlet=None,
               tol: float = 1e-10) -> PotentialSolution:
    """Minimizer of J_eps over fields with T(V) = 2 v0 on the stubs and T(V) = 0 on the rays.

    ``v0`` is either a DiscreteField of the limit problem on this mesh (then
    ``lam0`` is required and the crack load is the consistent residual load)
    or a closed form with ``u(x)`` and ``grad(x)`` (then the load is the
    graded quadrature of 2 int dnu v0 gamma_+ and ``lam0`` defaults to
    ``v0.lam`` when present).
    """
    if K is None or M is None:
        K, M = assemble(mesh)
    dirichlet = mesh.boundary_nodes() if dirichlet is None else dirichlet
    pick = perturbed_modes(config, eps)
    ids = _loaded_cracks(mesh, pick)
    modes = _potential_modes(pick)
    anti = reduce_constraints(mesh.n, jump_constraints(mesh, pick), dirichlet)

    if isinstance(v0, DiscreteField):
        if lam0 is None:
            raise ValueError("lam0 is required with a discrete v0")
        u0 = np.asarray(v0.values, float)
        cs = jump_constraints(mesh, modes, trace_of=u0)
        ell = consistent_crack_load(mesh, K, M, u0, lam0, anti, ids)
    else:
        lam0 = getattr(v0, "lam", lam0)
        u0 = np.asarray(v0.u(mesh.vertices), float)
        cs = jump_constraints(mesh, modes, g=lambda x, c: 2.0 * v0.u(x))
        dnu = lambda x, c: np.asarray(v0.grad(x)) @ c.normal
        ell = crack_load_Leps(mesh, dnu, ids) if ids else np.zeros(mesh.n)
    red = reduce_constraints(mesh.n, cs, dirichlet)
    V, _ = _minimize(K, ell, red, tol)
    return _package(DiscreteField(mesh, V, f"V eps={eps:g}"), K, M, ell, u0, lam0)


def _minimize(K, ell, red: Reduction, tol: float = 1e-10, fact=None):
    Kr = red.reduce_matrix(K)
    rhs = -red.reduce_vector(ell + K @ red.u_fix)
    if red.dim == 0:
        return red.u_fix.copy(), fact
    fact = fact or factorize(Kr)
    z = fact.solve(rhs)
    res = float(np.linalg.norm(Kr @ z - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if res > tol and np.linalg.norm(rhs) > 0:
        raise ArithmeticError(f"reduced residual {res:.2e} exceeds {tol:.0e}")
    return red.expand(z), fact


def _package(V: DiscreteField, K, M, ell, u0, lam0) -> PotentialSolution:
    v = V.values
    norm2 = float(v @ (K @ v))
    E = 0.5 * norm2 + float(ell @ v)
    L = float(ell @ u0)
    if lam0 is None:
        resid = math.nan
    else:
        lhs = lam0 * float(u0 @ (M @ v))
        rhs = 2.0 * E - 2.0 * L
        resid = abs(lhs - rhs) / max(abs(rhs), abs(lhs), 1e-300)
    return PotentialSolution(V, E, L, norm2, resid, ell)


def theorem1_residual(lam_eps: float, lam_0: float, sol: PotentialSolution) -> ExpansionResidual:
    lhs = lam_eps - lam_0
    rhs = 2.0 * (sol.E_eps - sol.L_eps_v0)
    scale = max(abs(sol.L_eps_v0), sol.norm2)
    ratio = abs(lhs - rhs) / scale if scale > 0 else (0.0 if lhs == rhs else math.inf)
    return ExpansionResidual(lhs, rhs, ratio)


# --- blow-up ------------------------------------------------------------------

def L_Psi0(config: PoleConfiguration, profile: BlowupProfile, check: bool = True) -> float:
    """2 sum_j int_{S_1^j} dnu Psi0 Psi0 in closed form, cross-checked by Gauss quadrature."""
    b2, m2 = profile.beta ** 2, 2.0 * profile.mu
    ang = config.all_angles()
    total = 0.0
    for j in range(config.k1 + config.k2):
        total += 0.5 * b2 * config.radii[j] ** m2 * math.sin(m2 * (ang[j] - profile.alpha0))
    for i in range(config.k2):
        j = config.k1 + config.k2 + i
        total -= 0.5 * b2 * config.radii[j] ** m2 * math.sin(m2 * (ang[j] - profile.alpha0))
    if check:
        q = _L_Psi0_quadrature(config, profile)
        if abs(q - total) > 1e-10 * max(1.0, abs(total)):
            raise ArithmeticError(f"L(Psi0) closed form {total} disagrees with quadrature {q}")
    return total


def _L_Psi0_quadrature(config: PoleConfiguration, profile: BlowupProfile) -> float:
    ang = config.all_angles()
    total = 0.0
    for j in range(config.k):
        pole = j if j < config.k1 + config.k2 else j - config.k2
        nu = config.normal(pole)
        e = np.array([math.cos(ang[j]), math.sin(ang[j])])
        r = config.radii[j]
        # the integrand is a polynomial in |x|; stay off the origin for the gradient
        s = 0.5 * r * (_GL_X + 1.0)
        val, g = psi0(s[:, None] * e[None, :], profile, config)
        total += 2.0 * 0.5 * r * float(np.sum(_GL_W * (g @ nu) * val))
    return total


@dataclass
class BlowupSolution:
    V: DiscreteField          # potential on the largest disk
    E: float                  # extrapolated energy
    norm2: float              # ||V||^2 on the largest disk
    rhos: tuple
    energies: tuple           # E_rho per truncation radius
    converged: bool | None    # |E_2rho - E_rho| decreasing (None with two radii)


def _require_odd(config: PoleConfiguration):
    if config.k % 2 == 0:
        raise ConfigurationError("the blow-up problem is only posed for an odd number of poles")


def _blowup_mesh(config: PoleConfiguration, rho: float, h: float) -> CrackedMesh:
    """Disk of radius rho with element size about h |x| near the poles, capped at rho / 8."""
    dom = Disk(rho)
    layout = build_crack_layout(config, 1.0, dom)
    return generate(dom, layout, rho / 8.0, GradingSpec(q=0.5, depth=8, ratio=h))


class BlowupProblem:
    """Blow-up meshes and factorizations for one pole layout, reused across rotations.

    Rotating the configuration by zeta rotates the mesh rigidly, so the
    stiffness matrix and constraint graph are unchanged; only the jump data
    and crack loads are recomputed.
    """

    def __init__(self, config: PoleConfiguration, profile: BlowupProfile, rho: float = 8.0,
                 h: float = 0.08, levels: int = 2):
        _require_odd(config)
        if rho < 8:
            raise ValueError("truncation radius must be at least 8")
        if levels < 2:
            raise ValueError("need at least two truncation radii")
        self.config, self.profile = config, profile
        self.rhos = tuple(rho * 2 ** i for i in range(levels))
        self._levels = []
        for r in self.rhos:
            mesh = _blowup_mesh(config, r, h)
            K, _ = assemble(mesh)
            self._levels.append({"rho": r, "mesh": mesh, "K": K, "fact": None})

    def _solve_level(self, lev, zeta: float):
        mesh = lev["mesh"] if zeta == 0.0 else lev["mesh"].rotated(zeta)
        cfg = self.config if zeta == 0.0 else self.config.rotated(zeta)
        modes = _potential_modes(perturbed_modes(cfg, 1.0))
        g = lambda x, c: 2.0 * psi0(x, self.profile, cfg, gradient=False)
        red = reduce_constraints(mesh.n, jump_constraints(mesh, modes, g=g), mesh.boundary_nodes())
        ids = [c.id for c in mesh.cracks if c.kind in (STUB, SEGMENT)]
        dnu = lambda x, c: psi0(x, self.profile, cfg)[1] @ c.normal
        ell = crack_load_Leps(mesh, dnu, ids)
        V, lev["fact"] = _minimize(lev["K"], ell, red, fact=lev["fact"])
        norm2 = float(V @ (lev["K"] @ V))
        return DiscreteField(mesh, V, f"blow-up rho={lev['rho']:g}"), 0.5 * norm2 + float(ell @ V), norm2

    def solve(self, zeta: float = 0.0) -> BlowupSolution:
        out = [self._solve_level(lev, zeta) for lev in self._levels]
        Es = tuple(e for _, e, _ in out)
        E = 2.0 * Es[-1] - Es[-2]
        conv = None
        if len(Es) >= 3:
            d = np.abs(np.diff(Es))
            conv = bool(np.all(d[1:] < d[:-1]))
        return BlowupSolution(out[-1][0], E, out[-1][2], self.rhos, Es, conv)

    def G(self, zeta: float) -> float:
        cfg = self.config.rotated(zeta) if zeta else self.config
        return self.solve(zeta).E - L_Psi0(cfg, self.profile)


def solve_blowup(config: PoleConfiguration, profile: BlowupProfile, rho: float = 8.0,
                 h: float = 0.08, levels: int = 2, strict: bool = False) -> BlowupSolution:
    """Truncated blow-up potential on D_rho, D_2rho, ... with E extrapolated in 1/rho.

    ``h`` is the element size relative to the distance from the poles.  With
    three or more radii ``strict`` raises when the increments do not decay.
    """
    sol = BlowupProblem(config, profile, rho, h, levels).solve()
    if strict and sol.converged is False:
        raise ExtrapolationError(f"E_rho increments do not decay: {sol.energies}")
    return sol


@dataclass
class GScan:
    zetas: tuple
    values: tuple
    bracket: tuple | None
    root: float | None
    G_root: float | None
    iterations: int = 0


def scan_G(config: PoleConfiguration, profile: BlowupProfile, zetas=None, rho: float = 8.0,
           h: float = 0.08, rel_tol: float = 1e-4, max_iter: int = 60,
           problem: BlowupProblem | None = None) -> GScan:
    """G(zeta) = E(zeta) - L(zeta) on a grid over [0, pi/m] plus a bisection root.

    The first sign change on the grid is bisected until |G| < rel_tol max|G|.
    Raises NoSignChangeError if the grid shows no sign change.
    """
    prob = problem or BlowupProblem(config, profile, rho, h)
    if zetas is None:
        zetas = np.linspace(0.0, math.pi / profile.m, 17)
    zetas = tuple(float(z) for z in zetas)
    vals = tuple(prob.G(z) for z in zetas)
    scale = max(abs(v) for v in vals)
    bracket = None
    for (za, ga), (zb, gb) in zip(zip(zetas, vals), zip(zetas[1:], vals[1:])):
        if ga == 0.0:
            return GScan(zetas, vals, (za, za), za, 0.0)
        if ga * gb < 0:
            bracket = (za, zb)
            break
    if bracket is None:
        raise NoSignChangeError(f"G keeps one sign on the grid: {vals}")
    (a, b), ga = bracket, vals[zetas.index(bracket[0])]
    it, c, gc = 0, a, ga
    while it < max_iter:
        it += 1
        c = 0.5 * (a + b)
        gc = prob.G(c)
        if abs(gc) < rel_tol * scale:
            break
        if (gc < 0) == (ga < 0):
            a, ga = c, gc
        else:
            b = c
    return GScan(zetas, vals, bracket, c, gc, it)


# --- Hardy quotient -----------------------------------------------------------

def hardy_rayleigh(k1: int, r: float = 1.0, h: float = 0.05, offset: float = 0.1,
                   tol: float = 1e-10) -> float:
    """Lowest eigenvalue of int |grad w|^2 against int w^2 / |x|^2 on r < |x| < 2r.

    The k1 radial cracks at angles offset + 2 pi j / k1 carry ANTI, the
    circles carry natural conditions.  The mesh of the unit annulus is scaled
    by r, which leaves the discrete quotient unchanged up to roundoff.
    """
    if k1 < 1 or r <= 0:
        raise ValueError("need k1 >= 1 and r > 0")
    dom = Annulus(1.0, 2.0)
    cracks = []
    for j in range(k1):
        a = offset + 2 * math.pi * j / k1
        d = np.array([math.cos(a), math.sin(a)])
        cracks.append(Crack(j, RAY, j, 1.0 * d, 2.0 * d, np.array([-d[1], d[0]])))
    mesh = generate(dom, interior_crack_layout(cracks), h).scaled(r)
    K, _ = assemble(mesh)
    W = weighted_mass(mesh, lambda x: 1.0 / np.sum(x * x, axis=-1))
    red = reduce_constraints(mesh.n, jump_constraints(mesh, ANTI), ())
    res = eigs_shift_invert(red.reduce_matrix(K), red.reduce_matrix(W),
                            EigenRequest(sigma=-0.05, nev=1, tol=tol))
    return float(res[0].value)

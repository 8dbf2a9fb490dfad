"""P1 finite elements on cracked meshes.

Jump conditions across cracks are relations between the two copies of a crack
vertex.  They are eliminated by a signed union-find: every node ends up as
``u_x = s * z_root + c`` with ``s = +-1``, or as a fixed value, so the
admissible set is ``u = P z + u_fix``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .linalg import SingularMatrixError, factorize
from .mesh import CrackedMesh

ANTI, CONT, AFFINE = "anti", "continuity", "affine"

_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(5)
_GAUSS_X = 0.5 * (_GAUSS_X + 1.0)
_GAUSS_W = 0.5 * _GAUSS_W

# 6-point symmetric triangle rule, degree 4
_TRI_A, _TRI_B = 0.445948490915965, 0.091576213509771
_TRI_WA, _TRI_WB = 0.223381589678011, 0.109951743655322
TRI_POINTS = np.array([[_TRI_A, _TRI_A], [1 - 2 * _TRI_A, _TRI_A], [_TRI_A, 1 - 2 * _TRI_A],
                       [_TRI_B, _TRI_B], [1 - 2 * _TRI_B, _TRI_B], [_TRI_B, 1 - 2 * _TRI_B]])
TRI_WEIGHTS = np.array([_TRI_WA] * 3 + [_TRI_WB] * 3)


class ConstraintError(ValueError):
    pass


# --- assembly ------------------------------------------------------------------

def _element_geometry(mesh: CrackedMesh):
    p = mesh.vertices[mesh.triangles]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    scale = np.maximum(np.sum(d1 * d1, 1), np.sum(d2 * d2, 1))
    if np.any(area <= 1e-14 * scale):
        bad = int(np.flatnonzero(area <= 1e-14 * scale)[0])
        raise ValueError(f"degenerate or inverted triangle {bad}")
    # gradients of the barycentric coordinates
    g = np.empty((len(p), 3, 2))
    for i in range(3):
        a, b = p[:, (i + 1) % 3], p[:, (i + 2) % 3]
        g[:, i, 0] = (a[:, 1] - b[:, 1]) / (2 * area)
        g[:, i, 1] = (b[:, 0] - a[:, 0]) / (2 * area)
    return area, g


def _scatter(mesh, local):
    t = mesh.triangles
    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(mesh.n, mesh.n)).tocsr()
    A.sum_duplicates()
    return A


def assemble(mesh: CrackedMesh):
    """Stiffness and consistent mass matrices (CSR)."""
    area, g = _element_geometry(mesh)
    Kloc = area[:, None, None] * np.einsum("tid,tjd->tij", g, g)
    Mloc = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None]
    return _scatter(mesh, Kloc), _scatter(mesh, Mloc)


def weighted_mass(mesh: CrackedMesh, weight):
    """Matrix of int weight(x) phi_i phi_j with a degree-4 rule per triangle."""
    area, _ = _element_geometry(mesh)
    p = mesh.vertices[mesh.triangles]
    lam = np.column_stack([1 - TRI_POINTS.sum(1), TRI_POINTS])      # (6, 3)
    x = np.einsum("qi,tid->tqd", lam, p)
    w = weight(x.reshape(-1, 2)).reshape(len(p), -1)
    Mloc = np.einsum("tq,q,qi,qj->tij", w, TRI_WEIGHTS, lam, lam) * area[:, None, None]
    return _scatter(mesh, Mloc)


# --- fields ------------------------------------------------------------------------

@dataclass(eq=False)
class DiscreteField:
    mesh: CrackedMesh
    values: np.ndarray
    constraints: str = ""
    _tree: object = field(default=None, repr=False)

    def _locate(self, x):
        m = self.mesh
        if self._tree is None:
            self._tree = cKDTree(m.vertices[m.triangles].mean(axis=1))
        p = m.vertices[m.triangles]
        out_t = np.full(len(x), -1)
        out_l = np.zeros((len(x), 3))
        k = min(16, len(m.triangles))
        todo = np.arange(len(x))
        while len(todo):
            _, cand = self._tree.query(x[todo], k=k)
            cand = np.atleast_2d(cand.reshape(len(todo), -1))
            found = np.zeros(len(todo), bool)
            for col in range(cand.shape[1]):
                ti = cand[:, col]
                a, b, c = p[ti, 0], p[ti, 1], p[ti, 2]
                det = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])
                y = x[todo] - a
                l1 = (y[:, 0] * (c[:, 1] - a[:, 1]) - y[:, 1] * (c[:, 0] - a[:, 0])) / det
                l2 = ((b[:, 0] - a[:, 0]) * y[:, 1] - (b[:, 1] - a[:, 1]) * y[:, 0]) / det
                l0 = 1 - l1 - l2
                ok = ~found & (l0 >= -1e-12) & (l1 >= -1e-12) & (l2 >= -1e-12)
                out_t[todo[ok]] = ti[ok]
                out_l[todo[ok]] = np.column_stack([l0, l1, l2])[ok]
                found |= ok
            todo = todo[~found]
            if k >= len(m.triangles):
                if len(todo):
                    raise ValueError("points outside the mesh")
                break
            k = min(4 * k, len(m.triangles))
        return out_t, out_l

    def __call__(self, x):
        """P1 interpolant at points x (..., 2)."""
        x = np.asarray(x, float)
        shape = x.shape[:-1]
        ti, lam = self._locate(x.reshape(-1, 2))
        v = np.sum(self.values[self.mesh.triangles[ti]] * lam, axis=1)
        return v.reshape(shape)

    def energy(self, K=None) -> float:
        if K is None:
            K, _ = assemble(self.mesh)
        return float(self.values @ (K @ self.values))


# --- constraints ---------------------------------------------------------------

@dataclass
class JumpConstraintSet:
    """Rows (p, q, mode, g): u_p + u_q = g (ANTI/AFFINE) or u_p - u_q = g (CONT)."""

    plus: np.ndarray
    minus: np.ndarray
    modes: list
    offsets: np.ndarray

    def __len__(self):
        return len(self.plus)

    def residual(self, u) -> float:
        u = np.asarray(u)
        if not len(self):
            return 0.0
        sgn = np.array([-1.0 if md == CONT else 1.0 for md in self.modes])
        return float(np.max(np.abs(u[self.plus] + sgn * u[self.minus] - self.offsets)))

    def with_offsets(self, offsets) -> "JumpConstraintSet":
        return JumpConstraintSet(self.plus, self.minus, self.modes, np.asarray(offsets, float))


def jump_constraints(mesh: CrackedMesh, mode, g=None, trace_of=None) -> JumpConstraintSet:
    """Constraints on every crack-edge endpoint of the mesh.

    ``mode`` is a single mode, a dict crack id -> mode, or a callable
    (crack, edge midpoint) -> mode.  Offsets for AFFINE rows are ``g(x, crack)``
    or, with ``trace_of``, the two-sided trace sum of that nodal field.
    Tip copies appear as self pairs (t, t).
    """
    if callable(mode):
        pick = mode
    elif isinstance(mode, dict):
        pick = lambda c, x: mode[c.id]
    else:
        pick = lambda c, x: mode
    P, Q, md, off = [], [], [], []
    X = mesh.vertices
    for ap, bp, am, bm, cid in mesh.crack_edges:
        c = mesh.cracks[cid]
        mid = 0.5 * (X[ap] + X[bp])
        m = pick(c, mid)
        if m not in (ANTI, CONT, AFFINE):
            raise ConstraintError(f"unknown mode {m!r}")
        for p, q in ((ap, am), (bp, bm)):
            P.append(p)
            Q.append(q)
            md.append(m)
            if m != AFFINE:
                off.append(0.0)
            elif trace_of is not None:
                off.append(float(trace_of[p] + trace_of[q]))
            elif g is not None:
                off.append(float(np.asarray(g(X[p][None, :], c)).ravel()[0]))
            else:
                off.append(0.0)
    return JumpConstraintSet(np.array(P, dtype=np.int64), np.array(Q, dtype=np.int64), md,
                             np.array(off, dtype=float))


@dataclass
class Reduction:
    """Affine parametrization u = P z + u_fix of the admissible set."""

    P: sp.csr_matrix
    u_fix: np.ndarray
    n_fixed: int

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    def expand(self, z):
        return self.P @ z + self.u_fix

    def reduce_matrix(self, A):
        return (self.P.T @ A @ self.P).tocsc()

    def reduce_vector(self, b):
        return self.P.T @ b


def reduce_constraints(n: int, constraints: JumpConstraintSet | None = None, dirichlet=(),
                       tol: float = 1e-12) -> Reduction:
    """Eliminate jump relations and Dirichlet nodes.

    A sign-inconsistent cycle (e.g. an odd number of ANTI rays around a
    vertex) fixes its nodes; an inconsistent offset around a sign-consistent
    cycle raises ConstraintError naming the cycle.
    """
    parent = np.arange(n)
    sign = np.ones(n)
    off = np.zeros(n)
    fixed = {}
    adj = {}

    def find(x):
        path = []
        while parent[x] != x:
            path.append(x)
            x = parent[x]
        root = x
        # compress, accumulating sign and offset toward the root
        for y in reversed(path):
            p = parent[y]
            if p != root:
                sign[y], off[y] = sign[y] * sign[p], sign[y] * off[p] + off[y]
                parent[y] = root
        return root

    def cycle(p, q):
        prev = {p: None}
        queue = [p]
        while queue:
            x = queue.pop(0)
            if x == q:
                break
            for y in adj.get(x, ()):
                if y not in prev:
                    prev[y] = x
                    queue.append(y)
        path, x = [], q
        while x is not None and x in prev:
            path.append(int(x))
            x = prev[x]
        return path[::-1] + [int(p)]

    def fix(r, value, p, q):
        if r in fixed and abs(fixed[r] - value) > tol * max(1.0, abs(value)):
            raise ConstraintError(f"inconsistent constraints along {cycle(p, q)}")
        fixed[r] = value

    def relate(p, q, s, g):
        """Impose u_p = s u_q + g."""
        rp, rq = find(p), find(q)
        sp_, cp = sign[p] if p != rp else 1.0, off[p] if p != rp else 0.0
        sq, cq = sign[q] if q != rq else 1.0, off[q] if q != rq else 0.0
        rhs = s * cq + g - cp            # sp u_rp = s sq u_rq + rhs
        if rp == rq:
            if sp_ == s * sq:
                if abs(rhs) > tol * max(1.0, abs(g)):
                    raise ConstraintError(f"inconsistent constraints along {cycle(p, q)}")
            else:
                fix(rp, rhs / (2.0 * sp_), p, q)
        else:
            ss, cc = sp_ * s * sq, sp_ * rhs     # u_rp = ss u_rq + cc
            if rp in fixed and rq not in fixed:
                parent[rq], sign[rq], off[rq] = rp, ss, -ss * cc
            else:
                if rp in fixed:
                    fix(rq, ss * (fixed[rp] - cc), p, q)
                    del fixed[rp]
                parent[rp], sign[rp], off[rp] = rq, ss, cc
        adj.setdefault(p, []).append(q)
        adj.setdefault(q, []).append(p)

    for x in np.asarray(dirichlet, dtype=np.int64):
        r = find(int(x))
        v = 0.0
        if x != r:
            v = sign[x] * (0.0 - off[x])          # u_r from u_x = 0
        fix(r, v, int(x), int(x))
    if constraints is not None:
        for p, q, m, g in zip(constraints.plus, constraints.minus, constraints.modes,
                              constraints.offsets):
            relate(int(p), int(q), 1.0 if m == CONT else -1.0, float(g))

    roots = np.array([find(x) for x in range(n)])
    s = np.where(roots == np.arange(n), 1.0, sign)
    c = np.where(roots == np.arange(n), 0.0, off)
    is_fixed = np.zeros(n, bool)
    fval = np.zeros(n)
    for r, v in fixed.items():
        is_fixed[r] = True
        fval[r] = v
    node_fixed = is_fixed[roots]
    free_roots = np.unique(roots[~node_fixed])
    col = -np.ones(n, dtype=np.int64)
    col[free_roots] = np.arange(len(free_roots))
    u_fix = c + np.where(node_fixed, s * fval[roots], 0.0)
    rows = np.flatnonzero(~node_fixed)
    P = sp.csr_matrix((s[rows], (rows, col[roots[rows]])), shape=(n, len(free_roots)))
    return Reduction(P, u_fix, int(node_fixed.sum()))


# --- crack loads -----------------------------------------------------------------

def _edge_integrals(xa, xb, fn, crack, singular_at_a: bool, rel: float = 1e-12):
    """(int fn phi_a, int fn phi_b) over segment xa -> xb, graded toward xa if asked."""
    L = float(np.hypot(*(xb - xa)))

    def panel(s0, s1):
        s = s0 + (s1 - s0) * _GAUSS_X
        x = xa[None, :] + s[:, None] * (xb - xa)[None, :]
        f = np.asarray(fn(x, crack), float) * _GAUSS_W * (s1 - s0) * L
        return np.array([np.sum(f * (1 - s)), np.sum(f * s)])

    if not singular_at_a:
        return panel(0.0, 1.0)
    total = np.zeros(2)
    hi = 1.0
    for _ in range(200):
        lo = 0.5 * hi
        part = panel(lo, hi)
        total += part
        hi = lo
        if np.max(np.abs(part)) < rel * max(np.max(np.abs(total)), 1e-300):
            break
    return total


def crack_load_Leps(mesh: CrackedMesh, dnu, crack_ids, singular_point=(0.0, 0.0),
                    rel: float = 1e-12) -> np.ndarray:
    """Vector l with l . w = 2 sum_j int_{S_j} dnu gamma_+(w).

    ``dnu(x, crack)`` returns the normal derivative at crack points x (N, 2).
    Edges touching ``singular_point`` are integrated on dyadic panels.
    """
    ids = set(int(c) for c in crack_ids)
    ell = np.zeros(mesh.n)
    X = mesh.vertices
    sing = np.asarray(singular_point, float)
    for ap, bp, am, bm, cid in mesh.crack_edges:
        if int(cid) not in ids:
            continue
        c = mesh.cracks[cid]
        xa, xb = X[ap], X[bp]
        if np.array_equal(xb, sing):
            ib, ia = _edge_integrals(xb, xa, dnu, c, True, rel)
        else:
            ia, ib = _edge_integrals(xa, xb, dnu, c, np.array_equal(xa, sing), rel)
        ell[ap] += 2.0 * ia
        ell[bp] += 2.0 * ib
    unused = ids - set(int(c) for c in mesh.crack_edges[:, 4])
    if unused:
        raise ValueError(f"cracks {sorted(unused)} have no edges in the mesh")
    return ell


def consistent_crack_load(mesh: CrackedMesh, K, M, v0, lam0, reduction: Reduction,
                          crack_ids) -> np.ndarray:
    """Crack load defined through the residual of the discrete limit problem.

    For w in span(P), l . w = -(K v0 - lam0 M v0) . w, which is the discrete
    counterpart of the integration-by-parts identity for the crack term.  The
    load of each free component is spread equally over its + nodes on the
    listed cracks.
    """
    ids = set(int(c) for c in crack_ids)
    r = reduction.reduce_vector(K @ v0 - lam0 * (M @ v0))
    P = reduction.P.tocsr()
    plus = sorted({int(p) for ap, bp, am, bm, cid in mesh.crack_edges if int(cid) in ids
                   for p in (ap, bp)})
    ell = np.zeros(mesh.n)
    comp = {}
    for p in plus:
        row = P.getrow(p)
        if row.nnz:
            comp.setdefault(int(row.indices[0]), []).append((p, float(row.data[0])))
    for cidx, members in comp.items():
        for p, s in members:
            ell[p] = -r[cidx] / (len(members) * s)
    return ell


# --- constrained minimization --------------------------------------------------

def solve_constrained_min(K, ell, reduction: Reduction, tol: float = 1e-10, tag: str = "",
                          mesh: CrackedMesh | None = None):
    """Minimizer of 1/2 u^T K u + l^T u over u = P z + u_fix.

    Returns (DiscreteField or raw vector, relative residual of the reduced system).
    """
    Kr = reduction.reduce_matrix(K)
    rhs = -reduction.reduce_vector(ell + K @ reduction.u_fix)
    if reduction.dim == 0:
        u = reduction.u_fix.copy()
        res = 0.0
    else:
        try:
            z = factorize(Kr).solve(rhs)
        except SingularMatrixError as exc:
            raise SingularMatrixError("reduced system is singular") from exc
        res = float(np.linalg.norm(Kr @ z - rhs) / max(np.linalg.norm(rhs), 1e-300))
        if res > tol:
            raise SingularMatrixError(f"reduced residual {res:.2e} exceeds {tol:.0e}")
        u = reduction.expand(z)
    if mesh is not None:
        return DiscreteField(mesh, u, tag), res
    return u, res

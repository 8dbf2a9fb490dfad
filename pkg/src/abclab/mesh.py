"""Crack-conforming triangulations with duplicated node sheets along cracks.

The constrained Delaunay triangulation itself is delegated to Shewchuk's
Triangle (``triangle`` package).  Everything crack specific happens here:
crack polylines are entered as constrained segments, the size field grades
geometrically toward the origin and the crack tips, and after triangulation
each crack vertex is split into one copy per angular sector.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace

import numpy as np
import triangle

from .geometry import (RAY, SEGMENT, STUB, Annulus, Crack, CrackLayout, Ellipse, Rectangle,
                       polygon_area, ray_polygon_exit)

INTERIOR, BOUNDARY, TIP = 0, 1, 2


class MeshError(RuntimeError):
    pass


@dataclass(frozen=True)
class GradingSpec:
    """Geometric grading toward the origin and crack tips.

    Inside a graded zone the element size is ``ratio`` times the distance to
    the grading point, floored at ``ratio * scale * q**depth`` where ``scale``
    is the local crack length.
    """

    q: float = 0.5
    depth: int = 6
    ratio: float = 0.25
    min_angle: float = 25.0


@dataclass(eq=False)
class CrackedMesh:
    vertices: np.ndarray
    triangles: np.ndarray
    markers: np.ndarray
    pairs: np.ndarray          # rows (plus, minus, crack id)
    crack_edges: np.ndarray    # rows (a_plus, b_plus, a_minus, b_minus, crack id)
    cracks: tuple = ()
    h: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.vertices)

    def boundary_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.markers == BOUNDARY)

    def tip_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.markers == TIP)

    def origin_sheets(self) -> np.ndarray:
        """Vertex copies sitting exactly at the origin."""
        return np.flatnonzero((self.vertices[:, 0] == 0.0) & (self.vertices[:, 1] == 0.0))

    def crack(self, cid: int) -> Crack:
        return self.cracks[cid]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edges(self) -> np.ndarray:
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0)

    def min_angle(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        ang = []
        for i in range(3):
            a = p[:, (i + 1) % 3] - p[:, i]
            b = p[:, (i + 2) % 3] - p[:, i]
            c = np.sum(a * b, 1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            ang.append(np.degrees(np.arccos(np.clip(c, -1, 1))))
        return np.min(ang, axis=0)

    def fingerprint(self) -> str:
        hsh = hashlib.sha1()
        for a in (self.vertices, self.triangles, self.pairs):
            hsh.update(np.ascontiguousarray(a).tobytes())
        return hsh.hexdigest()[:16]

    def transformed(self, matrix=None, scale: float = 1.0) -> "CrackedMesh":
        """Copy with coordinates mapped by x -> scale * matrix @ x."""
        A = np.eye(2) if matrix is None else np.asarray(matrix, float)
        v = scale * (self.vertices @ A.T)
        cracks = tuple(replace(c, start=scale * (A @ c.start), end=scale * (A @ c.end),
                               normal=A @ c.normal,
                               breaks=tuple(scale * (A @ b) for b in c.breaks))
                       for c in self.cracks)
        return CrackedMesh(v, self.triangles.copy(), self.markers.copy(), self.pairs.copy(),
                           self.crack_edges.copy(), cracks, self.h * scale, dict(self.meta))

    def rotated(self, zeta: float) -> "CrackedMesh":
        c, s = math.cos(zeta), math.sin(zeta)
        return self.transformed(np.array([[c, -s], [s, c]]))

    def scaled(self, s: float) -> "CrackedMesh":
        return self.transformed(scale=s)


# --- size field ------------------------------------------------------------

def _grading_centres(layout: CrackLayout | None, h: float):
    if layout is None or not layout.cracks:
        return []
    centres = []
    lengths = []
    for c in layout.cracks:
        if c.kind == RAY:
            continue
        if c.kind == SEGMENT:
            lengths.append(0.5 * c.length())
        else:
            lengths.append(c.length())
    if layout.has_origin:
        centres.append((np.zeros(2), min(lengths) if lengths else h))
    for c in layout.cracks:
        if c.kind == STUB:
            centres.append((c.end, c.length()))
        elif c.kind == SEGMENT:
            centres.append((c.start, 0.5 * c.length()))
            centres.append((c.end, 0.5 * c.length()))
        for b in c.breaks:
            centres.append((np.asarray(b), float(np.hypot(*b))))
    return centres


def size_field(layout: CrackLayout | None, h: float, grading: GradingSpec):
    centres = _grading_centres(layout, h)
    if not centres:
        return lambda x: np.full(np.asarray(x).shape[:-1], h)
    pts = np.array([c for c, _ in centres])
    floors = np.array([grading.ratio * min(s, h) * grading.q ** grading.depth for _, s in centres])

    def s(x):
        x = np.asarray(x, float)
        d = np.linalg.norm(x[..., None, :] - pts, axis=-1)
        loc = np.maximum(floors, grading.ratio * d).min(axis=-1)
        return np.minimum(h, loc)
    return s


def _march(origin, direction, L, size):
    ts, t = [0.0], 0.0
    while t < 0.5 * L:
        st = float(size(origin + t * direction))
        st = min(st, float(size(origin + min(t + st, L) * direction)))
        t += st
        ts.append(t)
    return np.array(ts)


def _subdivide(p, q, size):
    """Points from p to q (inclusive) spaced by the size field, graded at both ends."""
    p, q = np.asarray(p, float), np.asarray(q, float)
    L = float(np.hypot(*(q - p)))
    u = (q - p) / L
    fwd = _march(p, u, L, size)
    bwd = L - _march(q, -u, L, size)
    lo = fwd[fwd < 0.5 * L]
    hi = bwd[bwd > 0.5 * L][::-1]
    if len(lo) and len(hi):
        gap = hi[0] - lo[-1]
        ref = min(lo[-1] - lo[-2] if len(lo) > 1 else gap, hi[1] - hi[0] if len(hi) > 1 else gap)
        if gap > 1.5 * ref:
            lo = np.append(lo, 0.5 * (lo[-1] + hi[0]))
        elif gap < 0.5 * ref and len(lo) > 1 and len(hi) > 1:
            m = 0.5 * (lo[-1] + hi[0])
            lo, hi = np.append(lo[:-1], m), hi[1:]
    ts = np.concatenate([lo, hi])
    pts = p + ts[:, None] * u
    pts[0], pts[-1] = p, q
    return pts


def _polygon_with_inserts(poly, inserts):
    """Insert points (edge index, parameter, point) into a closed polygon."""
    n = len(poly)
    poly = [np.asarray(x, float) for x in poly]
    extra = {i: [] for i in range(n)}
    for e, s, x in inserts:
        if s >= 1 - 1e-12:
            e, s = (e + 1) % n, 0.0
        if s <= 1e-12:
            poly[e] = np.asarray(x, float)
        else:
            extra[e].append((s, tuple(x)))
    out = []
    for i in range(n):
        out.append(poly[i])
        out.extend(np.array(x) for _, x in sorted(extra[i]))
    return np.array(out)


# --- generation --------------------------------------------------------------

def generate(domain, layout: CrackLayout | None = None, h: float = 0.1,
             grading: GradingSpec | None = None, structured: bool = False) -> CrackedMesh:
    """Crack-conforming triangulation of ``domain`` with duplicated crack sheets."""
    if h <= 0:
        raise MeshError("h must be positive")
    grading = grading or GradingSpec()
    cracks = tuple(layout.cracks) if layout is not None else ()
    if structured:
        return _structured(domain, layout, h)
    size = size_field(layout, h, grading)

    outer = np.asarray(domain.outer_polygon(h), float)
    inner = np.asarray(domain.inner_polygon(h), float) if isinstance(domain, Annulus) else None

    # snap ray ends onto the polygons actually meshed
    fixed = []
    out_ins, in_ins = [], []
    for c in cracks:
        if c.kind == RAY:
            d = (c.end - c.start) / c.length()
            start = c.start
            if inner is not None:
                start, e, s = ray_polygon_exit(inner, np.zeros(2), d)
                in_ins.append((e, s, start))
            end, e, s = ray_polygon_exit(outer, np.zeros(2) if inner is None else start, d)
            out_ins.append((e, s, end))
            c = replace(c, start=start, end=end)
        fixed.append(c)
    cracks = tuple(fixed)
    _check_clearance(cracks, outer, inner, h)
    outer = _polygon_with_inserts(outer, out_ins)
    if inner is not None:
        inner = _polygon_with_inserts(inner, in_ins)

    verts, index = [], {}

    def vid(p):
        key = (float(p[0]), float(p[1]))
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    segs, marks = [], []

    def add_loop(poly):
        n = len(poly)
        for i in range(n):
            pts = _subdivide(poly[i], poly[(i + 1) % n], size)
            ids = [vid(p) for p in pts]
            for a, b in zip(ids[:-1], ids[1:]):
                segs.append((a, b))
                marks.append(1)

    add_loop(outer)
    if inner is not None:
        add_loop(inner)
    for c in cracks:
        knots = [c.start] + list(c.breaks) + [c.end]
        if c.kind == SEGMENT:
            knots.append(np.zeros(2))
        d = c.end - c.start
        knots.sort(key=lambda p: float((np.asarray(p) - c.start) @ d))
        for p, q in zip(knots[:-1], knots[1:]):
            pts = _subdivide(p, q, size)
            ids = [vid(x) for x in pts]
            for a, b in zip(ids[:-1], ids[1:]):
                segs.append((a, b))
                marks.append(c.id + 2)

    pslg = {"vertices": np.array(verts), "segments": np.array(segs, dtype=np.int32),
            "segment_markers": np.array(marks, dtype=np.int32)[:, None]}
    if domain.holes():
        pslg["holes"] = np.array(domain.holes(), float)
    amax = math.sqrt(3) / 4 * h * h
    opts = f"pq{grading.min_angle:g}Q"
    tri = triangle.triangulate(pslg, opts + f"a{amax:.17g}")
    for _ in range(60):
        v, t = tri["vertices"], tri["triangles"]
        p = v[t]
        area = 0.5 * np.abs((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                            - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
        target = math.sqrt(3) / 4 * size(p.mean(axis=1)) ** 2
        if np.all(area <= 1.5 * target):
            break
        tri["triangle_max_area"] = target
        if domain.holes():
            tri["holes"] = pslg["holes"]
        tri = triangle.triangulate(tri, "r" + opts + "a")
    else:
        raise MeshError("size field refinement did not converge")

    v = np.asarray(tri["vertices"], float)
    t = np.asarray(tri["triangles"], np.int64)
    sg = np.asarray(tri["segments"], np.int64)
    sm = np.asarray(tri["segment_markers"]).ravel()
    bmark = np.zeros(len(v), dtype=np.int64)
    bmark[np.unique(sg[sm == 1])] = BOUNDARY
    crack_edges = [(a, b, m - 2) for (a, b), m in zip(sg, sm) if m >= 2]
    mesh = _split_cracks(v, t, bmark, crack_edges, cracks)
    mesh.h = h
    mesh.meta.update(grading=grading, domain=domain, layout_eps=getattr(layout, "eps", 0.0))
    return mesh


def _check_clearance(cracks, outer, inner, h):
    polys = [outer] + ([inner] if inner is not None else [])
    for c in cracks:
        for p in [c.start, c.end] + list(c.breaks):
            if c.kind == RAY:
                continue
            for poly in polys:
                d = _dist_to_polygon(p, poly)
                if d < 1e-3 * h:
                    raise MeshError(f"crack {c.id} comes within {d:.2e} of the boundary without touching it")


def _dist_to_polygon(p, poly):
    n = len(poly)
    best = np.inf
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        e = b - a
        t = np.clip(((p - a) @ e) / (e @ e), 0, 1)
        best = min(best, float(np.hypot(*(a + t * e - p))))
    return best


def _structured(domain, layout, h):
    if not isinstance(domain, Rectangle):
        raise MeshError("structured mode supports rectangles only")
    nx = int(round((domain.xmax - domain.xmin) / h))
    ny = int(round((domain.ymax - domain.ymin) / h))
    xs = np.linspace(domain.xmin, domain.xmax, nx + 1)
    ys = np.linspace(domain.ymin, domain.ymax, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    v = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    a, b = idx[:-1, :-1].ravel(), idx[:-1, 1:].ravel()
    c, d = idx[1:, 1:].ravel(), idx[1:, :-1].ravel()
    t = np.vstack([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    onb = (np.isclose(v[:, 0], domain.xmin) | np.isclose(v[:, 0], domain.xmax)
           | np.isclose(v[:, 1], domain.ymin) | np.isclose(v[:, 1], domain.ymax))
    bmark = np.where(onb, BOUNDARY, INTERIOR).astype(np.int64)
    cracks = tuple(layout.cracks) if layout is not None else ()
    edges = np.unique(np.sort(t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1), axis=0)
    crack_edges = []
    for cr in cracks:
        d = cr.end - cr.start
        L2 = float(d @ d)
        for e in edges:
            p, q = v[e[0]], v[e[1]]
            ok = True
            for x in (p, q):
                w = x - cr.start
                if abs(w[0] * d[1] - w[1] * d[0]) > 1e-12 * L2 or not (-1e-12 <= (w @ d) / L2 <= 1 + 1e-12):
                    ok = False
            if ok:
                crack_edges.append((e[0], e[1], cr.id))
        if not crack_edges:
            raise MeshError("crack does not follow structured grid lines")
    mesh = _split_cracks(v, t, bmark, crack_edges, cracks)
    mesh.h = h
    mesh.meta.update(domain=domain, structured=True)
    return mesh


def _split_cracks(v, t, bmark, crack_edges, cracks) -> CrackedMesh:
    """Duplicate crack vertices into one copy per angular sector."""
    t = np.array(t, dtype=np.int64)
    p = v[t]
    sa = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    flip = sa < 0
    t[flip] = t[flip][:, [0, 2, 1]]
    ckey = {}
    for a, b, c in crack_edges:
        ckey[(min(a, b), max(a, b))] = int(c)
    if not ckey:
        return CrackedMesh(v.copy(), t, bmark.copy(), np.zeros((0, 3), np.int64),
                           np.zeros((0, 5), np.int64), tuple(cracks))
    vt = {}
    crack_verts = sorted({x for e in ckey for x in e})
    cvset = set(crack_verts)
    for ti, tri in enumerate(t):
        for x in tri:
            if x in cvset:
                vt.setdefault(int(x), []).append(ti)
    verts = [v]
    markers = list(bmark)
    newt = t.copy()
    n_next = len(v)
    tips = []
    for x in crack_verts:
        tris = vt[x]
        parent = {ti: ti for ti in tris}

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a
        by_edge = {}
        for ti in tris:
            for y in t[ti]:
                if y != x:
                    by_edge.setdefault(int(y), []).append(ti)
        for y, ts in by_edge.items():
            if (min(x, y), max(x, y)) in ckey:
                continue
            for ti in ts[1:]:
                ra, rb = find(ts[0]), find(ti)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
        comps = {}
        for ti in tris:
            comps.setdefault(find(ti), []).append(ti)
        groups = sorted(comps.values(), key=min)
        if len(groups) == 1:
            tips.append(x)
        for g in groups[1:]:
            nid = n_next
            n_next += 1
            verts.append(v[x][None, :])
            markers.append(bmark[x])
            for ti in g:
                newt[ti][newt[ti] == x] = nid
    V = np.vstack(verts)
    markers = np.array(markers, dtype=np.int64)
    for x in tips:
        if markers[x] != BOUNDARY:
            markers[x] = TIP
    # edge -> triangles on the original connectivity
    et = {}
    for ti, tri in enumerate(t):
        for i in range(3):
            a, b = int(tri[i]), int(tri[(i + 1) % 3])
            et.setdefault((min(a, b), max(a, b)), []).append(ti)
    rows, prs = [], set()
    for (a, b), c in sorted(ckey.items()):
        ts = et[(a, b)]
        if len(ts) != 2:
            raise MeshError("crack edge is not interior")
        nu = cracks[c].normal
        side = []
        for ti in ts:
            cen = v[t[ti]].mean(axis=0)
            side.append(float((cen - v[a]) @ nu))
        if side[0] * side[1] >= 0:
            raise MeshError("could not separate crack sides")
        tp, tm = (ts[0], ts[1]) if side[0] > 0 else (ts[1], ts[0])
        ap = int(newt[tp][t[tp] == a][0])
        bp = int(newt[tp][t[tp] == b][0])
        am = int(newt[tm][t[tm] == a][0])
        bm = int(newt[tm][t[tm] == b][0])
        rows.append((ap, bp, am, bm, c))
        for x, y in ((ap, am), (bp, bm)):
            if x != y:
                prs.add((x, y, c))
    pairs = np.array(sorted(prs), dtype=np.int64).reshape(-1, 3)
    return CrackedMesh(V, newt, markers, pairs, np.array(rows, dtype=np.int64).reshape(-1, 5),
                       tuple(cracks))


def refine_uniform(mesh: CrackedMesh) -> CrackedMesh:
    """Split every triangle into four through its edge midpoints."""
    t = mesh.triangles
    e_all = np.sort(t[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
    edges, inv, counts = np.unique(e_all, axis=0, return_inverse=True, return_counts=True)
    inv = inv.reshape(-1, 3)
    nv = mesh.n
    mid = nv + np.arange(len(edges))
    V = np.vstack([mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])])
    crack_set = set()
    for ap, bp, am, bm, _ in mesh.crack_edges:
        crack_set.add((min(ap, bp), max(ap, bp)))
        crack_set.add((min(am, bm), max(am, bm)))
    emid = {(int(a), int(b)): int(m) for (a, b), m in zip(edges, mid)}
    newmark = np.zeros(len(edges), dtype=np.int64)
    for k, ((a, b), c) in enumerate(zip(edges, counts)):
        if c == 1 and (int(a), int(b)) not in crack_set:
            newmark[k] = BOUNDARY
    markers = np.concatenate([mesh.markers, newmark])
    m01, m12, m20 = mid[inv[:, 0]], mid[inv[:, 1]], mid[inv[:, 2]]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    T = np.vstack([np.column_stack([a, m01, m20]), np.column_stack([m01, b, m12]),
                   np.column_stack([m20, m12, c]), np.column_stack([m01, m12, m20])])
    rows = []
    prs = set(map(tuple, mesh.pairs.tolist()))
    for ap, bp, am, bm, cid in mesh.crack_edges.tolist():
        mp = emid[(min(ap, bp), max(ap, bp))]
        mm = emid[(min(am, bm), max(am, bm))]
        rows.append((ap, mp, am, mm, cid))
        rows.append((mp, bp, mm, bm, cid))
        prs.add((mp, mm, cid))
    pairs = np.array(sorted(prs), dtype=np.int64).reshape(-1, 3)
    out = CrackedMesh(V, T, markers, pairs, np.array(rows, dtype=np.int64).reshape(-1, 5),
                      mesh.cracks, mesh.h / 2, dict(mesh.meta))
    out.meta["parent"] = mesh.fingerprint()
    return out


# --- plain text dump ------------------------------------------------------------

def dump(mesh: CrackedMesh, path) -> None:
    """Write the mesh as text.

    Layout: a header ``V T P``; V rows ``x y marker``; T rows ``i j k``; P rows
    ``i_plus i_minus crack_id``; then a header ``C E`` followed by C crack rows
    ``id kind pole nx ny x0 y0 x1 y1`` and E crack-edge rows
    ``a_plus b_plus a_minus b_minus crack_id``.
    """
    with open(path, "w") as fh:
        fh.write(f"{mesh.n} {len(mesh.triangles)} {len(mesh.pairs)}\n")
        for (x, y), m in zip(mesh.vertices, mesh.markers):
            fh.write(f"{float(x)!r} {float(y)!r} {int(m)}\n")
        for tri in mesh.triangles:
            fh.write("{} {} {}\n".format(*tri))
        for row in mesh.pairs:
            fh.write("{} {} {}\n".format(*row))
        fh.write(f"{len(mesh.cracks)} {len(mesh.crack_edges)}\n")
        for c in mesh.cracks:
            nums = " ".join(repr(float(v)) for v in (*c.normal, *c.start, *c.end))
            fh.write(f"{c.id} {c.kind} {c.pole} {nums}\n")
        for row in mesh.crack_edges:
            fh.write("{} {} {} {} {}\n".format(*row))


def load(path) -> CrackedMesh:
    with open(path) as fh:
        lines = fh.read().split("\n")
    nv, nt, npr = map(int, lines[0].split())
    k = 1
    vert = np.array([list(map(float, lines[k + i].split()[:2])) for i in range(nv)]).reshape(-1, 2)
    mark = np.array([int(lines[k + i].split()[2]) for i in range(nv)], dtype=np.int64)
    k += nv
    tri = np.array([list(map(int, lines[k + i].split())) for i in range(nt)], dtype=np.int64).reshape(-1, 3)
    k += nt
    prs = np.array([list(map(int, lines[k + i].split())) for i in range(npr)], dtype=np.int64).reshape(-1, 3)
    k += npr
    cracks, edges = (), np.zeros((0, 5), np.int64)
    if k < len(lines) and lines[k].strip():
        nc, ne = map(int, lines[k].split())
        k += 1
        cl = []
        for i in range(nc):
            f = lines[k + i].split()
            cl.append(Crack(int(f[0]), f[1], int(f[2]), np.array([float(f[5]), float(f[6])]),
                            np.array([float(f[7]), float(f[8])]), np.array([float(f[3]), float(f[4])])))
        cracks = tuple(cl)
        k += nc
        edges = np.array([list(map(int, lines[k + i].split())) for i in range(ne)],
                         dtype=np.int64).reshape(-1, 5)
    return CrackedMesh(vert, tri, mark, prs, edges, cracks)


def mesh_area(mesh: CrackedMesh) -> float:
    return float(mesh.signed_areas().sum())


def domain_polygon_area(domain, h: float) -> float:
    if isinstance(domain, (Ellipse, Annulus)):
        return domain.area(h)
    return polygon_area(domain.outer_polygon(h))

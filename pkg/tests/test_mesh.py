import math

import numpy as np
import pytest

from abclab.geometry import (Crack, Disk, PoleConfiguration, Rectangle, build_crack_layout,
                             interior_crack_layout)
from abclab.mesh import (GradingSpec, MeshError, domain_polygon_area, dump, generate, load, mesh_area,
                         refine_uniform, size_field)


@pytest.fixture(scope="module")
def slit_mesh():
    crack = Crack(0, "segment", 0, np.array([-0.25, 0.0]), np.array([0.25, 0.0]), np.array([0.0, 1.0]))
    lay = interior_crack_layout([crack], [[-0.25, 0.0], [0.25, 0.0]])
    return generate(Rectangle(-0.5, 0.5, -0.5, 0.5), lay, 0.1)


@pytest.fixture(scope="module")
def two_pole_mesh():
    cfg = PoleConfiguration(0, 1, [0.0], [0.1, 0.1], 0.3)
    dom = Rectangle(-0.5, 0.5, -0.4, 0.4)
    return generate(dom, build_crack_layout(cfg, 0.05, dom), 0.08, GradingSpec(ratio=0.2))


def test_structured_square_counts():
    m = generate(Rectangle(0, 1, 0, 1), None, 0.25, structured=True)
    assert (m.n, len(m.triangles)) == (25, 32)


def test_slit_duplicates_interior_nodes_only(slit_mesh):
    m = slit_mesh
    on = np.flatnonzero((np.abs(m.vertices[:, 1]) < 1e-15) & (np.abs(m.vertices[:, 0]) <= 0.25 + 1e-15))
    tips = m.tip_nodes()
    np.testing.assert_allclose(np.sort(m.vertices[tips, 0]), [-0.25, 0.25])
    interior = [i for i in on if i not in tips]
    # every interior crack node sits in exactly one pair
    paired = set(m.pairs[:, 0]) | set(m.pairs[:, 1])
    assert set(interior) == paired
    assert len(interior) == 2 * len(m.pairs)


def test_pairs_share_coordinates_bitwise(two_pole_mesh):
    m = two_pole_mesh
    assert np.array_equal(m.vertices[m.pairs[:, 0]], m.vertices[m.pairs[:, 1]])


def test_triangles_positive_and_area_exact(two_pole_mesh):
    m = two_pole_mesh
    assert np.all(m.signed_areas() > 0)
    assert mesh_area(m) == pytest.approx(0.8, abs=1e-12)


def test_no_triangle_straddles_the_crack(slit_mesh):
    m = slit_mesh
    p = m.vertices[m.triangles]
    ys = p[:, :, 1]
    xs_in = np.all(np.abs(p[:, :, 0]) < 0.25, axis=1)
    straddle = xs_in & (ys.max(1) > 1e-14) & (ys.min(1) < -1e-14)
    assert not np.any(straddle)


def test_crack_is_union_of_edges(slit_mesh):
    m = slit_mesh
    L = sum(np.hypot(*(m.vertices[a] - m.vertices[b])) for a, b, _, _, _ in m.crack_edges)
    assert L == pytest.approx(0.5, abs=1e-14)


def test_three_rays_give_three_origin_sheets():
    cfg = PoleConfiguration(3, 0, [0, 2 * math.pi / 3, -2 * math.pi / 3], [0.5] * 3, 0.6)
    m = generate(Disk(1.0), build_crack_layout(cfg, 0.0, Disk(1.0)), 0.15)
    assert len(m.origin_sheets()) == 3


def test_tips_have_one_copy():
    cfg = PoleConfiguration(2, 0, [0.3, 2.0], [0.4, 0.3], 0.5)
    m = generate(Disk(1.0), build_crack_layout(cfg, 0.5, Disk(1.0)), 0.15)
    tips = m.vertices[m.tip_nodes()]
    want = cfg.points(0.5)
    for w in want:
        assert np.sum(np.all(tips == w, axis=1)) == 1


def test_refine_counts_and_area(two_pole_mesh):
    m = two_pole_mesh
    r = refine_uniform(m)
    assert r.n == m.n + len(m.edges())
    assert len(r.pairs) == 2 * len(m.pairs) + 1
    assert len(r.triangles) == 4 * len(m.triangles)
    assert mesh_area(r) == pytest.approx(mesh_area(m), abs=1e-14)
    assert len(r.crack_edges) == 2 * len(m.crack_edges)
    assert np.array_equal(r.vertices[r.pairs[:, 0]], r.vertices[r.pairs[:, 1]])


def test_refine_vertex_count_without_cracks():
    m = generate(Rectangle(0, 1, 0, 1), None, 0.25, structured=True)
    r = refine_uniform(m)
    assert r.n == m.n + len(m.edges())


def test_grading_shrinks_elements_near_origin():
    cfg = PoleConfiguration(1, 0, [0.0], [0.2], 0.3)
    dom = Rectangle(-0.5, 0.5, -0.5, 0.5)
    lay = build_crack_layout(cfg, 0.1, dom)
    g = GradingSpec(q=0.5, depth=6, ratio=0.25)
    s = size_field(lay, 0.1, g)
    assert s(np.array([0.3, 0.3])) == pytest.approx(0.1)
    assert s(np.array([0.004, -0.003])) == pytest.approx(0.25 * 0.005)
    m = generate(dom, lay, 0.1, g)
    near = np.hypot(*m.vertices.T) < 0.01
    assert near.sum() > 10


def test_min_angle_away_from_grading(two_pole_mesh):
    m = two_pole_mesh
    c = m.vertices[m.triangles].mean(axis=1)
    far = np.hypot(*c.T) > 0.1
    assert m.min_angle()[far].min() > 20.0


def test_dump_load_roundtrip(tmp_path, two_pole_mesh):
    f = tmp_path / "m.txt"
    dump(two_pole_mesh, f)
    header = f.read_text().splitlines()[0].split()
    assert [int(x) for x in header] == [two_pole_mesh.n, len(two_pole_mesh.triangles), len(two_pole_mesh.pairs)]
    back = load(f)
    assert back.fingerprint() == two_pole_mesh.fingerprint()
    assert np.array_equal(back.crack_edges, two_pole_mesh.crack_edges)


def test_deterministic_generation():
    cfg = PoleConfiguration(1, 0, [0.4], [0.2], 0.3)
    dom = Rectangle(-0.5, 0.5, -0.5, 0.5)
    a = generate(dom, build_crack_layout(cfg, 0.1, dom), 0.1)
    b = generate(dom, build_crack_layout(cfg, 0.1, dom), 0.1)
    assert a.fingerprint() == b.fingerprint()


def test_crack_near_boundary_rejected():
    crack = Crack(0, "segment", 0, np.array([-0.2, 0.48]), np.array([0.2, 0.48]), np.array([0.0, 1.0]))
    lay = interior_crack_layout([crack], [[-0.2, 0.48], [0.2, 0.48]])
    with pytest.raises(MeshError):
        generate(Rectangle(-0.5, 0.5, -0.5, 0.5), lay, 0.1)


def test_disk_polygon_area():
    m = generate(Disk(1.0), None, 0.1)
    assert mesh_area(m) == pytest.approx(domain_polygon_area(Disk(1.0), 0.1), abs=1e-12)


def test_rotation_preserves_geometry(two_pole_mesh):
    r = two_pole_mesh.rotated(0.7)
    np.testing.assert_allclose(r.signed_areas(), two_pole_mesh.signed_areas(), rtol=1e-12)
    np.testing.assert_allclose(np.hypot(*r.vertices.T), np.hypot(*two_pole_mesh.vertices.T), atol=1e-15)

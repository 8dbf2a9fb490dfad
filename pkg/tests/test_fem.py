import math

import numpy as np
import pytest
import scipy.sparse as sp

from abclab.fem import (AFFINE, ANTI, CONT, ConstraintError, DiscreteField, JumpConstraintSet, assemble,
                        crack_load_Leps, jump_constraints, reduce_constraints, solve_constrained_min,
                        weighted_mass)
from abclab.geometry import (STUB, Crack, Disk, PoleConfiguration, Rectangle, build_crack_layout,
                             interior_crack_layout)
from abclab.mesh import CrackedMesh, GradingSpec, generate


@pytest.fixture(scope="module")
def slit():
    crack = Crack(0, "segment", 0, np.array([-0.25, 0.0]), np.array([0.25, 0.0]), np.array([0.0, 1.0]))
    lay = interior_crack_layout([crack], [[-0.25, 0.0], [0.25, 0.0]])
    m = generate(Rectangle(-0.5, 0.5, -0.5, 0.5), lay, 0.08)
    K, M = assemble(m)
    return m, K, M


@pytest.fixture(scope="module")
def solo():
    cfg = PoleConfiguration(1, 0, [0.5], [0.4], 0.5)
    dom = Disk(1.0)
    m = generate(dom, build_crack_layout(cfg, 0.5, dom), 0.1, GradingSpec(ratio=0.3))
    return cfg, m


def test_unit_triangle_element():
    m = CrackedMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]), np.zeros(3, int),
                    np.zeros((0, 3), int), np.zeros((0, 5), int))
    K, M = assemble(m)
    np.testing.assert_allclose(K.toarray(), 0.5 * np.array([[2, -1, -1], [-1, 1, 0], [-1, 0, 1]]), atol=1e-15)
    np.testing.assert_allclose(M.toarray(), np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24, atol=1e-16)


def test_degenerate_triangle_rejected():
    m = CrackedMesh(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]), np.zeros(3, int),
                    np.zeros((0, 3), int), np.zeros((0, 5), int))
    with pytest.raises(ValueError):
        assemble(m)


def test_constants_in_kernel_and_mass_is_area(slit):
    m, K, M = slit
    assert abs(K @ np.ones(m.n)).max() < 1e-12
    assert M.sum() == pytest.approx(1.0, abs=1e-13)
    assert abs(K - K.T).max() < 1e-14
    np.testing.assert_allclose(weighted_mass(m, lambda x: np.ones(len(x))).toarray(), M.toarray(), atol=1e-15)


def test_weighted_mass_integrates_quadratics(slit):
    m, _, _ = slit
    W = weighted_mass(m, lambda x: x[:, 0] ** 2)
    # int x^2 over the square is 1/12
    assert W.sum() == pytest.approx(1 / 12, abs=1e-13)


def test_anti_reduction_dimension(slit):
    m, K, _ = slit
    cs = jump_constraints(m, ANTI)
    relations = {(int(p), int(q)) for p, q in zip(cs.plus, cs.minus)}
    assert len(relations) == len(m.pairs) + len(m.tip_nodes())
    red = reduce_constraints(m.n, cs, m.boundary_nodes())
    assert red.dim == m.n - len(relations) - len(m.boundary_nodes())
    # tips are fixed: t + t = 0
    assert np.all(np.asarray(red.P[m.tip_nodes()].sum(axis=1)).ravel() == 0)
    Kr = red.reduce_matrix(K)
    assert abs(Kr - Kr.T).max() < 1e-14


def test_cont_reduction_keeps_tips_free(slit):
    m, _, _ = slit
    red = reduce_constraints(m.n, jump_constraints(m, CONT), m.boundary_nodes())
    assert red.dim == m.n - len(m.pairs) - len(m.boundary_nodes())


def test_odd_rays_fix_origin():
    cfg = PoleConfiguration(3, 0, [0.0, 2 * math.pi / 3, -2 * math.pi / 3], [0.5] * 3, 0.6)
    dom = Disk(1.0)
    m = generate(dom, build_crack_layout(cfg, 0.0, dom), 0.15)
    red = reduce_constraints(m.n, jump_constraints(m, ANTI), m.boundary_nodes())
    origin = m.origin_sheets()
    assert len(origin) == 3
    assert red.P[origin].nnz == 0
    np.testing.assert_array_equal(red.u_fix[origin], 0.0)
    # two rays only: origin stays free
    cfg2 = PoleConfiguration(2, 0, [0.0, 2.0], [0.5] * 2, 0.6)
    m2 = generate(dom, build_crack_layout(cfg2, 0.0, dom), 0.15)
    red2 = reduce_constraints(m2.n, jump_constraints(m2, ANTI), m2.boundary_nodes())
    assert red2.P[m2.origin_sheets()].nnz == 2


def test_affine_with_zero_offset_equals_anti(slit):
    m, _, _ = slit
    a = reduce_constraints(m.n, jump_constraints(m, ANTI), m.boundary_nodes())
    b = reduce_constraints(m.n, jump_constraints(m, AFFINE, g=lambda x, c: np.zeros(len(x))), m.boundary_nodes())
    assert (a.P != b.P).nnz == 0
    np.testing.assert_array_equal(a.u_fix, b.u_fix)


def test_inconsistent_cycle_signalled():
    cs = JumpConstraintSet(np.array([0, 0]), np.array([1, 1]), [CONT, CONT], np.array([0.0, 1.0]))
    with pytest.raises(ConstraintError):
        reduce_constraints(2, cs)


def test_constant_load_gives_twice_length(slit):
    m, _, _ = slit
    ell = crack_load_Leps(m, lambda x, c: np.ones(len(x)), [0])
    assert ell.sum() == pytest.approx(1.0, abs=1e-14)
    minus = set(m.pairs[:, 1].tolist())
    assert np.all(ell[sorted(minus)] == 0.0)
    # an antisymmetric field only sees its + trace
    w = np.zeros(m.n)
    w[m.pairs[:, 0]] = 1.0
    w[m.pairs[:, 1]] = -1.0
    w[m.tip_nodes()] = 0.0
    wp = np.where(w > 0, 1.0, 0.0)
    assert ell @ w == pytest.approx(ell @ wp, abs=1e-15)


def test_singular_load_on_stub(solo):
    cfg, m = solo
    stub = [c for c in m.cracks if c.kind == STUB][0]
    s = np.hypot(*stub.end)
    ell = crack_load_Leps(m, lambda x, c: np.hypot(x[:, 0], x[:, 1]) ** -0.5, [stub.id])
    assert ell.sum() == pytest.approx(4 * math.sqrt(s), abs=1e-8)


def test_unknown_crack_in_load_signalled(slit):
    m, _, _ = slit
    with pytest.raises(ValueError):
        crack_load_Leps(m, lambda x, c: np.ones(len(x)), [0, 7])


def test_zero_data_gives_zero(slit):
    m, K, _ = slit
    red = reduce_constraints(m.n, jump_constraints(m, ANTI), m.boundary_nodes())
    u, res = solve_constrained_min(K, np.zeros(m.n), red)
    assert np.all(u == 0.0) and res == 0.0


def _affine_problem(slit):
    m, K, _ = slit
    g = lambda x, c: 1.0 + x[:, 0]
    cs = jump_constraints(m, AFFINE, g=g)
    red = reduce_constraints(m.n, cs, m.boundary_nodes())
    return m, K, cs, red


def test_harmonic_extension_is_minimal(slit):
    m, K, cs, red = _affine_problem(slit)
    V, _ = solve_constrained_min(K, np.zeros(m.n), red, mesh=m)
    assert cs.residual(V.values) < 1e-12
    J = lambda u: 0.5 * u @ (K @ u)
    rng = np.random.default_rng(11)
    for _ in range(20):
        w = V.values + red.P @ rng.normal(scale=0.05, size=red.dim)
        assert cs.residual(w) < 1e-12
        assert J(w) > J(V.values)


def test_galerkin_orthogonality(slit):
    m, K, cs, red = _affine_problem(slit)
    rng = np.random.default_rng(5)
    ell = np.zeros(m.n)
    ell[m.pairs[:, 0]] = rng.normal(size=len(m.pairs))
    u, _ = solve_constrained_min(K, ell, red)
    r = red.reduce_vector(K @ u + ell)
    assert np.max(np.abs(r)) <= 1e-10 * np.max(np.abs(ell))


def test_interval_with_interior_jump():
    # [0, 1] with the node at 1/2 split in two; u(0) = u(1) = 0, u_+ + u_- = g,
    # load c on the plus copy.  Exact minimizer: left slope a / (1/2) with a = (2g - c) / 4.
    N = 8
    x_left = np.linspace(0, 0.5, N + 1)
    x_right = np.linspace(0.5, 1, N + 1)
    n = 2 * (N + 1)
    h = 0.5 / N
    rows, cols, vals = [], [], []
    for off in (0, N + 1):
        for e in range(N):
            i, j = off + e, off + e + 1
            rows += [i, i, j, j]
            cols += [i, j, i, j]
            vals += [1 / h, -1 / h, -1 / h, 1 / h]
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    plus, minus = N, N + 1
    g, c = 0.7, 0.3
    cs = JumpConstraintSet(np.array([plus]), np.array([minus]), [AFFINE], np.array([g]))
    red = reduce_constraints(n, cs, [0, n - 1])
    ell = np.zeros(n)
    ell[plus] = c
    u, _ = solve_constrained_min(K, ell, red)
    a = (2 * g - c) / 4
    np.testing.assert_allclose(u[:N + 1], a * x_left / 0.5, atol=1e-12)
    np.testing.assert_allclose(u[N + 1:], (g - a) * (1 - x_right) / 0.5, atol=1e-12)


def test_patch_test_linear_field(slit):
    m, K, _ = slit
    x, y = m.vertices.T
    u = 1.0 + 2.0 * x - 3.0 * y
    red = reduce_constraints(m.n, jump_constraints(m, CONT), m.boundary_nodes())
    assert np.max(np.abs(red.reduce_vector(K @ u))) < 1e-12
    f = DiscreteField(m, u)
    pts = np.array([[0.1, 0.2], [-0.33, 0.41], [0.2, -0.001]])
    np.testing.assert_allclose(f(pts), 1 + 2 * pts[:, 0] - 3 * pts[:, 1], atol=1e-13)


def test_field_outside_mesh_signalled(slit):
    m, _, _ = slit
    with pytest.raises(ValueError):
        DiscreteField(m, np.zeros(m.n))(np.array([[2.0, 2.0]]))


def test_shared_tip_between_anti_and_cont(solo):
    cfg, m = solo
    stub_ids = [c.id for c in m.cracks if c.kind == STUB]
    modes = {c.id: (CONT if c.id in stub_ids else ANTI) for c in m.cracks}
    red = reduce_constraints(m.n, jump_constraints(m, modes), m.boundary_nodes())
    tip = m.tip_nodes()
    assert red.P[tip].nnz == 1
    # k1 = 1 with ANTI ray and CONT stub: the origin sheets are tied with a sign flip, hence fixed
    assert red.P[m.origin_sheets()].nnz == 0

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ntdlab.assembly import (
    Potential,
    assemble_boundary_load,
    assemble_stiffness,
    assemble_weighted_mass,
    build_gamma_patch,
    export_coo,
    mass_matrix,
    triangle_gradient_products,
    triangle_l2_products,
)
from ntdlab.errors import MeshError, PatchError, PotentialError
from ntdlab.mesh import Mesh, Region, build_unit_square_mesh

# Local stiffness matrices of the two right triangles of a grid cell, worked
# out by hand from the barycentric gradients (independent of h).
K_LOWER = np.array([[0.5, -0.5, 0.0], [-0.5, 1.0, -0.5], [0.0, -0.5, 0.5]])  # (a, b, c)
K_UPPER = np.array([[0.5, 0.0, -0.5], [0.0, 0.5, -0.5], [-0.5, -0.5, 1.0]])  # (a, c, d)


def hand_assembled_stiffness(n):
    K = np.zeros(((n + 1) ** 2, (n + 1) ** 2))
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            b, c, d = a + 1, a + n + 2, a + n + 1
            for tri, loc in (((a, b, c), K_LOWER), ((a, c, d), K_UPPER)):
                for r in range(3):
                    for s in range(3):
                        K[tri[r], tri[s]] += loc[r, s]
    return K


def test_stiffness_matches_hand_assembly():
    K = assemble_stiffness(build_unit_square_mesh(2)).toarray()
    assert K.shape == (9, 9)
    assert np.allclose(K, hand_assembled_stiffness(2), atol=1e-15)


def test_stiffness_row_sums_zero():
    K = assemble_stiffness(build_unit_square_mesh(1))
    assert np.abs(K.sum(axis=1)).max() <= 1e-15


@pytest.mark.parametrize("n", [1, 3, 8])
def test_stiffness_linear_energy(n):
    m = build_unit_square_mesh(n)
    K = assemble_stiffness(m)
    x = m.nodes[:, 0]
    assert abs(x @ K @ x - 1.0) <= 1e-12


def test_stiffness_exactly_symmetric(mesh8):
    K = assemble_stiffness(mesh8)
    assert abs(K - K.T).max() == 0.0


def test_stiffness_on_irregular_mesh():
    # a perturbed mesh: the energy of a linear function is still exact
    m = build_unit_square_mesh(5)
    rng = np.random.default_rng(1)
    nodes = m.nodes.copy()
    interior = np.all((nodes > 0) & (nodes < 1), axis=1)
    nodes[interior] += rng.uniform(-0.05, 0.05, (interior.sum(), 2))
    pm = Mesh.from_arrays(nodes, m.triangles)
    K = assemble_stiffness(pm)
    f = 2.0 * pm.nodes[:, 0] - 3.0 * pm.nodes[:, 1]
    assert abs(f @ K @ f - 13.0) <= 1e-12


def test_mass_constant_field():
    m = build_unit_square_mesh(8)
    M = assemble_weighted_mass(m, Potential.constant(m, 1.0))
    one = np.ones(m.n_nodes)
    assert abs(one @ M @ one - 1.0) <= 1e-14


def test_mass_linear_in_q(mesh4):
    M1 = assemble_weighted_mass(mesh4, Potential.constant(mesh4, 1.0))
    # scaling by a power of two commutes with every rounding step
    M2 = assemble_weighted_mass(mesh4, Potential.constant(mesh4, 2.0))
    assert abs(M2 - 2.0 * M1).max() == 0.0
    M3 = assemble_weighted_mass(mesh4, Potential.constant(mesh4, 3.0))
    assert abs(M3 - 3.0 * M1).max() <= 4 * np.finfo(float).eps * abs(M3).max()


def test_mass_two_valued():
    m = build_unit_square_mesh(8)
    q = Potential.from_regions(m, 1.0, [(Region.rectangle(0, 0.5, 0, 1), 2.0)])
    M = assemble_weighted_mass(m, q)
    one = np.ones(m.n_nodes)
    # sum_T q_T |T|
    expected = float(np.sum(q.values * m.areas()))
    assert abs(expected - 1.5) <= 1e-14
    assert abs(one @ M @ one - 1.5) <= 1e-14


def test_local_mass_against_quadrature(mesh4):
    # 3-point edge-midpoint rule is exact for quadratics on triangles
    rng = np.random.default_rng(0)
    u = rng.standard_normal(mesh4.n_nodes)
    v = rng.standard_normal(mesh4.n_nodes)
    ut, vt = u[mesh4.triangles], v[mesh4.triangles]
    mids_u = 0.5 * (ut + np.roll(ut, -1, axis=1))
    mids_v = 0.5 * (vt + np.roll(vt, -1, axis=1))
    quad = mesh4.areas() * np.mean(mids_u * mids_v, axis=1)
    assert np.allclose(triangle_l2_products(mesh4, u, v), quad, rtol=1e-13, atol=1e-16)
    M = mass_matrix(mesh4, np.ones(mesh4.n_triangles))
    assert abs(u @ M @ v - quad.sum()) <= 1e-13


def test_gradient_products_sum_to_stiffness(mesh4):
    rng = np.random.default_rng(2)
    u = rng.standard_normal(mesh4.n_nodes)
    K = assemble_stiffness(mesh4)
    assert abs(triangle_gradient_products(mesh4, u).sum() - u @ K @ u) <= 1e-12 * abs(u @ K @ u)


@pytest.mark.parametrize("bad", [0.0, -1.0, np.nan, np.inf])
def test_potential_rejects_non_positive(mesh4, bad):
    v = np.ones(mesh4.n_triangles)
    v[3] = bad
    with pytest.raises(PotentialError):
        Potential(v)


def test_potential_min_value(mesh4):
    q = Potential.from_regions(mesh4, 2.0, [(Region.disk((0.5, 0.5), 0.2), 0.25)])
    assert q.min_value == 0.25


def test_degenerate_stiffness_rejected():
    with pytest.raises(MeshError):
        Mesh.from_arrays([[0, 0], [1, 1], [2, 2]], [[0, 1, 2]])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_coercivity(seed):
    rng = np.random.default_rng(seed)
    m = build_unit_square_mesh(5)
    q = Potential(rng.uniform(0.1, 10.0, m.n_triangles))
    K = assemble_stiffness(m)
    Mq = assemble_weighted_mass(m, q)
    M1 = assemble_weighted_mass(m, Potential.constant(m, 1.0))
    w = rng.standard_normal(m.n_nodes)
    lhs = w @ (K + Mq) @ w
    floor = q.min_value * (w @ M1 @ w)
    assert lhs >= floor * (1 - 1e-12) and floor > 0


def test_gamma_full_boundary(mesh4):
    p = build_gamma_patch(mesh4, "all")
    assert p.size == 16
    assert abs(p.mass.sum() - 4.0) <= 1e-14
    assert np.array_equal(p.mass, p.mass.T)
    assert np.linalg.eigvalsh(p.mass).min() > 0


def test_gamma_bottom(mesh4):
    p = build_gamma_patch(mesh4, "bottom")
    assert p.nodes.tolist() == [0, 1, 2, 3, 4]
    assert abs(p.mass.sum() - 1.0) <= 1e-14
    # tridiagonal in the Gamma ordering
    assert np.count_nonzero(np.triu(p.mass, 2)) == 0
    g = mesh4.nodes[p.nodes, 0]
    assert abs(p.inner(g, np.ones(p.size)) - 0.5) <= 1e-12


def test_gamma_interval_and_sides(mesh4):
    a = build_gamma_patch(mesh4, (0.0, 1.0))
    b = build_gamma_patch(mesh4, "bottom")
    assert a.same_as(b)
    two = build_gamma_patch(mesh4, "bottom,right")
    assert two.size == 9 and abs(two.length - 2.0) <= 1e-14
    assert two.nodes.tolist() == [0, 1, 2, 3, 4, 9, 14, 19, 24]
    wrap = build_gamma_patch(mesh4, (3.5, 0.5))
    assert abs(wrap.length - 1.0) <= 1e-14


def test_gamma_predicate(mesh4):
    p = build_gamma_patch(mesh4, lambda mid: mid[:, 1] > 0.99)
    assert p.size == 5 and abs(p.length - 1.0) <= 1e-14
    # ccw orientation walks the top edge from right to left
    assert p.nodes.tolist() == [24, 23, 22, 21, 20]


def test_gamma_empty_rejected(mesh4):
    with pytest.raises(PatchError):
        build_gamma_patch(mesh4, lambda mid: np.zeros(len(mid), dtype=bool))
    with pytest.raises(PatchError):
        build_gamma_patch(mesh4, "diagonal")


def test_boundary_load_examples(mesh4):
    p = build_gamma_patch(mesh4, "bottom")
    assert not np.any(assemble_boundary_load(p, np.zeros(p.size)))
    assert abs(assemble_boundary_load(p, np.ones(p.size)).sum() - 1.0) <= 1e-14
    hat = np.zeros(p.size)
    hat[2] = 1.0
    load = assemble_boundary_load(p, hat)
    assert np.flatnonzero(load).tolist() == [1, 2, 3]
    assert np.allclose(load[[1, 2, 3]], 0.25 / 6 * np.array([1.0, 4.0, 1.0]), rtol=0, atol=1e-16)


def test_boundary_load_dimension(mesh4):
    p = build_gamma_patch(mesh4, "bottom")
    with pytest.raises(PatchError):
        assemble_boundary_load(p, np.ones(4))


def test_coo_export(tmp_path, mesh4):
    K = assemble_stiffness(mesh4)
    path = tmp_path / "k.txt"
    export_coo(K, path)
    data = np.loadtxt(path)
    back = np.zeros(K.shape)
    back[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 2]
    assert np.array_equal(back, K.toarray())

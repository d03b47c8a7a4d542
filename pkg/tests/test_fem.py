import numpy as np
import pytest

from ddmgnn.fem import (
    PolyCoeffs,
    assemble,
    element_stiffness,
    eval_poly,
    expand_solution,
    residual,
)
from ddmgnn.mesh import generate_blob_mesh, generate_rect_mesh, signed_areas
from ddmgnn.sparse import factorize


def test_eval_poly_examples():
    p = PolyCoeffs((1.0, 1.0, 1.0), (0.0, 0.0, 0.0, 0.0, 0.0, 5.0))
    assert eval_poly(p, "source", 0.0, 0.0) == 2.0
    assert eval_poly(p, "boundary", 3.0, -7.0) == 5.0
    p2 = PolyCoeffs((2.0, 3.0, -1.0), (0.0,) * 6)
    assert eval_poly(p2, "source", 2.0, 1.0) == 4.0


def test_element_stiffness_unit_right_triangle():
    k = element_stiffness((0, 0), (1, 0), (0, 1))
    expected = np.array([[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]])
    assert np.allclose(k, expected, atol=1e-15)


def test_element_stiffness_row_sums_zero():
    k = element_stiffness((0.3, 1.1), (2.0, 0.4), (1.2, 2.5))
    assert np.allclose(k.sum(axis=1), 0.0, atol=1e-14)
    assert np.allclose(k, k.T)


def test_element_stiffness_scale_invariant():
    p = [(0.2, 0.1), (1.3, 0.5), (0.6, 1.8)]
    k1 = element_stiffness(*p)
    k3 = element_stiffness(*[(3 * x, 3 * y) for x, y in p])
    assert np.allclose(k1, k3, rtol=1e-14)


def test_element_stiffness_rejects_degenerate():
    with pytest.raises(ValueError):
        element_stiffness((0, 0), (1, 1), (2, 2))


def test_affine_solution_exact():
    mesh = generate_blob_mesh(seed=5, target_nodes=300, perturbation=0.15)
    sys = assemble(mesh, (lambda x, y: 0.0 * x, lambda x, y: 1.0 + x))
    u = factorize(sys.a).solve(sys.b)
    exact = 1.0 + mesh.coords[sys.node_of_interior, 0]
    assert np.abs(u - exact).max() < 1e-10


def test_homogeneous_problem_is_zero():
    mesh = generate_rect_mesh(6, 6, 1.0, 1.0, [])
    sys = assemble(mesh, PolyCoeffs((0.0, 0.0, 0.0), (0.0,) * 6))
    assert np.all(sys.b == 0.0)
    assert np.abs(factorize(sys.a).solve(sys.b)).max() == 0.0


def _sin_sin_l2_error(nx):
    mesh = generate_rect_mesh(nx, nx, 1.0, 1.0, [])
    f = lambda x, y: 2.0 * np.pi**2 * np.sin(np.pi * x) * np.sin(np.pi * y)
    sys = assemble(mesh, (f, lambda x, y: 0.0 * x))
    uh = factorize(sys.a).solve(sys.b)
    xi = mesh.coords[sys.node_of_interior]
    err = np.zeros(mesh.n_nodes)
    err[sys.node_of_interior] = uh - np.sin(np.pi * xi[:, 0]) * np.sin(np.pi * xi[:, 1])
    areas = signed_areas(mesh.coords, mesh.triangles)
    return float(np.sqrt(np.sum(areas[:, None] / 3.0 * err[mesh.triangles] ** 2)))


def test_second_order_convergence():
    e8, e16, e32 = (_sin_sin_l2_error(nx) for nx in (8, 16, 32))
    assert 3.5 <= e8 / e16 <= 4.5
    assert 3.5 <= e16 / e32 <= 4.5


def test_assembled_matrix_bitwise_symmetric(small_problem):
    a = small_problem.system.a
    assert (abs(a - a.T)).nnz == 0


def test_spd_on_random_vectors(small_problem):
    a = small_problem.system.a
    rng = np.random.default_rng(0)
    for _ in range(100):
        v = rng.standard_normal(a.shape[0])
        assert v @ (a @ v) > 0.0


def test_pattern_matches_interior_adjacency(small_problem):
    mesh, sys = small_problem.mesh, small_problem.system
    adj = set()
    for i, j, k in mesh.triangles:
        for a_, b_ in ((i, j), (j, k), (k, i)):
            ia, ib = sys.interior_of_node[a_], sys.interior_of_node[b_]
            if ia >= 0 and ib >= 0:
                adj.add((ia, ib))
                adj.add((ib, ia))
    for i in range(sys.n):
        adj.add((i, i))
    coo = sys.a.tocoo()
    pattern = set(zip(coo.row.tolist(), coo.col.tolist()))
    assert pattern == adj


def test_permutation_consistency():
    mesh = generate_rect_mesh(5, 4, 1.0, 1.0, [])
    coeffs = PolyCoeffs((2.0, -1.0, 0.5), (1.0, 0.0, 2.0, 0.0, -1.0, 3.0))
    sys = assemble(mesh, coeffs)
    rng = np.random.default_rng(4)
    perm = rng.permutation(mesh.n_nodes)
    from ddmgnn.mesh import Mesh, boundary_flags

    inv = np.argsort(perm)
    coords2 = mesh.coords[perm]
    tris2 = inv[mesh.triangles]
    mesh2 = Mesh(coords2, tris2, boundary_flags(mesh.n_nodes, tris2))
    sys2 = assemble(mesh2, coeffs)
    # match interior DOFs through the node permutation
    for node in np.flatnonzero(~mesh.boundary):
        i1 = sys.interior_of_node[node]
        i2 = sys2.interior_of_node[inv[node]]
        assert abs(sys.b[i1] - sys2.b[i2]) <= 1e-13 * max(1.0, abs(sys.b[i1]))
    a1 = sys.a.toarray()
    a2 = sys2.a.toarray()
    map21 = sys2.interior_of_node[inv[sys.node_of_interior]]
    assert np.allclose(a1, a2[np.ix_(map21, map21)], rtol=1e-14, atol=1e-14)


def test_constant_boundary_reproduced():
    mesh = generate_blob_mesh(seed=9, target_nodes=250, perturbation=0.2)
    sys = assemble(mesh, PolyCoeffs((0.0, 0.0, 0.0), (0.0, 0.0, 0.0, 0.0, 0.0, 4.5)))
    u = factorize(sys.a).solve(sys.b)
    assert np.abs(u - 4.5).max() < 1e-10


def test_residual_contract(small_problem):
    sys = small_problem.system
    u = factorize(sys.a).solve(sys.b)
    assert np.linalg.norm(residual(sys, u)) <= 1e-10 * np.linalg.norm(sys.b)
    assert np.array_equal(residual(sys, np.zeros(sys.n)), sys.b)
    rng = np.random.default_rng(1)
    v = rng.standard_normal(sys.n)
    dense = sys.b - sys.a.toarray() @ v
    r = residual(sys, v)
    assert np.abs(r - dense).max() <= 1e-14 * np.abs(dense).max()
    with pytest.raises(ValueError):
        residual(sys, np.zeros(sys.n + 1))


def test_assemble_rejects_no_interior():
    mesh = generate_rect_mesh(2, 2, 1.0, 1.0, [])
    # carve the single interior node away by flagging everything boundary
    from ddmgnn.mesh import Mesh

    all_boundary = Mesh(mesh.coords, mesh.triangles, np.ones(mesh.n_nodes, bool))
    with pytest.raises(ValueError):
        assemble(all_boundary, PolyCoeffs((1.0, 1.0, 1.0), (0.0,) * 6))


def test_expand_solution(small_problem):
    sys = small_problem.system
    u = factorize(sys.a).solve(sys.b)
    full = expand_solution(sys, u)
    assert np.array_equal(full[sys.boundary_nodes], sys.g_values)
    assert np.array_equal(full[sys.node_of_interior], u)

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from ddmgnn.decomp import Decomposition, add_overlap, extend, nicolaides, partition, restrict


def path_graph(n):
    ones = [1.0] * (n - 1)
    return sp.csr_matrix(sp.diags([ones, [1.0] * n, ones], [-1, 0, 1]))


def test_partition_path_graph():
    owner = partition(path_graph(4), 2, seed=0)
    parts = {frozenset(np.flatnonzero(owner == r).tolist()) for r in range(owner.max() + 1)}
    assert parts == {frozenset({0, 1}), frozenset({2, 3})}


def test_partition_single_part():
    owner = partition(path_graph(6), 6, seed=1)
    assert owner.max() == 0
    assert np.all(owner == 0)


def test_partition_desk_k3(small_problem):
    # interior DOF count near 2600 split at target 1000 gives K = 3
    from ddmgnn.dataset import ProblemConfig, build_problem

    prob = build_problem(13, ProblemConfig(target_nodes=2750, perturbation=0.2,
                                           subdomain_size=1000, overlap=2))
    n = prob.system.n
    assert prob.dec.n_subdomains == round(n / 1000) == 3


def test_partition_rejects_disconnected():
    a = sp.block_diag([path_graph(3), path_graph(3)]).tocsr()
    with pytest.raises(ValueError, match="not connected"):
        partition(a, 2, seed=0)


def test_partition_parts_connected_and_balanced(small_problem):
    sys = small_problem.system
    owner = partition(sys.a, 100, seed=5)
    sizes = np.bincount(owner)
    assert sizes.min() > 0
    assert sizes.max() <= 2 * sizes.min()
    for r in range(owner.max() + 1):
        members = set(np.flatnonzero(owner == r).tolist())
        start = next(iter(members))
        seen = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            row = sys.a.indices[sys.a.indptr[u]:sys.a.indptr[u + 1]]
            for v in row:
                v = int(v)
                if v in members and v not in seen:
                    seen.add(v)
                    stack.append(v)
        assert seen == members


def test_partition_deterministic(small_problem):
    sys = small_problem.system
    o1 = partition(sys.a, 120, seed=9)
    o2 = partition(sys.a, 120, seed=9)
    assert np.array_equal(o1, o2)


def test_add_overlap_path_one_layer():
    owner = np.array([0, 0, 0, 1, 1])
    dec = add_overlap(owner, path_graph(5), 1)
    assert dec.subdomains[0].tolist() == [0, 1, 2, 3]
    assert dec.subdomains[1].tolist() == [2, 3, 4]


def test_zero_overlap_weights_all_one():
    owner = np.array([0, 0, 1, 1])
    dec = add_overlap(owner, path_graph(4), 0)
    assert [s.tolist() for s in dec.subdomains] == [[0, 1], [2, 3]]
    assert all(np.all(w == 1.0) for w in dec.pou_weights)


def test_partition_of_unity_identity(small_problem):
    dec = small_problem.dec
    n = dec.n_dofs
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.standard_normal(n)
        acc = np.zeros(n)
        for i in range(dec.n_subdomains):
            acc += extend(dec, i, dec.pou_weights[i] * restrict(dec, i, x))
        assert np.abs(acc - x).max() <= 1e-15 * np.abs(x).max()


def test_restrict_extend_contracts(small_problem):
    dec = small_problem.dec
    n = dec.n_dofs
    ones = np.ones(n)
    for i in range(dec.n_subdomains):
        assert np.all(restrict(dec, i, ones) == 1.0)
    rng = np.random.default_rng(3)
    for _ in range(20):
        i = int(rng.integers(dec.n_subdomains))
        v = rng.standard_normal(dec.subdomains[i].size)
        assert np.array_equal(restrict(dec, i, extend(dec, i, v)), v)
        x = rng.standard_normal(n)
        lhs = extend(dec, i, v) @ x
        rhs = v @ restrict(dec, i, x)
        assert abs(lhs - rhs) <= 1e-15 * np.linalg.norm(v) * np.linalg.norm(x)


def test_nicolaides_no_overlap_indicator():
    owner = np.array([0, 0, 1, 1])
    dec = add_overlap(owner, path_graph(4), 0)
    r0 = dec.r0.toarray()
    assert np.array_equal(r0, np.array([[1, 1, 0, 0], [0, 0, 1, 1]], dtype=float))


def test_nicolaides_rows_sum_to_one(small_problem):
    total = np.asarray(small_problem.dec.r0.sum(axis=0)).ravel()
    assert np.abs(total - 1.0).max() <= 1e-15


def test_nicolaides_hand_case_path6():
    dec = add_overlap(np.array([0, 0, 0, 1, 1, 1]), path_graph(6), 1)
    r0 = dec.r0.toarray()
    expected = np.array([[1, 1, 0.5, 0.5, 0, 0], [0, 0, 0.5, 0.5, 1, 1]])
    assert np.array_equal(r0, expected)


def test_coverage_and_frontier_multiplicity(small_problem):
    dec = small_problem.dec
    count = np.zeros(dec.n_dofs)
    for s in dec.subdomains:
        count[s] += 1
    assert count.min() >= 1
    # with overlap >= 1, base-part frontier DOFs belong to >= 2 subdomains
    sys = small_problem.system
    owner = dec.base_owner
    for u in range(dec.n_dofs):
        row = sys.a.indices[sys.a.indptr[u]:sys.a.indptr[u + 1]]
        if any(owner[v] != owner[u] for v in row):
            assert count[u] >= 2


def test_coarse_matrix_spd(small_problem):
    dec, a = small_problem.dec, small_problem.system.a
    coarse = (dec.r0 @ a @ dec.r0.T).toarray()
    np.linalg.cholesky(coarse)


def test_json_round_trip(small_problem):
    dec = small_problem.dec
    back = Decomposition.from_json(dec.to_json())
    assert back.overlap == dec.overlap
    assert np.array_equal(back.base_owner, dec.base_owner)
    assert all(np.array_equal(a, b) for a, b in zip(back.subdomains, dec.subdomains))
    assert np.array_equal(back.r0.toarray(), dec.r0.toarray())


@settings(max_examples=15, deadline=None)
@given(n=st.integers(6, 40), target=st.integers(2, 12), seed=st.integers(0, 100))
def test_partition_covers_path_graphs(n, target, seed):
    owner = partition(path_graph(n), min(target, n), seed)
    assert owner.min() >= 0
    sizes = np.bincount(owner)
    assert sizes.min() >= 1

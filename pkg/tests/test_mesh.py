import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ddmgnn.mesh import (
    MeshFormatError,
    boundary_flags,
    export_mesh,
    generate_blob_mesh,
    generate_rect_mesh,
    import_mesh,
    signed_areas,
    validate_mesh,
)


def test_unperturbed_disk_valid():
    mesh = generate_blob_mesh(seed=7, target_nodes=100, perturbation=0.0)
    validate_mesh(mesh)
    # unperturbed: all boundary nodes on the unit circle
    r = np.linalg.norm(mesh.coords[mesh.boundary], axis=1)
    assert np.allclose(r, 1.0, atol=1e-12)


def test_blob_determinism_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.mesh", tmp_path / "b.mesh"
    export_mesh(generate_blob_mesh(7, 100, 0.2), p1)
    export_mesh(generate_blob_mesh(7, 100, 0.2), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_blob_perturbed_positive_areas():
    mesh = generate_blob_mesh(seed=3, target_nodes=400, perturbation=0.2)
    assert signed_areas(mesh.coords, mesh.triangles).min() > 0


@pytest.mark.parametrize("target", [16, 25, 100, 700])
def test_blob_node_count_within_20pct(target):
    mesh = generate_blob_mesh(seed=1, target_nodes=target, perturbation=0.1)
    assert 0.8 * target <= mesh.n_nodes <= 1.2 * target


def test_blob_rejects_bad_args():
    with pytest.raises(ValueError):
        generate_blob_mesh(0, 15, 0.1)
    with pytest.raises(ValueError):
        generate_blob_mesh(0, 100, 0.31)
    with pytest.raises(ValueError):
        generate_blob_mesh(0, 100, -0.01)


@settings(max_examples=12, deadline=None)
@given(seed=st.integers(0, 10_000), target=st.integers(16, 600),
       pert=st.floats(0.0, 0.3))
def test_blob_always_valid(seed, target, pert):
    mesh = generate_blob_mesh(seed, target, pert)
    validate_mesh(mesh)


def test_rect_2x2_counts_and_areas():
    mesh = generate_rect_mesh(2, 2, 1.0, 1.0, [])
    assert mesh.n_nodes == 9
    assert mesh.n_triangles == 8
    assert np.allclose(signed_areas(mesh.coords, mesh.triangles), 0.125)


def test_rect_hole_rim_flagged_boundary():
    mesh = generate_rect_mesh(4, 4, 1.0, 1.0, [(1, 1, 2, 2)])
    validate_mesh(mesh)
    # the four corners of the removed cell are rim nodes
    rim = [(0.25, 0.25), (0.5, 0.25), (0.25, 0.5), (0.5, 0.5)]
    for x, y in rim:
        idx = np.flatnonzero((mesh.coords[:, 0] == x) & (mesh.coords[:, 1] == y))
        assert idx.size == 1 and mesh.boundary[idx[0]]


def test_rect_rejects_bad_holes():
    with pytest.raises(ValueError):
        generate_rect_mesh(4, 4, 1.0, 1.0, [(0, 1, 2, 2)])  # touches boundary
    with pytest.raises(ValueError):
        generate_rect_mesh(6, 6, 1.0, 1.0, [(1, 1, 3, 3), (2, 2, 4, 4)])  # overlap


def test_area_sum_matches_domain_area():
    mesh = generate_rect_mesh(8, 5, 2.0, 1.0, [(2, 2, 4, 3)])
    cell = (2.0 / 8) * (1.0 / 5)
    expected = 2.0 * 1.0 - 2 * 1 * cell
    total = signed_areas(mesh.coords, mesh.triangles).sum()
    assert abs(total - expected) <= 1e-12 * expected

    blob = generate_blob_mesh(11, 300, 0.25)
    # boundary polygon of a star-shaped domain, ordered by angle
    ring = np.flatnonzero(blob.boundary)
    ring = ring[np.argsort(np.arctan2(blob.coords[ring, 1], blob.coords[ring, 0]))]
    x, y = blob.coords[ring, 0], blob.coords[ring, 1]
    poly = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    total = signed_areas(blob.coords, blob.triangles).sum()
    assert abs(total - poly) <= 1e-12 * poly


def test_boundary_flags_idempotent():
    mesh = generate_blob_mesh(2, 120, 0.1)
    recomputed = boundary_flags(mesh.n_nodes, mesh.triangles)
    assert np.array_equal(recomputed, mesh.boundary)


def test_export_import_round_trip(tmp_path):
    mesh = generate_rect_mesh(2, 2, 1.0, 1.0, [])
    path = tmp_path / "m.mesh"
    export_mesh(mesh, path)
    back = import_mesh(path)
    assert np.array_equal(back.coords, mesh.coords)
    assert np.array_equal(back.triangles, mesh.triangles)
    assert np.array_equal(back.boundary, mesh.boundary)
    # bit-exact second export
    path2 = tmp_path / "m2.mesh"
    export_mesh(back, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_import_reports_out_of_range_index(tmp_path):
    mesh = generate_rect_mesh(2, 2, 1.0, 1.0, [])
    path = tmp_path / "bad.mesh"
    export_mesh(mesh, path)
    lines = path.read_text().splitlines()
    lines[12] = "0 1 99"  # first triangle line of the 9-node mesh
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshFormatError, match=r":13: .*out of range"):
        import_mesh(path)


def test_import_rejects_clockwise_triangle(tmp_path):
    mesh = generate_rect_mesh(2, 2, 1.0, 1.0, [])
    path = tmp_path / "cw.mesh"
    export_mesh(mesh, path)
    lines = path.read_text().splitlines()
    i, j, k = lines[12].split()
    lines[12] = f"{i} {k} {j}"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(MeshFormatError, match="non-positive area"):
        import_mesh(path)


def test_import_rejects_bad_header(tmp_path):
    path = tmp_path / "h.mesh"
    path.write_text("mesh3d v9\n")
    with pytest.raises(MeshFormatError, match=":1:"):
        import_mesh(path)

"""2D unstructured triangle meshes: random smooth blobs, rectangles with holes, text I/O.

A mesh is a plain (coords, triangles, boundary-flag) triple.  Boundary flags
are structural: a node is on the boundary iff it touches an edge used by
exactly one triangle.  All generators are pure functions of their arguments,
so a given argument tuple reproduces the same mesh bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Mesh",
    "MeshFormatError",
    "generate_blob_mesh",
    "generate_rect_mesh",
    "export_mesh",
    "import_mesh",
    "signed_areas",
    "boundary_flags",
    "validate_mesh",
]


class MeshFormatError(ValueError):
    """Raised when a mesh file does not conform to the ``mesh2d v1`` format."""


@dataclass(frozen=True)
class Mesh:
    """Immutable triangle mesh.

    coords    : (n, 2) float64 node positions
    triangles : (t, 3) int64 node indices, counter-clockwise
    boundary  : (n,) bool, True iff the node lies on the domain boundary
    """

    coords: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]


def _freeze(mesh: Mesh) -> Mesh:
    for arr in (mesh.coords, mesh.triangles, mesh.boundary):
        arr.setflags(write=False)
    return mesh


def signed_areas(coords: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Signed area of every triangle (positive for CCW orientation)."""
    p0 = coords[triangles[:, 0]]
    p1 = coords[triangles[:, 1]]
    p2 = coords[triangles[:, 2]]
    return 0.5 * (
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1])
    )


def _edge_counts(triangles: np.ndarray) -> dict[tuple[int, int], int]:
    counts: dict[tuple[int, int], int] = {}
    for i, j, k in triangles:
        for a, b in ((i, j), (j, k), (k, i)):
            key = (a, b) if a < b else (b, a)
            counts[key] = counts.get(key, 0) + 1
    return counts


def boundary_flags(n_nodes: int, triangles: np.ndarray) -> np.ndarray:
    """Structural boundary flags: endpoints of edges used by exactly one triangle."""
    flags = np.zeros(n_nodes, dtype=bool)
    for (a, b), cnt in _edge_counts(triangles).items():
        if cnt == 1:
            flags[a] = True
            flags[b] = True
    return flags


def validate_mesh(mesh: Mesh) -> None:
    """Check all structural mesh invariants; raise ValueError on the first violation."""
    n = mesh.n_nodes
    tris = mesh.triangles
    if tris.size and (tris.min() < 0 or tris.max() >= n):
        raise ValueError("triangle index out of range")
    areas = signed_areas(mesh.coords, tris)
    if np.any(areas <= 0):
        t = int(np.argmax(areas <= 0))
        raise ValueError(f"triangle {t} has non-positive area {areas[t]:g}")
    counts = _edge_counts(tris)
    if any(c > 2 for c in counts.values()):
        raise ValueError("edge shared by more than 2 triangles")
    flags = boundary_flags(n, tris)
    if not np.array_equal(flags, mesh.boundary):
        raise ValueError("boundary flags inconsistent with edge structure")
    # connectivity over triangle adjacency (shared edges)
    t_count = mesh.n_triangles
    if t_count == 0:
        raise ValueError("mesh has no triangles")
    edge_to_tris: dict[tuple[int, int], list[int]] = {}
    for t, (i, j, k) in enumerate(tris):
        for a, b in ((i, j), (j, k), (k, i)):
            key = (a, b) if a < b else (b, a)
            edge_to_tris.setdefault(key, []).append(t)
    seen = np.zeros(t_count, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        t = stack.pop()
        i, j, k = tris[t]
        for a, b in ((i, j), (j, k), (k, i)):
            key = (a, b) if a < b else (b, a)
            for t2 in edge_to_tris[key]:
                if not seen[t2]:
                    seen[t2] = True
                    stack.append(t2)
    if not seen.all():
        raise ValueError("mesh is not a single connected component")


def _zip_rings(inner: np.ndarray, outer: np.ndarray) -> list[tuple[int, int, int]]:
    """Triangulate the annulus strip between two concentric node rings.

    Both rings are listed in increasing-angle order.  The strip is walked by
    fractional angular progress (compared with exact integer arithmetic), so
    the triangulation is deterministic and contains len(inner) + len(outer)
    triangles.
    """
    n_in, n_out = len(inner), len(outer)
    tris = []
    i = k = 0
    while i < n_in or k < n_out:
        advance_inner = i < n_in and (k == n_out or (i + 1) * n_out <= (k + 1) * n_in)
        if advance_inner:
            tris.append((inner[i % n_in], outer[k % n_out], inner[(i + 1) % n_in]))
            i += 1
        else:
            tris.append((inner[i % n_in], outer[k % n_out], outer[(k + 1) % n_out]))
            k += 1
    return tris


def generate_blob_mesh(seed: int, target_nodes: int, perturbation: float) -> Mesh:
    """Mesh a random smooth star-shaped domain.

    The unit disk is triangulated by concentric rings whose node counts grow
    toward the boundary, then pushed through a radial map
    r(theta) = 1 + perturbation * g(theta), where g is a random 4-mode Fourier
    series normalized to |g| <= 1 (so the radius stays in [1-p, 1+p] and no
    triangle can invert for p <= 0.3).
    """
    if target_nodes < 16:
        raise ValueError(f"target_nodes must be >= 16, got {target_nodes}")
    if not 0.0 <= perturbation <= 0.3:
        raise ValueError(f"perturbation must be in [0, 0.3], got {perturbation}")

    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 1.0, 4)
    b = rng.uniform(-1.0, 1.0, 4)
    amp = float(np.sum(np.hypot(a, b)))

    def radius(theta: np.ndarray) -> np.ndarray:
        if amp == 0.0 or perturbation == 0.0:
            return np.ones_like(theta)
        modes = np.arange(1, 5)[:, None] * theta[None, :]
        g = (a[:, None] * np.cos(modes) + b[:, None] * np.sin(modes)).sum(axis=0)
        return 1.0 + perturbation * g / amp

    # ring sizes: n_j ~ gamma * j, last ring padded so the node count is exact
    n_rings = max(2, round(np.sqrt(target_nodes / 3.0)))
    gamma = 2.0 * (target_nodes - 1) / (n_rings * (n_rings + 1))
    ring_sizes = [max(3, round(gamma * j)) for j in range(1, n_rings + 1)]
    ring_sizes[-1] += target_nodes - (1 + sum(ring_sizes))
    ring_sizes[-1] = max(3, ring_sizes[-1])

    coords = [np.zeros((1, 2))]
    rings: list[np.ndarray] = []
    next_id = 1
    for j, nj in enumerate(ring_sizes, start=1):
        theta = 2.0 * np.pi * np.arange(nj) / nj
        rho = (j / n_rings) * radius(theta)
        coords.append(np.column_stack((rho * np.cos(theta), rho * np.sin(theta))))
        rings.append(np.arange(next_id, next_id + nj))
        next_id += nj

    tris: list[tuple[int, int, int]] = []
    first = rings[0]
    for i in range(len(first)):
        tris.append((0, first[i], first[(i + 1) % len(first)]))
    for j in range(1, n_rings):
        tris.extend(_zip_rings(rings[j - 1], rings[j]))

    triangles = np.asarray(tris, dtype=np.int64)
    all_coords = np.vstack(coords)
    mesh = Mesh(all_coords, triangles, boundary_flags(len(all_coords), triangles))
    validate_mesh(mesh)
    return _freeze(mesh)


def generate_rect_mesh(
    nx: int,
    ny: int,
    lx: float,
    ly: float,
    holes: list[tuple[int, int, int, int]] | None = None,
) -> Mesh:
    """Structured crossed-triangle mesh of an lx-by-ly rectangle with rectangular holes.

    Each grid cell is split into two triangles along one diagonal, alternating
    by cell parity.  ``holes`` are half-open cell-index rectangles
    (i0, j0, i1, j1) removing cells i0 <= i < i1, j0 <= j < j1; they must lie
    strictly inside the grid and must not overlap each other.
    """
    if nx < 2 or ny < 2:
        raise ValueError(f"nx, ny must be >= 2, got ({nx}, {ny})")
    holes = list(holes or [])
    removed = np.zeros((nx, ny), dtype=bool)
    for h, (i0, j0, i1, j1) in enumerate(holes):
        if not (0 < i0 < i1 < nx and 0 < j0 < j1 < ny):
            raise ValueError(f"hole {h} touches the outer boundary or is empty")
        block = removed[i0:i1, j0:j1]
        if block.any():
            raise ValueError(f"hole {h} overlaps another hole")
        block[:] = True

    def node_id(i: int, j: int) -> int:
        return j * (nx + 1) + i

    tris: list[tuple[int, int, int]] = []
    for j in range(ny):
        for i in range(nx):
            if removed[i, j]:
                continue
            v00 = node_id(i, j)
            v10 = node_id(i + 1, j)
            v11 = node_id(i + 1, j + 1)
            v01 = node_id(i, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v10, v11, v01))
                tris.append((v10, v01, v00))

    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    lattice = np.column_stack(
        (np.tile(xs, ny + 1), np.repeat(ys, nx + 1))
    )
    triangles = np.asarray(tris, dtype=np.int64)

    # drop lattice nodes interior to holes (not referenced by any kept triangle)
    used = np.zeros(lattice.shape[0], dtype=bool)
    used[triangles.ravel()] = True
    renumber = -np.ones(lattice.shape[0], dtype=np.int64)
    renumber[used] = np.arange(int(used.sum()))
    coords = lattice[used]
    triangles = renumber[triangles]

    mesh = Mesh(coords, triangles, boundary_flags(len(coords), triangles))
    validate_mesh(mesh)
    return _freeze(mesh)


def export_mesh(mesh: Mesh, path: str) -> None:
    """Write a mesh in the line-oriented ``mesh2d v1`` text format (17 significant digits)."""
    lines = ["mesh2d v1", f"nodes {mesh.n_nodes}"]
    for (x, y), flag in zip(mesh.coords, mesh.boundary):
        lines.append(f"{x:.17g} {y:.17g} {int(flag)}")
    lines.append(f"tris {mesh.n_triangles}")
    for i, j, k in mesh.triangles:
        lines.append(f"{i} {j} {k}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_mesh(path: str) -> Mesh:
    """Parse a ``mesh2d v1`` file; errors name the offending 1-based line number."""
    with open(path) as fh:
        lines = fh.read().splitlines()

    def fail(ln: int, msg: str):
        raise MeshFormatError(f"{path}:{ln}: {msg}")

    if not lines or lines[0].strip() != "mesh2d v1":
        fail(1, "expected header 'mesh2d v1'")
    if len(lines) < 2 or not lines[1].startswith("nodes "):
        fail(2, "expected 'nodes <N>'")
    try:
        n_nodes = int(lines[1].split()[1])
    except (IndexError, ValueError):
        fail(2, "malformed node count")
    coords = np.zeros((n_nodes, 2))
    flags = np.zeros(n_nodes, dtype=bool)
    for r in range(n_nodes):
        ln = 3 + r
        parts = lines[ln - 1].split() if ln - 1 < len(lines) else []
        if len(parts) != 3:
            fail(ln, "expected 'x y b'")
        try:
            coords[r, 0], coords[r, 1] = float(parts[0]), float(parts[1])
            flag = int(parts[2])
        except ValueError:
            fail(ln, "malformed node line")
        if flag not in (0, 1):
            fail(ln, f"boundary flag must be 0 or 1, got {parts[2]}")
        flags[r] = bool(flag)
    tri_header = 3 + n_nodes
    if tri_header - 1 >= len(lines) or not lines[tri_header - 1].startswith("tris "):
        fail(tri_header, "expected 'tris <T>'")
    try:
        n_tris = int(lines[tri_header - 1].split()[1])
    except (IndexError, ValueError):
        fail(tri_header, "malformed triangle count")
    tris = np.zeros((n_tris, 3), dtype=np.int64)
    for r in range(n_tris):
        ln = tri_header + 1 + r
        parts = lines[ln - 1].split() if ln - 1 < len(lines) else []
        if len(parts) != 3:
            fail(ln, "expected 'i j k'")
        try:
            tris[r] = [int(p) for p in parts]
        except ValueError:
            fail(ln, "malformed triangle line")
        if tris[r].min() < 0 or tris[r].max() >= n_nodes:
            fail(ln, f"triangle index out of range (node count {n_nodes})")
        p0, p1, p2 = coords[tris[r]]
        area = 0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
        if area <= 0:
            fail(ln, "non-positive area")
    mesh = Mesh(coords, tris, flags)
    try:
        validate_mesh(mesh)
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
    return _freeze(mesh)

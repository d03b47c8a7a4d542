"""P1 Galerkin assembly of the Poisson problem with Dirichlet data.

The assembled system is reduced to the interior nodes (symmetric elimination
of the boundary values), which keeps it SPD for conjugate-gradient solvers.
The load vector uses vertex quadrature: integral(f * phi_i) over a triangle
is approximated by area/3 * f(vertex_i).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .mesh import Mesh, signed_areas

__all__ = [
    "PolyCoeffs",
    "LinearSystem",
    "eval_poly",
    "element_stiffness",
    "assemble",
    "residual",
    "expand_solution",
]


@dataclass(frozen=True)
class PolyCoeffs:
    """Coefficients of the random quadratic source/boundary polynomials.

    source   f(x, y) = r1*(x-1)^2 + r2*y^2 + r3
    boundary g(x, y) = r4*x^2 + r5*y^2 + r6*x*y + r7*x + r8*y + r9
    """

    f_coeffs: tuple[float, float, float]
    g_coeffs: tuple[float, float, float, float, float, float]


def eval_poly(p: PolyCoeffs, which: str, x, y):
    """Evaluate the source or boundary polynomial at (x, y); vectorized."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if which == "source":
        r1, r2, r3 = p.f_coeffs
        return r1 * (x - 1.0) ** 2 + r2 * y**2 + r3
    if which == "boundary":
        r4, r5, r6, r7, r8, r9 = p.g_coeffs
        return r4 * x**2 + r5 * y**2 + r6 * x * y + r7 * x + r8 * y + r9
    raise ValueError(f"which must be 'source' or 'boundary', got {which!r}")


@dataclass(frozen=True)
class LinearSystem:
    """Reduced SPD system over interior degrees of freedom.

    a                : CSR stiffness matrix over interior nodes
    b                : right-hand side with boundary data eliminated
    interior_of_node : mesh node -> interior DOF index (-1 on the boundary)
    node_of_interior : interior DOF index -> mesh node
    boundary_nodes   : mesh node indices flagged boundary, ascending
    g_values         : Dirichlet data at boundary_nodes
    """

    a: sp.csr_matrix
    b: np.ndarray
    interior_of_node: np.ndarray
    node_of_interior: np.ndarray
    boundary_nodes: np.ndarray
    g_values: np.ndarray

    @property
    def n(self) -> int:
        return self.b.shape[0]


def element_stiffness(p0, p1, p2) -> np.ndarray:
    """3x3 P1 stiffness matrix of one triangle (rows sum to zero)."""
    x = np.array([p0[0], p1[0], p2[0]], dtype=float)
    y = np.array([p0[1], p1[1], p2[1]], dtype=float)
    area = 0.5 * ((x[1] - x[0]) * (y[2] - y[0]) - (x[2] - x[0]) * (y[1] - y[0]))
    if area <= 0:
        raise ValueError(f"degenerate or inverted triangle (signed area {area:g})")
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    return (np.outer(b, b) + np.outer(c, c)) / (4.0 * area)


def assemble(mesh: Mesh, problem) -> LinearSystem:
    """Assemble the reduced interior system for a Poisson problem on a mesh.

    ``problem`` is either a PolyCoeffs or a (source, boundary) pair of
    callables f(x, y) / g(x, y) accepting vectorized coordinates.
    """
    if isinstance(problem, PolyCoeffs):
        f: Callable = lambda x, y: eval_poly(problem, "source", x, y)
        g: Callable = lambda x, y: eval_poly(problem, "boundary", x, y)
    else:
        f, g = problem

    interior = ~mesh.boundary
    n_int = int(interior.sum())
    if n_int == 0:
        raise ValueError("mesh has no interior nodes")

    interior_of_node = -np.ones(mesh.n_nodes, dtype=np.int64)
    interior_of_node[interior] = np.arange(n_int)
    node_of_interior = np.flatnonzero(interior)
    boundary_nodes = np.flatnonzero(mesh.boundary)

    x, y = mesh.coords[:, 0], mesh.coords[:, 1]
    f_vals = np.asarray(f(x, y), dtype=float)
    g_full = np.zeros(mesh.n_nodes)
    g_full[boundary_nodes] = np.asarray(
        g(x[boundary_nodes], y[boundary_nodes]), dtype=float
    )

    tris = mesh.triangles
    areas = signed_areas(mesh.coords, tris)
    xt = mesh.coords[tris, 0]  # (T, 3)
    yt = mesh.coords[tris, 1]
    bt = np.stack((yt[:, 1] - yt[:, 2], yt[:, 2] - yt[:, 0], yt[:, 0] - yt[:, 1]), axis=1)
    ct = np.stack((xt[:, 2] - xt[:, 1], xt[:, 0] - xt[:, 2], xt[:, 1] - xt[:, 0]), axis=1)
    k_el = (bt[:, :, None] * bt[:, None, :] + ct[:, :, None] * ct[:, None, :]) / (
        4.0 * areas
    )[:, None, None]

    # dict accumulation keyed (row, col): symmetric pairs see identical values in
    # identical triangle order, so the assembled matrix is bitwise symmetric
    acc: dict[tuple[int, int], float] = {}
    for t in range(tris.shape[0]):
        nodes = tris[t]
        kt = k_el[t]
        for li in range(3):
            gi = nodes[li]
            for lj in range(3):
                key = (gi, nodes[lj])
                acc[key] = acc.get(key, 0.0) + kt[li, lj]

    load = np.bincount(
        tris.ravel(),
        weights=np.repeat(areas / 3.0, 3) * f_vals[tris].ravel(),
        minlength=mesh.n_nodes,
    )

    rows, cols, vals = [], [], []
    b_red = load[node_of_interior].copy()
    for (gi, gj), v in acc.items():
        ii = interior_of_node[gi]
        if ii < 0:
            continue
        jj = interior_of_node[gj]
        if jj >= 0:
            rows.append(ii)
            cols.append(jj)
            vals.append(v)
        else:
            b_red[ii] -= v * g_full[gj]

    a = sp.csr_matrix(
        (vals, (rows, cols)), shape=(n_int, n_int), dtype=float
    )
    a.sort_indices()
    return LinearSystem(
        a=a,
        b=b_red,
        interior_of_node=interior_of_node,
        node_of_interior=node_of_interior,
        boundary_nodes=boundary_nodes,
        g_values=g_full[boundary_nodes],
    )


def residual(sys: LinearSystem, u: np.ndarray) -> np.ndarray:
    """b - A*u on the reduced system."""
    u = np.asarray(u, dtype=float)
    if u.shape != (sys.n,):
        raise ValueError(f"expected vector of length {sys.n}, got shape {u.shape}")
    return sys.b - sys.a @ u


def expand_solution(sys: LinearSystem, u: np.ndarray) -> np.ndarray:
    """Re-expand an interior solution to all mesh nodes, with g on the boundary."""
    full = np.zeros(sys.interior_of_node.shape[0])
    full[sys.node_of_interior] = u
    full[sys.boundary_nodes] = sys.g_values
    return full

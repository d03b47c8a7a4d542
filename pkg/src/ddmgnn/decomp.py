"""Overlapping decompositions of the interior-DOF graph.

Builds a balanced base partition by greedy BFS region growing (farthest-point
seeds, smallest-region-first growth, one boundary-smoothing pass), expands it
by BFS layers into overlapping subdomains, and equips the result with a
multiplicity partition of unity and the coarse matrix of per-subdomain
weighted constants.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Decomposition",
    "partition",
    "add_overlap",
    "restrict",
    "extend",
    "nicolaides",
]


@dataclass(frozen=True)
class Decomposition:
    """K overlapping subdomains over N DOFs.

    subdomains  : K ascending index arrays (the overlapping sets)
    base_owner  : (N,) base-partition id per DOF
    overlap     : number of BFS layers added to each base part
    pou_weights : per-subdomain weights D_i with sum_i R_i^T D_i R_i = I
    r0          : K x N coarse matrix; row i carries D_i on subdomain i
    """

    subdomains: list[np.ndarray]
    base_owner: np.ndarray
    overlap: int
    pou_weights: list[np.ndarray]
    r0: sp.csr_matrix

    @property
    def n_subdomains(self) -> int:
        return len(self.subdomains)

    @property
    def n_dofs(self) -> int:
        return self.base_owner.shape[0]

    def to_json(self) -> str:
        return json.dumps(
            {
                "overlap": self.overlap,
                "owner": self.base_owner.tolist(),
                "subdomains": [s.tolist() for s in self.subdomains],
            }
        )

    @staticmethod
    def from_json(text: str) -> "Decomposition":
        obj = json.loads(text)
        subs = [np.asarray(s, dtype=np.int64) for s in obj["subdomains"]]
        owner = np.asarray(obj["owner"], dtype=np.int64)
        return _finish_decomposition(subs, owner, int(obj["overlap"]))


def _neighbors(adj: sp.csr_matrix, u: int) -> np.ndarray:
    cols = adj.indices[adj.indptr[u] : adj.indptr[u + 1]]
    return cols[cols != u]


def _bfs_distances(adj: sp.csr_matrix, sources) -> np.ndarray:
    n = adj.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    queue = deque()
    for s in np.atleast_1d(sources):
        dist[s] = 0
        queue.append(int(s))
    while queue:
        u = queue.popleft()
        for v in _neighbors(adj, u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(int(v))
    return dist


def partition(adjacency: sp.csr_matrix, target_size: int, seed: int) -> np.ndarray:
    """Partition a connected graph into K = round(N / target_size) connected parts.

    Returns the owner array.  Seeds are picked by repeated farthest-point BFS
    from a seeded random start; regions then grow breadth-first, always
    expanding the currently smallest region, followed by one boundary
    smoothing pass toward smaller neighbor regions.
    """
    n = adjacency.shape[0]
    if not 1 <= target_size <= n:
        raise ValueError(f"target_size must be in [1, {n}], got {target_size}")
    dist0 = _bfs_distances(adjacency, 0)
    if np.any(dist0 < 0):
        raise ValueError("adjacency graph is not connected")

    k = int(round(n / target_size))
    k = min(max(k, 1), n)

    rng = np.random.default_rng(seed)
    start = int(rng.integers(n))
    d = _bfs_distances(adjacency, start)
    seeds = [int(np.argmax(d))]
    d = _bfs_distances(adjacency, seeds[0])
    while len(seeds) < k:
        nxt = int(np.argmax(d))
        seeds.append(nxt)
        d = np.minimum(d, _bfs_distances(adjacency, nxt))

    owner = np.full(n, -1, dtype=np.int64)
    sizes = np.zeros(k, dtype=np.int64)
    queues = [deque([s]) for s in seeds]
    for r, s in enumerate(seeds):
        owner[s] = r
        sizes[r] = 1
    active = set(range(k))
    while active:
        r = min(active, key=lambda q: (sizes[q], q))
        queue = queues[r]
        grew = False
        while queue and not grew:
            u = queue.popleft()
            for v in _neighbors(adjacency, u):
                if owner[v] < 0:
                    owner[v] = r
                    sizes[r] += 1
                    queue.append(int(v))
                    grew = True
        if not queue and not grew:
            active.discard(r)

    # one smoothing pass: shift frontier DOFs into strictly smaller neighbor
    # regions when the donor region stays connected and nonempty
    for u in range(n):
        r = int(owner[u])
        if sizes[r] <= 1:
            continue
        neighbor_regions = sorted(
            {int(owner[v]) for v in _neighbors(adjacency, u)} - {r}
        )
        candidates = [r2 for r2 in neighbor_regions if sizes[r2] + 1 < sizes[r]]
        if not candidates:
            continue
        r2 = min(candidates, key=lambda q: (sizes[q], q))
        if _connected_without(adjacency, owner, r, u):
            owner[u] = r2
            sizes[r] -= 1
            sizes[r2] += 1
    return owner


def _connected_without(adj: sp.csr_matrix, owner: np.ndarray, region: int, drop: int) -> bool:
    members = np.flatnonzero(owner == region)
    members = members[members != drop]
    if members.size == 0:
        return False
    keep = set(members.tolist())
    seen = {int(members[0])}
    stack = [int(members[0])]
    while stack:
        u = stack.pop()
        for v in _neighbors(adj, u):
            v = int(v)
            if v in keep and v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == members.size


def _finish_decomposition(
    subdomains: list[np.ndarray], owner: np.ndarray, overlap: int
) -> Decomposition:
    n = owner.shape[0]
    multiplicity = np.zeros(n)
    for sub in subdomains:
        multiplicity[sub] += 1.0
    if np.any(multiplicity == 0):
        raise ValueError("subdomains do not cover all DOFs")
    weights = [1.0 / multiplicity[sub] for sub in subdomains]
    dec = Decomposition(subdomains, owner, overlap, weights, r0=None)
    r0 = nicolaides(dec)
    object.__setattr__(dec, "r0", r0)
    return dec


def add_overlap(base_owner: np.ndarray, adjacency: sp.csr_matrix, overlap: int) -> Decomposition:
    """Expand each base part by ``overlap`` BFS layers and build the Decomposition."""
    if overlap < 0:
        raise ValueError("overlap must be >= 0")
    k = int(base_owner.max()) + 1
    subdomains = []
    for r in range(k):
        members = np.flatnonzero(base_owner == r)
        layer = deque((int(u), 0) for u in members)
        depth = {int(u): 0 for u in members}
        while layer:
            u, d = layer.popleft()
            if d == overlap:
                continue
            for v in _neighbors(adjacency, u):
                v = int(v)
                if v not in depth:
                    depth[v] = d + 1
                    layer.append((v, d + 1))
        subdomains.append(np.array(sorted(depth), dtype=np.int64))
    return _finish_decomposition(subdomains, np.asarray(base_owner, dtype=np.int64), overlap)


def restrict(dec: Decomposition, i: int, x: np.ndarray) -> np.ndarray:
    """Pick the entries of a global vector living on subdomain i, in subdomain order."""
    x = np.asarray(x)
    if x.shape != (dec.n_dofs,):
        raise ValueError(f"expected global vector of length {dec.n_dofs}")
    return x[dec.subdomains[i]]


def extend(dec: Decomposition, i: int, v: np.ndarray) -> np.ndarray:
    """Scatter a subdomain vector back to a global vector, zero elsewhere."""
    v = np.asarray(v)
    sub = dec.subdomains[i]
    if v.shape != (sub.shape[0],):
        raise ValueError(f"expected local vector of length {sub.shape[0]}")
    out = np.zeros(dec.n_dofs)
    out[sub] = v
    return out


def nicolaides(dec: Decomposition) -> sp.csr_matrix:
    """Coarse matrix of partition-of-unity-weighted subdomain indicators (K x N)."""
    k, n = dec.n_subdomains, dec.n_dofs
    rows = np.concatenate([np.full(s.size, r) for r, s in enumerate(dec.subdomains)])
    cols = np.concatenate(dec.subdomains)
    vals = np.concatenate(dec.pou_weights)
    r0 = sp.csr_matrix((vals, (rows, cols)), shape=(k, n))
    r0.sort_indices()
    return r0

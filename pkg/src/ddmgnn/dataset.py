"""Training-corpus generation: harvest local problems from preconditioned solves.

Each global problem is a random blob mesh with random quadratic source and
boundary polynomials (coefficients uniform in [-10, 10]).  The global system
is solved by PCG preconditioned with the two-level Schwarz method using exact
local solves, and at every iteration each subdomain with a nonzero local
residual contributes one sample: its graph plus the normalized residual.
Splits are by problem id so no problem leaks across train/val/test.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .asm import build_asm
from .decomp import Decomposition, add_overlap, partition
from .dss import LocalGraph
from .fem import LinearSystem, PolyCoeffs, assemble
from .hybrid import build_local_graphs
from .mesh import Mesh, generate_blob_mesh
from .sparse import pcg

__all__ = [
    "ProblemConfig",
    "DatasetConfig",
    "Problem",
    "DatasetSample",
    "build_problem",
    "generate",
    "split",
    "sample_to_json",
    "sample_from_json",
    "load_samples",
]


@dataclass(frozen=True)
class ProblemConfig:
    target_nodes: int = 900
    perturbation: float = 0.2
    subdomain_size: int = 150
    overlap: int = 2


@dataclass(frozen=True)
class DatasetConfig:
    n_problems: int
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    tol: float = 1e-6
    max_iter: int = 500
    seed: int = 0
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)


@dataclass
class Problem:
    """A fully set-up global Poisson problem with its overlapping decomposition."""

    mesh: Mesh
    coeffs: PolyCoeffs
    system: LinearSystem
    dec: Decomposition
    coords: np.ndarray  # interior DOF coordinates


@dataclass
class DatasetSample:
    pid: int
    iteration: int
    sub: int
    graph: LocalGraph


def sample_coeffs(rng: np.random.Generator) -> PolyCoeffs:
    vals = rng.uniform(-10.0, 10.0, 9)
    return PolyCoeffs(tuple(vals[:3]), tuple(vals[3:]))


def build_problem(seed: int, config: ProblemConfig = ProblemConfig()) -> Problem:
    """Mesh, coefficients, reduced system, and decomposition from one seed."""
    mesh = generate_blob_mesh(seed, config.target_nodes, config.perturbation)
    coeffs = sample_coeffs(np.random.default_rng((seed, 1)))
    system = assemble(mesh, coeffs)
    owner = partition(system.a, config.subdomain_size, seed)
    dec = add_overlap(owner, system.a, config.overlap)
    coords = mesh.coords[system.node_of_interior]
    return Problem(mesh, coeffs, system, dec, coords)


def harvest_problem(problem: Problem, pid: int, tol: float, max_iter: int):
    """Run PCG with the exact two-level preconditioner, sampling every application.

    Returns (samples, report); samples are empty when the solve does not
    converge.
    """
    asm2 = build_asm(problem.system.a, problem.dec, "two")
    templates = build_local_graphs(problem.system.a, problem.coords, problem.dec)
    samples: list[DatasetSample] = []
    counter = {"it": 0}

    def harvesting_precond(r):
        it = counter["it"]
        counter["it"] += 1
        for i, idx in enumerate(problem.dec.subdomains):
            r_i = r[idx]
            scale = float(np.linalg.norm(r_i))
            if scale > 0.0:
                samples.append(
                    DatasetSample(pid, it, i, templates[i].with_residual(r_i / scale, scale))
                )
        return asm2(r)

    _, report = pcg(problem.system.a, problem.system.b, harvesting_precond, tol, max_iter)
    if not report.converged:
        return [], report
    return samples, report


def split(samples: list[DatasetSample], ratios, seed: int):
    """Partition samples into len(ratios) groups by problem id (largest remainder)."""
    ratios = list(ratios)
    if abs(sum(ratios) - 1.0) > 1e-12:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    if not samples:
        raise ValueError("empty dataset")
    pids = sorted({s.pid for s in samples})
    n = len(pids)
    base = [int(np.floor(r * n)) for r in ratios]
    remainders = [r * n - b for r, b in zip(ratios, base)]
    for _ in range(n - sum(base)):
        i = int(np.argmax(remainders))
        base[i] += 1
        remainders[i] = -1.0
    for r, cnt in zip(ratios, base):
        if r > 0 and cnt == 0:
            raise ValueError(f"split with ratio {r} received no problems (have {n})")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    groups = []
    start = 0
    for cnt in base:
        chosen = {pids[i] for i in order[start : start + cnt]}
        groups.append([s for s in samples if s.pid in chosen])
        start += cnt
    return groups


def sample_to_json(s: DatasetSample) -> str:
    g = s.graph
    und = g.edges[g.edges[:, 0] < g.edges[:, 1]]
    a = g.a_local
    return json.dumps(
        {
            "pid": s.pid,
            "iter": s.iteration,
            "sub": s.sub,
            "coords": g.coords.tolist(),
            "edges": und.tolist(),
            "csr": {"rp": a.indptr.tolist(), "ci": a.indices.tolist(), "v": a.data.tolist()},
            "c": g.c.tolist(),
            "scale": g.scale,
        }
    )


def sample_from_json(line: str) -> DatasetSample:
    obj = json.loads(line)
    coords = np.asarray(obj["coords"], dtype=float)
    und = np.asarray(obj["edges"], dtype=np.int64).reshape(-1, 2)
    both = np.vstack((und, und[:, ::-1]))
    order = np.lexsort((both[:, 1], both[:, 0]))
    edges = both[order]
    edge_vec = coords[edges[:, 1]] - coords[edges[:, 0]]
    edge_len = np.hypot(edge_vec[:, 0], edge_vec[:, 1])
    csr = obj["csr"]
    n = coords.shape[0]
    a = sp.csr_matrix(
        (np.asarray(csr["v"], dtype=float), np.asarray(csr["ci"]), np.asarray(csr["rp"])),
        shape=(n, n),
    )
    graph = LocalGraph(
        coords,
        edges,
        edge_vec,
        edge_len,
        a,
        np.asarray(obj["c"], dtype=float),
        float(obj["scale"]),
    )
    return DatasetSample(int(obj["pid"]), int(obj["iter"]), int(obj["sub"]), graph)


def _write_samples(path: str, samples: list[DatasetSample]) -> None:
    with open(path, "w") as fh:
        for s in samples:
            fh.write(sample_to_json(s) + "\n")


def load_samples(path: str) -> list[DatasetSample]:
    with open(path) as fh:
        return [sample_from_json(line) for line in fh if line.strip()]


def generate(out_dir: str, config: DatasetConfig) -> dict:
    """Generate the corpus; writes samples.jsonl, split files, and manifest.json.

    Deterministic per config: rerunning with identical arguments reproduces
    every output file byte for byte.  Returns the manifest.
    """
    os.makedirs(out_dir, exist_ok=True)
    base_rng = np.random.default_rng(config.seed)
    problem_seeds = [int(s) for s in base_rng.integers(0, 2**62, size=config.n_problems)]

    all_samples: list[DatasetSample] = []
    solve_iterations = {}
    skipped = []
    for pid, pseed in enumerate(problem_seeds):
        problem = build_problem(pseed, config.problem)
        samples, report = harvest_problem(problem, pid, config.tol, config.max_iter)
        if not samples:
            skipped.append({"pid": pid, "seed": pseed, "final_relres": report.final_relres})
            continue
        solve_iterations[pid] = report.iterations
        all_samples.extend(samples)

    groups = split(all_samples, config.ratios, config.seed)
    _write_samples(os.path.join(out_dir, "samples.jsonl"), all_samples)
    for name, group in zip(("train", "val", "test"), groups):
        _write_samples(os.path.join(out_dir, f"{name}.jsonl"), group)

    manifest = {
        "config": asdict(config),
        "problem_seeds": problem_seeds,
        "skipped": skipped,
        "solve_iterations": solve_iterations,
        "n_samples": len(all_samples),
        "split_sizes": [len(g) for g in groups],
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest

"""One- and two-level additive Schwarz preconditioners with exact local solves.

apply_asm computes sum_i R_i^T (R_i A R_i^T)^-1 R_i r, plus the coarse term
R_0^T (R_0 A R_0^T)^-1 R_0 r for the two-level variant.  Plain (unweighted)
extension keeps the operator symmetric, as required by conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .decomp import Decomposition
from .sparse import Factorization, SolveReport, factorize

__all__ = [
    "AsmPreconditioner",
    "build_asm",
    "apply_asm",
    "asm_fixed_point",
    "extract_local_matrix",
    "coarse_matrix",
]


def extract_local_matrix(a: sp.csr_matrix, idx: np.ndarray) -> sp.csr_matrix:
    """Principal submatrix R_i A R_i^T for an ascending index set."""
    sub = a[idx, :][:, idx].tocsr()
    sub.sort_indices()
    return sub


def coarse_matrix(a: sp.csr_matrix, dec: Decomposition) -> np.ndarray:
    """Dense K x K Galerkin coarse matrix R_0 A R_0^T, after a rank check on R_0."""
    r0 = dec.r0
    gram = (r0 @ r0.T).toarray()
    if np.linalg.matrix_rank(gram) < dec.n_subdomains:
        raise RuntimeError("coarse rows are rank deficient")
    return (r0 @ a @ r0.T).toarray()


@dataclass
class AsmPreconditioner:
    dec: Decomposition
    local_matrices: list[sp.csr_matrix]
    local_factorizations: list[Factorization]
    coarse_factorization: Factorization | None
    level: str  # "one" or "two"

    def __call__(self, r: np.ndarray) -> np.ndarray:
        return apply_asm(self, r)


def build_asm(a: sp.csr_matrix, dec: Decomposition, level: str) -> AsmPreconditioner:
    """Extract and factorize all local (and, for level="two", coarse) matrices."""
    if level not in ("one", "two"):
        raise ValueError(f"level must be 'one' or 'two', got {level!r}")
    locals_, facts = [], []
    for i, idx in enumerate(dec.subdomains):
        a_i = extract_local_matrix(a, idx)
        try:
            facts.append(factorize(a_i))
        except RuntimeError as exc:
            raise RuntimeError(f"singular local matrix in subdomain {i}: {exc}") from exc
        locals_.append(a_i)
    coarse_fact = None
    if level == "two":
        try:
            coarse_fact = factorize(coarse_matrix(a, dec))
        except RuntimeError as exc:
            raise RuntimeError(f"singular coarse matrix: {exc}") from exc
    return AsmPreconditioner(dec, locals_, facts, coarse_fact, level)


def coarse_correction(p: AsmPreconditioner, r: np.ndarray) -> np.ndarray:
    """R_0^T (R_0 A R_0^T)^-1 R_0 r (two-level preconditioners only)."""
    if p.coarse_factorization is None:
        raise ValueError("preconditioner has no coarse level")
    return p.dec.r0.T @ p.coarse_factorization.solve(p.dec.r0 @ r)


def apply_asm(p: AsmPreconditioner, r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    n = p.dec.n_dofs
    if r.shape != (n,):
        raise ValueError(f"expected vector of length {n}, got shape {r.shape}")
    # local sum first, coarse term added last: the two-level result is then
    # bitwise equal to the one-level result plus the coarse correction
    z = np.zeros(n)
    for idx, fact in zip(p.dec.subdomains, p.local_factorizations):
        z[idx] += fact.solve(r[idx])
    if p.level == "two":
        z = z + coarse_correction(p, r)
    return z


def asm_fixed_point(a, b, precond, n_iter: int, tol: float = 1e-6):
    """Stationary iteration u <- u + M^-1 (b - A u) from u = 0.

    Stops early below ``tol``; aborts (returning the partial report) if the
    relative residual exceeds 1e6.
    """
    b = np.asarray(b, dtype=float)
    norm_b = float(np.linalg.norm(b))
    u = np.zeros_like(b)
    if norm_b == 0.0:
        return u, SolveReport(0, [0.0], True, 0.0, tol)
    r = b - a @ u
    history = [float(np.linalg.norm(r)) / norm_b]
    iterations = 0
    converged = history[0] < tol
    while iterations < n_iter and not converged:
        u = u + precond(r)
        r = b - a @ u
        rel = float(np.linalg.norm(r)) / norm_b
        history.append(rel)
        iterations += 1
        if rel < tol:
            converged = True
        elif rel > 1e6:
            break
    return u, SolveReport(iterations, history, converged, history[-1], tol)

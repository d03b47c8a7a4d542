"""Sparse kernels: CG/PCG drivers, direct factorizations, and the IC(0) baseline.

Matrices are scipy CSR throughout.  The PCG loop follows the classical
preconditioned conjugate gradient recurrence exactly (z = M^-1 r, Polak
coefficients rho_{i+1}/rho_i) and stops on ||r|| / ||b|| < tol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SolveReport",
    "validate_csr",
    "cg",
    "pcg",
    "Factorization",
    "factorize",
    "ic0",
]

_DENSE_CUTOFF = 200  # below this, direct solves use a dense factorization


@dataclass
class SolveReport:
    """Iteration record of one Krylov solve.

    residual_history[k] is ||r_k|| / ||b||; entry 0 is the initial residual,
    entry ``iterations`` the final one.
    """

    iterations: int
    residual_history: list[float]
    converged: bool
    final_relres: float
    tolerance: float = field(default=0.0, repr=False)

    def to_json(self) -> str:
        return json.dumps(
            {
                "iterations": self.iterations,
                "converged": self.converged,
                "final_relres": self.final_relres,
                "residual_history": self.residual_history,
            }
        )


def validate_csr(a: sp.csr_matrix) -> None:
    """Check CSR structural invariants (monotone indptr, sorted unique columns)."""
    n_rows, n_cols = a.shape
    indptr, indices = a.indptr, a.indices
    if indptr[0] != 0 or indptr[-1] != a.nnz or len(indptr) != n_rows + 1:
        raise ValueError("malformed indptr")
    if np.any(np.diff(indptr) < 0):
        raise ValueError("indptr not nondecreasing")
    for r in range(n_rows):
        cols = indices[indptr[r] : indptr[r + 1]]
        if cols.size and (np.any(np.diff(cols) <= 0) or cols[0] < 0 or cols[-1] >= n_cols):
            raise ValueError(f"row {r}: columns not strictly increasing in range")


def _as_operator(precond):
    if precond is None:
        return None
    return precond if callable(precond) else precond.__call__


def pcg(a, b, precond, tol: float, max_iter: int, u0=None):
    """Preconditioned conjugate gradient; returns (solution, SolveReport).

    ``precond`` maps a residual vector to a correction vector (None for plain
    CG).  Non-convergence within max_iter yields converged=False, not an
    exception; NaN iterates and non-SPD detections raise RuntimeError.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    apply_m = _as_operator(precond)
    u = np.zeros(n) if u0 is None else np.asarray(u0, dtype=float).copy()
    if u.shape != (n,):
        raise ValueError("u0 dimension mismatch")

    norm_b = float(np.linalg.norm(b))
    if norm_b == 0.0:
        return np.zeros(n), SolveReport(0, [0.0], True, 0.0, tol)

    r = b - a @ u
    history = [float(np.linalg.norm(r)) / norm_b]
    if history[0] < tol:
        return u, SolveReport(0, history, True, history[0], tol)

    z = apply_m(r) if apply_m is not None else r
    p = z.copy()
    rho = float(r @ z)
    iterations = 0
    converged = False
    for _ in range(max_iter):
        q = a @ p
        pq = float(p @ q)
        if pq <= 0:
            raise RuntimeError("matrix not SPD: <p, Ap> <= 0")
        alpha = rho / pq
        u = u + alpha * p
        r = r - alpha * q
        rel = float(np.linalg.norm(r)) / norm_b
        if not np.isfinite(rel):
            raise RuntimeError(f"non-finite residual at iteration {iterations + 1}")
        history.append(rel)
        iterations += 1
        if rel < tol:
            converged = True
            break
        z = apply_m(r) if apply_m is not None else r
        rho_next = float(r @ z)
        beta = rho_next / rho
        rho = rho_next
        p = z + beta * p
    return u, SolveReport(iterations, history, converged, history[-1], tol)


def cg(a, b, tol: float, max_iter: int, u0=None):
    """Unpreconditioned conjugate gradient (identical recurrence with z = r)."""
    return pcg(a, b, None, tol, max_iter, u0=u0)


class Factorization:
    """Direct factorization with a ``solve`` method (dense LU below 200 unknowns, SuperLU above)."""

    def __init__(self, a):
        dense_in = isinstance(a, np.ndarray)
        n = a.shape[0]
        if a.shape[0] != a.shape[1]:
            raise ValueError("matrix must be square")
        self.n = n
        if dense_in or n < _DENSE_CUTOFF:
            mat = a if dense_in else a.toarray()
            lu, piv = scipy.linalg.lu_factor(mat, check_finite=False)
            if np.any(np.diag(lu) == 0.0):
                raise RuntimeError("matrix is exactly singular")
            self._dense = (lu, piv)
            self._splu = None
        else:
            try:
                self._splu = spla.splu(a.tocsc())
            except RuntimeError as exc:
                raise RuntimeError(f"sparse factorization failed: {exc}") from exc
            self._dense = None

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape != (self.n,):
            raise ValueError(f"expected vector of length {self.n}, got shape {b.shape}")
        if self._dense is not None:
            return scipy.linalg.lu_solve(self._dense, b, check_finite=False)
        return self._splu.solve(b)


def factorize(a) -> Factorization:
    """Factorize a square nonsingular matrix (CSR or dense) for repeated solves."""
    return Factorization(a)


class Ic0Preconditioner:
    """Zero-fill incomplete Cholesky preconditioner: x -> L^-T (L^-1 x)."""

    def __init__(self, l_factor: sp.csr_matrix):
        self.l = l_factor
        self.lt = l_factor.T.tocsr()

    def __call__(self, x: np.ndarray) -> np.ndarray:
        y = spla.spsolve_triangular(self.l, x, lower=True)
        return spla.spsolve_triangular(self.lt, y, lower=False)


def ic0(a: sp.csr_matrix) -> Ic0Preconditioner:
    """Incomplete Cholesky with zero fill on the lower-triangular pattern of A.

    Raises RuntimeError("IC(0) breakdown ...") on a nonpositive pivot; no
    diagonal shift is applied.
    """
    n = a.shape[0]
    indptr, indices, data = a.indptr, a.indices, a.data
    # per-row storage of the computed factor, column-sorted
    l_cols: list[np.ndarray] = []
    l_vals: list[np.ndarray] = []
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        cols = indices[start:end]
        vals = data[start:end]
        lower = cols <= i
        cols_i = cols[lower]
        vals_i = vals[lower]
        if cols_i.size == 0 or cols_i[-1] != i:
            raise RuntimeError(f"IC(0) breakdown: missing diagonal in row {i}")
        row_dict: dict[int, float] = {}
        out_vals = np.zeros(cols_i.size)
        for idx in range(cols_i.size - 1):
            j = int(cols_i[idx])
            s = vals_i[idx]
            for jc, jv in zip(l_cols[j][:-1], l_vals[j][:-1]):
                if jc in row_dict:
                    s -= row_dict[jc] * jv
            lij = s / l_vals[j][-1]
            row_dict[j] = lij
            out_vals[idx] = lij
        diag = vals_i[-1] - float(out_vals[:-1] @ out_vals[:-1])
        if diag <= 0:
            raise RuntimeError(f"IC(0) breakdown: nonpositive pivot at row {i}")
        out_vals[-1] = np.sqrt(diag)
        l_cols.append(cols_i.astype(np.int64))
        l_vals.append(out_vals)

    rows = np.concatenate([np.full(c.size, r) for r, c in enumerate(l_cols)])
    l_factor = sp.csr_matrix(
        (np.concatenate(l_vals), (rows, np.concatenate(l_cols))), shape=(n, n)
    )
    l_factor.sort_indices()
    return Ic0Preconditioner(l_factor)

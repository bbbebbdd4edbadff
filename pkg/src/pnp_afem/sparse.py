"""Compressed-row matrices and linear solves.

Matrices are ``scipy.sparse.csr_array`` objects in canonical form (sorted
column indices, duplicates summed), so ``A.indptr``, ``A.indices`` and
``A.data`` are the row offsets, column indices and values.
"""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

SparseMatrix = sp.csr_array


class SolverError(RuntimeError):
    """Linear solve failed; ``residual`` is the achieved relative residual."""

    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual


def from_triplets(n_rows: int, n_cols: int, triplets=None, *, rows=None, cols=None, values=None) -> SparseMatrix:
    """Build a CSR matrix from ``(i, j, v)`` triplets, summing duplicates.

    Either pass ``triplets`` as an iterable of tuples or the three arrays
    ``rows``, ``cols``, ``values``.
    """
    if triplets is not None:
        trip = list(triplets)
        rows = np.array([t[0] for t in trip], dtype=np.int64)
        cols = np.array([t[1] for t in trip], dtype=np.int64)
        values = np.array([t[2] for t in trip], dtype=float)
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if rows.size and (rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols):
        raise IndexError("triplet index out of range")
    A = sp.coo_array((values, (rows, cols)), shape=(n_rows, n_cols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, tol: float = 1e-13) -> bool:
    if A.shape[0] != A.shape[1]:
        return False
    diff = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return diff.nnz == 0 or diff.max() <= tol * max(scale, 1e-300)


def solve(A, b, method: str = "auto", rel_tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Solve ``A x = b`` so that ``||A x - b|| <= rel_tol ||b||``.

    ``method="auto"`` uses Jacobi-preconditioned CG for symmetric matrices and
    a sparse LU factorization otherwise; ``"iterative"`` uses CG or BiCGSTAB.
    Raises SolverError when the residual bound is not met.
    """
    A = sp.csr_array(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError("solve needs a square matrix and a matching right-hand side")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    if method not in ("auto", "direct", "iterative"):
        raise ValueError(f"unknown method {method!r}")
    if max_iter is None:
        max_iter = max(10 * n, 1000)

    symmetric = is_symmetric(A)
    if method == "direct" or (method == "auto" and not symmetric):
        try:
            lu = spla.splu(A.tocsc())
        except RuntimeError as exc:  # superlu: "Factor is exactly singular"
            raise SolverError(f"direct factorization failed: {exc}", residual=1.0) from exc
        x = lu.solve(b)
        # a few steps of iterative refinement for badly scaled systems
        for _ in range(3):
            r = b - A @ x
            if not np.all(np.isfinite(r)) or np.linalg.norm(r) <= rel_tol * bnorm:
                break
            x = x + lu.solve(r)
    else:
        diag = A.diagonal()
        if np.any(diag == 0):
            raise SolverError("zero diagonal entry; Jacobi preconditioner undefined",
                              residual=1.0)
        M = sp.diags_array(1.0 / diag)
        krylov = spla.cg if symmetric else spla.bicgstab
        x, info = krylov(A, b, rtol=rel_tol, atol=0.0, maxiter=max_iter, M=M)
        if info < 0:
            raise SolverError("Krylov breakdown", residual=np.linalg.norm(A @ x - b) / bnorm)

    if not np.all(np.isfinite(x)):
        raise SolverError("solution is not finite (singular matrix)", residual=np.inf)
    res = np.linalg.norm(A @ x - b) / bnorm
    if res > rel_tol:
        raise SolverError(f"residual {res:.3e} above tolerance {rel_tol:.1e}", residual=res)
    return x


def dump_coordinate(A, path) -> None:
    """Write one ``i j v`` line per stored entry."""
    C = sp.coo_array(A)
    with open(path, "w") as fh:
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {v:.17g}\n")

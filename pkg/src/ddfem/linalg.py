"""Triplet accumulation, deterministic compression to CSR, and a checked sparse solve."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_TOL = 1e-10


class LinearSolverError(RuntimeError):
    """Singular or inaccurate linear solve."""


class TripletBuffer:
    """Accumulates ``(row, col, value)`` entries; duplicates are summed on compression."""

    def __init__(self):
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []

    def add(self, rows, cols, values) -> None:
        rows, cols, values = (np.asarray(a).ravel() for a in (rows, cols, values))
        if not rows.shape == cols.shape == values.shape:
            raise ValueError("rows, cols and values must have equal length")
        self._rows.append(rows.astype(np.int64))
        self._cols.append(cols.astype(np.int64))
        self._vals.append(values.astype(float))

    def add_local(self, dofs, local) -> None:
        """Scatter element matrices ``local[t, i, j]`` into ``(dofs[t, i], dofs[t, j])``."""
        dofs = np.asarray(dofs)
        k = dofs.shape[1]
        self.add(np.repeat(dofs, k, axis=1), np.tile(dofs, (1, k)), local)

    def merge(self, other: "TripletBuffer") -> None:
        self._rows += other._rows
        self._cols += other._cols
        self._vals += other._vals

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if not self._rows:
            return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
        return np.concatenate(self._rows), np.concatenate(self._cols), np.concatenate(self._vals)

    def __len__(self) -> int:
        return sum(len(r) for r in self._rows)


def compress(buffer: TripletBuffer, n: int) -> sp.csr_matrix:
    """Sum duplicates and build an ``n x n`` CSR matrix.

    Entries are sorted by (row, col, value) before summation, so the result is
    bitwise independent of insertion order.
    """
    rows, cols, vals = buffer.arrays()
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise IndexError(f"triplet index out of range for dimension {n}")
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    if rows.size:
        start = np.flatnonzero(np.r_[True, (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])])
        vals = np.add.reduceat(vals, start)
        rows, cols = rows[start], cols[start]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    np.cumsum(indptr, out=indptr)
    A = sp.csr_matrix((vals, cols, indptr), shape=(n, n))
    A.has_sorted_indices = True
    return A


def restrict(A: sp.spmatrix, index: np.ndarray) -> sp.csr_matrix:
    """Principal submatrix ``A[index][:, index]``."""
    A = sp.csr_matrix(A)
    return A[index][:, index].tocsr()


def relative_residual(A, x, b) -> float:
    r = A @ x - b
    nb = np.linalg.norm(b)
    return float(np.linalg.norm(r) / nb) if nb > 0 else float(np.linalg.norm(r))


def solve(A: sp.spmatrix, b: np.ndarray, tol: float = RESIDUAL_TOL, refine: int = 3) -> np.ndarray:
    """Direct sparse LU solve with partial pivoting and iterative refinement.

    Raises ``LinearSolverError`` if the factorisation breaks down or the
    relative residual stays above ``tol``.
    """
    A = sp.csc_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape != (n, n) or b.shape != (n,):
        raise ValueError(f"incompatible shapes {A.shape} and {b.shape}")
    if n == 0:
        return np.zeros(0)
    if not np.all(np.isfinite(A.data)) or not np.all(np.isfinite(b)):
        raise LinearSolverError("matrix or right-hand side contains non-finite values")
    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise LinearSolverError(f"LU factorisation failed: {exc}") from exc
    diag = np.abs(lu.U.diagonal())
    if diag.min() == 0.0 or diag.min() <= 1e-14 * diag.max():
        raise LinearSolverError(
            f"near-singular matrix: smallest pivot {diag.min():.3e}, largest {diag.max():.3e}"
        )
    x = lu.solve(b)
    res = relative_residual(A, x, b)
    for _ in range(refine):
        if res <= tol:
            break
        x = x + lu.solve(b - A @ x)
        res = relative_residual(A, x, b)
    if not res <= tol:
        raise LinearSolverError(f"relative residual {res:.3e} exceeds {tol:.1e}")
    return x

"""Interpolative decomposition and truncated two-sided factorizations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

__all__ = ["IdFactors", "LrFactors", "id_rows", "lr_factor", "entry_magnitude_stats"]


@dataclass(frozen=True, eq=False)
class IdFactors:
    """Row ID ``A ~= interp @ A[skeleton, :]`` with ``interp[skeleton] = I``."""
    skeleton: np.ndarray   # (k,) row indices
    interp: np.ndarray     # (m, k)

    @property
    def rank(self) -> int:
        return len(self.skeleton)

    @property
    def residual(self) -> np.ndarray:
        mask = np.ones(self.interp.shape[0], dtype=bool)
        mask[self.skeleton] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True, eq=False)
class LrFactors:
    """``A ~= L @ R.conj().T``."""
    L: np.ndarray   # (p, r)
    R: np.ndarray   # (q, r)

    @property
    def rank(self) -> int:
        return self.L.shape[1]

    def matrix(self):
        return self.L @ self.R.conj().T


def id_rows(A, tol: float, min_rank: int = 0) -> IdFactors:
    """Row interpolative decomposition by column-pivoted QR of ``A.T``.

    The rank is the number of leading CPQR diagonal entries with
    ``|R_ii| >= tol`` (``tol`` is absolute), raised to ``min_rank`` when
    the matrix allows.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    A = np.asarray(A)
    m, n = A.shape
    dtype = np.result_type(A.dtype, np.float64)
    if m == 0 or n == 0:
        return IdFactors(np.zeros(0, dtype=int), np.zeros((m, 0), dtype=dtype))
    # plain transpose: the skeleton rows of A are pivot columns of A^T
    _, R, P = linalg.qr(A.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    small = np.flatnonzero(diag < tol)
    natural = int(small[0]) if small.size else len(diag)
    k = max(natural, min(min_rank, len(diag)))
    J = P[:k].copy()
    X = np.zeros((m, k), dtype=dtype)
    X[J, np.arange(k)] = 1.0
    if k and k < m:
        if k == natural:
            T = linalg.solve_triangular(R[:k, :k], R[:k, k:])
        else:
            # forced rank: R11 may be numerically singular
            T = linalg.lstsq(R[:k, :k], R[:k, k:])[0]
        X[P[k:], :] = T.T
    return IdFactors(J, X)


def lr_factor(A, tol: float) -> LrFactors:
    """Truncated SVD keeping singular values ``>= tol``."""
    A = np.asarray(A)
    p, q = A.shape
    dtype = np.result_type(A.dtype, np.float64)
    if p == 0 or q == 0:
        return LrFactors(np.zeros((p, 0), dtype), np.zeros((q, 0), dtype))
    U, s, Vh = linalg.svd(A, full_matrices=False)
    r = int(np.count_nonzero(s >= tol)) if s[0] > 0 else 0
    return LrFactors(U[:, :r] * s[:r], Vh[:r].conj().T)


def entry_magnitude_stats(X) -> float:
    """Largest interpolation-entry magnitude (0 for rank 0)."""
    if isinstance(X, IdFactors):
        X = X.interp
    X = np.asarray(X)
    return float(np.abs(X).max()) if X.size else 0.0

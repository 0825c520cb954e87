"""FFT application of the block-Toeplitz kernel matrix G.

The (2 n1 - 1) x (2 n2 - 1) generator of kernel values over all lattice
offsets is wrapped into a (2 n1) x (2 n2) circulant; the extra row and
column are zero. The diagonal weight sits at offset (0, 0), so the
punctured and corrected rules share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy import fft

from .discretization import CorrectionTable, UniformGrid, kernel_offsets

__all__ = ["ConvolutionOperator", "build_convolution", "apply_G", "apply_forward",
           "kernel_tableau"]


@dataclass(frozen=True, eq=False)
class ConvolutionOperator:
    spectrum: np.ndarray   # (2 n1, 2 n2), axis 0 runs along x
    n1: int
    n2: int
    kappa: float
    correction_order: int

    @property
    def N(self) -> int:
        return self.n1 * self.n2

    @cached_property
    def _spectrum_yx(self):
        # (2 n2, 2 n1) so grid data stays in its natural [i2, i1] layout
        return np.ascontiguousarray(self.spectrum.T)


def kernel_tableau(grid: UniformGrid, kappa, corr: Optional[CorrectionTable]):
    """Circulant generator: entry [d1 mod 2 n1, d2 mod 2 n2] = kernel at (d1, d2)."""
    n1, n2 = grid.n1, grid.n2
    d1 = np.arange(2 * n1)
    d2 = np.arange(2 * n2)
    d1 = np.where(d1 < n1, d1, d1 - 2 * n1)   # row n1 maps to -n1 and is zeroed
    d2 = np.where(d2 < n2, d2, d2 - 2 * n2)
    D1, D2 = np.meshgrid(d1, d2, indexing="ij")
    tau = 0.0 if corr is None else corr.tau
    t = kernel_offsets(grid.h, kappa, tau, D1, D2)
    t[n1, :] = 0.0
    t[:, n2] = 0.0
    return t


def build_convolution(grid: UniformGrid, kappa, corr: Optional[CorrectionTable] = None):
    t = kernel_tableau(grid, kappa, corr)
    order = 2 if corr is None else 4
    return ConvolutionOperator(fft.fft2(t), grid.n1, grid.n2, float(kappa), order)


def _check(op, q):
    q = np.asarray(q)
    if q.shape[0] != op.N or q.ndim > 2:
        raise ValueError(f"vector length {q.shape[0]} does not match N = {op.N}")
    return q


def apply_G(op: ConvolutionOperator, q):
    """G q for q of shape (N,) or (N, m)."""
    q = _check(op, q)
    n1, n2 = op.n1, op.n2
    cols = q.reshape(op.N, -1)
    m = cols.shape[1]
    # index i = i1 + n1 i2, so each column reshapes to [i2, i1]
    x = cols.T.reshape(m, n2, n1)
    # pruned transforms: zero padding is implicit on the way in and the
    # unused half of the rows is dropped before the last inverse pass
    X = fft.fft(x, n=2 * n1, axis=2)
    X = fft.fft(X, n=2 * n2, axis=1, overwrite_x=True)
    X *= op._spectrum_yx
    Y = fft.ifft(X, axis=1, overwrite_x=True)[:, :n2]
    out = fft.ifft(Y, axis=2, overwrite_x=True)[:, :, :n1]
    out = out.reshape(m, op.N).T
    return out.reshape(q.shape)


def apply_forward(op: ConvolutionOperator, B, q):
    """q + B * (G q) with B the real diagonal kappa^2 b(x_i)."""
    B = np.asarray(B)
    q = _check(op, q)
    if B.shape != (op.N,):
        raise ValueError(f"diagonal length {B.shape} does not match N = {op.N}")
    Gq = apply_G(op, q)
    return q + (B[:, None] * Gq if q.ndim == 2 else B * Gq)

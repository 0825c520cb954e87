"""Run reports and field export.

Field files come in pairs: ``<base>.csv`` with ``x,y,re,im`` per line at
17 significant digits, and ``<base>.lsf`` holding

    b"LSF2"  u32 n1  u32 n2  f64 h  then n1*n2 complex128 values

all little-endian, values row-major (x fastest). A target list that is not a
grid is written with ``n2 = 1`` and ``h = 0``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .discretization import UniformGrid

__all__ = ["RunReport", "export_field", "read_field_binary", "FIELD_MAGIC"]

FIELD_MAGIC = b"LSF2"


@dataclass
class RunReport:
    mode: str
    N: int
    h: float
    kappa: float
    T_skel: Optional[float] = None
    T_build: Optional[float] = None
    T_apply: Optional[float] = None
    T_gmres: Optional[float] = None
    mem: Optional[int] = None          # bytes of serialized factors + inverse
    res: Optional[float] = None        # true relative residual via the FFT operator
    iter: Optional[int] = None
    ranks: list = field(default_factory=list)
    converged: Optional[bool] = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def write(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.generic):
        return x.item()
    return x


def export_field(base, values, grid: Optional[UniformGrid] = None, targets=None):
    """Write ``base.csv`` and ``base.lsf``; returns the two paths."""
    values = np.asarray(values, dtype=complex).ravel()
    if grid is not None:
        pts = grid.points()
        n1, n2, h = grid.n1, grid.n2, grid.h
    else:
        if targets is None:
            raise ValueError("export_field needs a grid or a target list")
        pts = np.atleast_2d(np.asarray(targets, dtype=float))
        n1, n2, h = len(pts), 1, 0.0
    if len(values) != len(pts):
        raise ValueError(f"{len(values)} values for {len(pts)} targets")
    base = Path(base)
    csv, lsf = base.with_suffix(".csv"), base.with_suffix(".lsf")
    data = np.column_stack([pts[:, 0], pts[:, 1], values.real, values.imag])
    np.savetxt(csv, data, fmt="%.17g", delimiter=",", header="x,y,re,im", comments="")
    with open(lsf, "wb") as fh:
        fh.write(FIELD_MAGIC + struct.pack("<IId", n1, n2, h))
        fh.write(values.astype("<c16").tobytes())
    return csv, lsf


def read_field_binary(path):
    """Return (n1, n2, h, values) from an LSF2 file."""
    data = Path(path).read_bytes()
    if data[:4] != FIELD_MAGIC:
        raise ValueError(f"{path}: not an LSF2 field file")
    n1, n2, h = struct.unpack_from("<IId", data, 4)
    values = np.frombuffer(data, dtype="<c16", offset=20, count=n1 * n2).copy()
    return n1, n2, h, values

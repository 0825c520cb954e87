"""Uniform-grid Nystrom discretization of the Lippmann-Schwinger equation.

The discrete system is ``(I + B G) q = f`` with ``B = diag(kappa**2 b(x_i))``,
``f = -kappa**2 b u_inc`` and the kernel matrix

    G[i, j] = h**2 * (i/4) H0(kappa |x_i - x_j|)     (i != j)
    G[i, i] = h**2 * tau(kappa h)                    (0 for the punctured rule)

Grid points are cell centred: ``x_i = origin + h * (i % n1, i // n1)`` with
``origin = lower-left corner + h/2``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .special import erf, hankel_h0_unchecked

__all__ = [
    "UniformGrid", "build_grid",
    "Gaussian", "Cavity", "Lens", "RandomBumps", "PhotonicCrystal", "Tabulated",
    "PotentialSpec", "potential_value", "potential_on_grid",
    "PlaneWave", "CallbackIncident", "IncidentField",
    "ProblemSpec", "CorrectionTable", "fit_diagonal_correction", "correction_for",
    "kernel_offsets", "kernel_entry", "dense_kernel_matrix",
    "scattering_diagonal", "assemble_rhs", "evaluate_scattered_field",
]

UNIT_SQUARE = ((-0.5, -0.5), (0.5, 0.5))


# --------------------------------------------------------------------------
# grid

@dataclass(frozen=True)
class UniformGrid:
    origin: tuple  # coordinates of point 0 (cell centre)
    h: float
    n1: int
    n2: int

    def __post_init__(self):
        if not self.h > 0:
            raise ValueError("mesh width must be positive")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("grid needs at least one point per axis")

    @property
    def N(self) -> int:
        return self.n1 * self.n2

    @property
    def domain(self):
        x0 = self.origin[0] - 0.5 * self.h
        y0 = self.origin[1] - 0.5 * self.h
        return (x0, y0), (x0 + self.n1 * self.h, y0 + self.n2 * self.h)

    def lattice(self, idx):
        """Integer lattice coordinates (i1, i2) of point indices."""
        idx = np.asarray(idx)
        return np.stack([idx % self.n1, idx // self.n1], axis=-1)

    def index(self, i1, i2):
        return np.asarray(i1) + self.n1 * np.asarray(i2)

    def coords(self, lattice):
        lattice = np.asarray(lattice, dtype=float)
        return np.asarray(self.origin) + self.h * lattice

    def points(self) -> np.ndarray:
        """All grid points, shape (N, 2), row-major (first axis fastest)."""
        return self.coords(self.lattice(np.arange(self.N)))


def build_grid(domain, target_h: float) -> UniformGrid:
    """Place a cell-centred grid of width ``h <= target_h`` on a rectangle.

    ``h`` is fixed by the first side; the second side is stretched (never
    shrunk) to the next integer multiple of ``h``.
    """
    if not target_h > 0:
        raise ValueError("target_h must be positive")
    (x0, y0), (x1, y1) = domain
    w, hgt = x1 - x0, y1 - y0
    if not (w > 0 and hgt > 0):
        raise ValueError("degenerate domain")
    n1 = max(1, math.ceil(w / target_h - 1e-9))
    h = w / n1
    n2 = max(1, math.ceil(hgt / h - 1e-9))
    return UniformGrid(origin=(x0 + 0.5 * h, y0 + 0.5 * h), h=h, n1=n1, n2=n2)


# --------------------------------------------------------------------------
# scattering potentials; each is a callable on points of shape (..., 2)

@dataclass(frozen=True)
class Gaussian:
    amplitude: float = 1.5
    width: float = 160.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * np.exp(-self.width * np.sum(x * x, axis=-1))


@dataclass(frozen=True)
class Cavity:
    """(1 - sin(theta/2)**500) * exp(-2000 (0.1 - r**2)**2); opening at theta = pi."""
    power: int = 500
    radius_sq: float = 0.1
    width: float = 2000.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        theta = np.arctan2(x[..., 1], x[..., 0])
        ang = 1.0 - np.sin(0.5 * theta) ** self.power
        return ang * np.exp(-self.width * (self.radius_sq - r2) ** 2)


@dataclass(frozen=True)
class Lens:
    """Vertically graded lens 4 (x2 - 0.1) [1 - erf(25 (|x| - 0.3))]."""

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(np.sum(x * x, axis=-1))
        return 4.0 * (x[..., 1] - 0.1) * (1.0 - erf(25.0 * (r - 0.3)))


def _rolloff(x, center, inner, steep):
    r = np.sqrt(np.sum((np.asarray(x, dtype=float) - center) ** 2, axis=-1))
    return 0.5 * (1.0 - erf(steep * (r - inner)))


@dataclass(frozen=True)
class RandomBumps:
    """Sum of Gaussian bumps at seeded uniform centres, radially rolled off."""
    seed: int = 1
    count: int = 200
    amplitude: float = 1.0
    width: float = 200.0
    domain: tuple = UNIT_SQUARE
    rolloff_radius: float = 0.4
    rolloff_steepness: float = 40.0

    @functools.cached_property
    def centers(self):
        (x0, y0), (x1, y1) = self.domain
        c = 0.5 * np.array([x0 + x1, y0 + y1])
        half = 0.4 * np.array([x1 - x0, y1 - y0])
        rng = np.random.default_rng(self.seed)
        return c + half * rng.uniform(-1.0, 1.0, size=(self.count, 2))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c in self.centers:
            out += np.exp(-self.width * np.sum((x - c) ** 2, axis=-1))
        (x0, y0), (x1, y1) = self.domain
        center = 0.5 * np.array([x0 + x1, y0 + y1])
        return self.amplitude * out * _rolloff(x, center, self.rolloff_radius, self.rolloff_steepness)


@dataclass(frozen=True)
class PhotonicCrystal:
    """20 x 20 lattice of narrow Gaussian bumps; ``channel`` drops row 10."""
    channel: bool = True
    count: int = 20
    spacing: float = 0.04
    amplitude: float = 1.0
    overlap: float = 1e-6

    @property
    def width(self) -> float:
        # one bump evaluated at its neighbour's centre equals `overlap`
        return math.log(1.0 / self.overlap) / self.spacing ** 2

    @functools.cached_property
    def centers(self):
        ticks = (np.arange(self.count) - 0.5 * (self.count - 1)) * self.spacing
        rows = [r for r in range(self.count) if not (self.channel and r == self.count // 2)]
        return np.array([(tx, ticks[r]) for r in rows for tx in ticks])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1])
        for c in self.centers:
            out += np.exp(-self.width * np.sum((x - c) ** 2, axis=-1))
        return self.amplitude * out


@dataclass(frozen=True, eq=False)
class Tabulated:
    """User values b(x_i) on a grid, row-major; looked up at the nearest node."""
    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        if np.asarray(self.values).shape != (self.grid.N,):
            raise ValueError(f"tabulated potential needs {self.grid.N} values")

    @classmethod
    def from_file(cls, path, grid: UniformGrid):
        vals = np.fromfile(path, dtype="<f8")
        return cls(grid, vals)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g = self.grid
        lat = np.rint((x - np.asarray(g.origin)) / g.h).astype(int)
        i1 = np.clip(lat[..., 0], 0, g.n1 - 1)
        i2 = np.clip(lat[..., 1], 0, g.n2 - 1)
        return np.asarray(self.values)[g.index(i1, i2)]


PotentialSpec = Union[Gaussian, Cavity, Lens, RandomBumps, PhotonicCrystal, Tabulated]


def potential_value(p: PotentialSpec, x):
    return p(x)


def potential_on_grid(p: PotentialSpec, grid: UniformGrid) -> np.ndarray:
    if isinstance(p, Tabulated):
        return np.asarray(p.values, dtype=float)
    return np.asarray(p(grid.points()), dtype=float)


# --------------------------------------------------------------------------
# incident fields

@dataclass(frozen=True)
class PlaneWave:
    """u_inc(x) = exp(i kappa (d . x + offset))."""
    direction: tuple = (1.0, 0.0)
    offset: float = 0.0

    def __post_init__(self):
        if abs(math.hypot(*self.direction) - 1.0) > 1e-12:
            raise ValueError("plane-wave direction must be a unit vector")

    def __call__(self, x, kappa):
        x = np.asarray(x, dtype=float)
        phase = x @ np.asarray(self.direction, dtype=float) + self.offset
        return np.exp(1j * kappa * phase)


@dataclass(frozen=True)
class CallbackIncident:
    fn: Callable

    def __call__(self, x, kappa):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=complex)


IncidentField = Union[PlaneWave, CallbackIncident]


# --------------------------------------------------------------------------
# quadrature correction

@dataclass(frozen=True)
class CorrectionTable:
    tau: complex
    kappa_h: float
    alpha: float = float("nan")   # fitting density parameter (grid units)
    reference: complex = complex("nan")   # integral of G * phi over R^2 (grid units)
    lattice_sum: complex = complex("nan")

    @property
    def residual(self) -> float:
        """Relative defect of the corrected rule on its own fitting integral."""
        return abs(self.lattice_sum + self.tau - self.reference) / abs(self.reference)


_FIT_ALPHA = 1e-3
_FIT_DECAY = 42.0   # (1 + t) exp(-t) < 1e-16 for t >= 42


def _fit_density(r2, alpha):
    # Gaussian with a vanishing Laplacian at the centre
    return (1.0 + alpha * r2) * np.exp(-alpha * r2)


def _green(r, kappa_h):
    return 0.25j * hankel_h0_unchecked(kappa_h * r)


def _reference_integral(kappa_h, alpha, radius, nodes=40, grading=40):
    # composite Gauss-Legendre: geometric grading toward the log point at
    # r = 0, then panels of half a wavelength out to the patch radius
    x, w = np.polynomial.legendre.leggauss(nodes)
    first = min(np.pi / kappa_h, radius)
    edges = np.concatenate([[0.0], first * 0.5 ** np.arange(grading, 0, -1),
                            np.arange(first, radius, np.pi / kappa_h), [radius]])
    edges = np.unique(edges)
    a, b = edges[:-1, None], edges[1:, None]
    r = 0.5 * (b - a) * x + 0.5 * (a + b)
    wr = 0.5 * (b - a) * w
    vals = _green(r, kappa_h) * 2.0 * np.pi * r * _fit_density(r * r, alpha)
    return complex(np.sum(wr * vals))


def _lattice_sum(kappa_h, alpha, radius):
    n = int(math.ceil(radius))
    i = np.arange(1, n + 1, dtype=float)[:, None]
    j = np.arange(0, n + 1, dtype=float)[None, :]
    r2 = i * i + j * j
    terms = _green(np.sqrt(r2), kappa_h) * _fit_density(r2, alpha)
    # the four quarter-planes {i >= 1, j >= 0} rotated tile Z^2 minus the origin
    return complex(4.0 * terms.sum())


@functools.lru_cache(maxsize=64)
def fit_diagonal_correction(kappa_h: float) -> CorrectionTable:
    """Fit the single-point diagonal weight tau(kappa h).

    Work in grid units (h = 1). With the fitting density
    ``phi(y) = (1 + a|y|^2) exp(-a|y|^2)`` centred on a node, tau is chosen so
    the corrected lattice rule reproduces ``int G(|y|) phi(y) dy`` exactly.
    The reference integral is radially symmetric, so the polar form
    reduces to one graded radial quadrature.
    """
    kappa_h = float(kappa_h)
    if not (0.0 < kappa_h < np.pi):
        raise ValueError(f"kappa*h = {kappa_h} outside (0, pi); refine the grid")
    alpha = _FIT_ALPHA
    radius = math.sqrt(_FIT_DECAY / alpha)
    ref = _reference_integral(kappa_h, alpha, radius)
    lat = _lattice_sum(kappa_h, alpha, radius)
    return CorrectionTable(tau=ref - lat, kappa_h=kappa_h, alpha=alpha,
                           reference=ref, lattice_sum=lat)


def correction_for(order: int, kappa: float, h: float) -> Optional[CorrectionTable]:
    if order == 2:
        return None
    if order == 4:
        return fit_diagonal_correction(kappa * h)
    raise ValueError(f"correction order {order} is not supported (use 2 or 4)")


# --------------------------------------------------------------------------
# kernel

def kernel_offsets(h, kappa, tau, d1, d2):
    """Kernel-matrix entries h^2 G for integer lattice offsets (d1, d2).

    ``tau`` is the diagonal weight (0 for the punctured rule).
    """
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    r = np.hypot(d1, d2)
    out = np.empty(r.shape, dtype=complex)
    off = r > 0
    out[off] = (h * h * 0.25j) * hankel_h0_unchecked(kappa * h * r[off])
    out[~off] = h * h * tau
    return out


def _tau(corr: Optional[CorrectionTable]) -> complex:
    return 0.0 if corr is None else corr.tau


def kernel_entry(grid: UniformGrid, di, kappa, corr: Optional[CorrectionTable] = None) -> complex:
    d1, d2 = di
    if not (abs(d1) < grid.n1 and abs(d2) < grid.n2):
        raise ValueError("offset outside the grid")
    return complex(kernel_offsets(grid.h, kappa, _tau(corr), d1, d2))


def dense_kernel_matrix(grid: UniformGrid, kappa, corr=None, rows=None, cols=None):
    """Dense G (or the block G[rows, cols]) assembled entry by entry."""
    rows = np.arange(grid.N) if rows is None else np.asarray(rows)
    cols = np.arange(grid.N) if cols is None else np.asarray(cols)
    lr = grid.lattice(rows)
    lc = grid.lattice(cols)
    d1 = lr[:, None, 0] - lc[None, :, 0]
    d2 = lr[:, None, 1] - lc[None, :, 1]
    return kernel_offsets(grid.h, kappa, _tau(corr), d1, d2)


# --------------------------------------------------------------------------
# problem assembly

@dataclass(frozen=True)
class ProblemSpec:
    kappa: float
    potential: PotentialSpec
    grid: UniformGrid
    incident: IncidentField = field(default_factory=PlaneWave)
    correction_order: int = 4

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError("wavenumber must be positive")
        if self.correction_order not in (2, 4):
            raise ValueError(f"correction order {self.correction_order} is not supported (use 2 or 4)")

    @property
    def correction(self) -> Optional[CorrectionTable]:
        return correction_for(self.correction_order, self.kappa, self.grid.h)


def scattering_diagonal(spec: ProblemSpec) -> np.ndarray:
    """Diagonal of B: kappa^2 b(x_i)."""
    return spec.kappa ** 2 * potential_on_grid(spec.potential, spec.grid)


def assemble_rhs(spec: ProblemSpec) -> np.ndarray:
    pts = spec.grid.points()
    u_inc = spec.incident(pts, spec.kappa)
    return -scattering_diagonal(spec) * u_inc


def evaluate_scattered_field(grid: UniformGrid, kappa, q, targets,
                             corr: Optional[CorrectionTable] = None, chunk=None):
    """u(x) = sum_j h^2 G(x, x_j) q_j by direct summation.

    A target that coincides with a grid node picks up the diagonal weight
    h^2 tau for that node instead of the singular kernel value.
    """
    q = np.asarray(q, dtype=complex)
    if q.shape != (grid.N,):
        raise ValueError(f"density has length {q.shape}, grid has N = {grid.N}")
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    src = grid.points()
    h = grid.h
    tau = _tau(corr)
    out = np.empty(len(targets), dtype=complex)
    chunk = chunk or max(1, 4_000_000 // grid.N)
    for s in range(0, len(targets), chunk):
        t = targets[s:s + chunk]
        r = np.sqrt(((t[:, None, :] - src[None, :, :]) ** 2).sum(-1))
        hit = r < 1e-9 * h
        vals = np.empty(r.shape, dtype=complex)
        vals[~hit] = 0.25j * hankel_h0_unchecked(kappa * r[~hit])
        vals[hit] = tau
        out[s:s + chunk] = h * h * (vals @ q)
    return out

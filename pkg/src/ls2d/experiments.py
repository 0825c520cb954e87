"""Solve drivers and diagnostics shared by the CLI and the test suite."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import discretization as disc
from .fast_apply import apply_forward, apply_G, build_convolution
from .hbs import HbsFactors, build_tree, compress, hbs_matvec
from .krylov import GmresConfig, gmres
from .lowrank import entry_magnitude_stats
from .solver import apply_inverse, build_inverse, inverse_bytes

__all__ = [
    "Problem", "setup", "relative_residual", "direct_solve", "preconditioned_solve",
    "plain_solve", "hbs_error", "quadrature_convergence", "pde_defect",
    "scaling_sweep", "loglog_slope",
]


@dataclass(eq=False)
class Problem:
    spec: disc.ProblemSpec
    B: np.ndarray
    f: np.ndarray
    op: object   # ConvolutionOperator

    @property
    def grid(self):
        return self.spec.grid

    def forward(self, q):
        return apply_forward(self.op, self.B, q)


def setup(spec: disc.ProblemSpec) -> Problem:
    op = build_convolution(spec.grid, spec.kappa, spec.correction)
    return Problem(spec, disc.scattering_diagonal(spec), disc.assemble_rhs(spec), op)


def relative_residual(prob: Problem, q, f=None) -> float:
    f = prob.f if f is None else f
    fn = np.linalg.norm(f)
    r = np.linalg.norm(prob.forward(q) - f)
    return float(r / fn) if fn > 0 else float(r)


def build_solver(prob: Problem, eps, leaf_size=100, proxy_width=None):
    """Return (factors, inverse, T_skel, T_build)."""
    tree = build_tree(prob.grid, leaf_size)
    t0 = time.perf_counter()
    F = compress(tree, prob.grid, prob.spec.kappa, prob.spec.correction, eps, proxy_width)
    t1 = time.perf_counter()
    inv = build_inverse(F, prob.B)
    t2 = time.perf_counter()
    return F, inv, t1 - t0, t2 - t1


def direct_solve(prob: Problem, eps, leaf_size=100, proxy_width=None):
    """Compress, invert and apply once. Returns (q, info dict)."""
    F, inv, t_skel, t_build = build_solver(prob, eps, leaf_size, proxy_width)
    t0 = time.perf_counter()
    q = apply_inverse(inv, prob.f)
    t_apply = time.perf_counter() - t0
    info = dict(F=F, inv=inv, T_skel=t_skel, T_build=t_build, T_apply=t_apply,
                res=relative_residual(prob, q), mem=inverse_bytes(inv), ranks=F.ranks)
    return q, info


def preconditioned_solve(prob: Problem, eps_pre, cfg: GmresConfig, leaf_size=100, proxy_width=None):
    F, inv, t_skel, t_build = build_solver(prob, eps_pre, leaf_size, proxy_width)
    q, log = gmres(prob.forward, lambda v: apply_inverse(inv, v), prob.f, cfg)
    info = dict(F=F, inv=inv, T_skel=t_skel, T_build=t_build, T_gmres=log.wall_time,
                res=relative_residual(prob, q), iter=log.iterations, log=log,
                mem=inverse_bytes(inv), ranks=F.ranks)
    return q, info


def plain_solve(prob: Problem, cfg: GmresConfig):
    """Unpreconditioned GMRES on the FFT operator."""
    q, log = gmres(prob.forward, None, prob.f, cfg)
    return q, log


def hbs_error(F: HbsFactors, op, iters=30, seed=0) -> float:
    """Relative spectral-norm error of the HBS matvec against the FFT operator.

    Both operators are complex symmetric, so ``D^H v = conj(D conj(v))``
    and power iteration on ``D^H D`` needs only forward applications.
    """
    rng = np.random.default_rng(seed)
    N = op.N

    def norm2(apply):
        v = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        v /= np.linalg.norm(v)
        s = 0.0
        for _ in range(iters):
            w = np.conj(apply(np.conj(apply(v))))
            s = np.linalg.norm(w)
            if s == 0:
                return 0.0
            v = w / s
        return float(np.sqrt(s))

    diff = norm2(lambda v: hbs_matvec(F, v) - apply_G(op, v))
    return diff / norm2(lambda v: apply_G(op, v))


def compress_stats(prob: Problem, eps, leaf_size=100, proxy_width=None, seed=0):
    tree = build_tree(prob.grid, leaf_size)
    t0 = time.perf_counter()
    F = compress(tree, prob.grid, prob.spec.kappa, prob.spec.correction, eps, proxy_width)
    t_skel = time.perf_counter() - t0
    levels = F.levels[1:]
    return dict(
        F=F, T_skel=t_skel, ranks=F.ranks,
        lr_ranks=[lv.lr.rank for lv in levels],
        max_interp=[entry_magnitude_stats(lv.U) for lv in levels],
        proxy_width=F.proxy_width,
        hbs_error=hbs_error(F, prob.op, seed=seed),
    )


def quadrature_convergence(make_spec, h0, probes, refinements=3, tol=1e-12, maxit=400):
    """Self-convergence of the scattered field at probe points.

    ``make_spec(h)`` returns a ProblemSpec on a grid of width ``h``; the
    problem is solved at ``h0 / 2**j`` by GMRES on the FFT operator.
    Returns (values per level, slopes per probe).
    """
    vals = []
    for j in range(refinements):
        spec = make_spec(h0 / 2 ** j)
        prob = setup(spec)
        q, log = gmres(prob.forward, None, prob.f, GmresConfig(tol, maxit))
        if not log.converged:
            raise RuntimeError(f"GMRES did not reach {tol} at h = {spec.grid.h}")
        vals.append(disc.evaluate_scattered_field(spec.grid, spec.kappa, q, probes,
                                                  spec.correction))
    vals = np.array(vals)
    d = np.abs(np.diff(vals, axis=0))
    slopes = np.log2(d[:-1] / d[1:])
    return vals, slopes


def pde_defect(spec: disc.ProblemSpec, q, lattice_points) -> float:
    """Relative 5-point Helmholtz defect of the total field at grid nodes.

    At each node x the residual of ``Delta_h u + kappa^2 (1 - b) u`` is
    scaled by ``kappa^2 max |u|`` over the stencils.
    """
    g, k = spec.grid, spec.kappa
    lat = np.asarray(lattice_points)
    centers = g.coords(lat)
    st = np.array([[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]]) * g.h
    pts = (centers[:, None, :] + st[None]).reshape(-1, 2)
    u = disc.evaluate_scattered_field(g, k, q, pts, spec.correction) + spec.incident(pts, k)
    u = u.reshape(-1, 5)
    lap = (u[:, 1:].sum(axis=1) - 4 * u[:, 0]) / g.h ** 2
    b = disc.potential_value(spec.potential, centers)
    defect = np.abs(lap + k ** 2 * (1 - b) * u[:, 0])
    return float(defect.max() / (k ** 2 * np.abs(u).max()))


def loglog_slope(N, T) -> float:
    return float(np.polyfit(np.log(np.asarray(N, float)), np.log(np.asarray(T, float)), 1)[0])


def scaling_sweep(make_spec, sizes: Sequence[float], eps=1e-3, leaf_size=100, repeats=1):
    """Time compression, inversion and one apply over several grids.

    ``sizes`` are mesh widths passed to ``make_spec``. Returns a dict with
    the per-size timings and least-squares log-log slopes.
    """
    if len(sizes) < 3:
        raise ValueError("a scaling sweep needs at least 3 grid sizes")
    rows = []
    for h in sizes:
        prob = setup(make_spec(h))
        best = None
        for _ in range(repeats):
            q, info = direct_solve(prob, eps, leaf_size)
            t = (info["T_skel"], info["T_build"], info["T_apply"])
            best = t if best is None else tuple(min(a, b) for a, b in zip(best, t))
            del info
        rows.append((prob.grid.N,) + best)
    rows = np.array(rows)
    N = rows[:, 0]
    return dict(
        N=N.astype(int).tolist(), T_skel=rows[:, 1].tolist(), T_build=rows[:, 2].tolist(),
        T_apply=rows[:, 3].tolist(),
        slope_skel=loglog_slope(N, rows[:, 1]), slope_build=loglog_slope(N, rows[:, 2]),
        slope_apply=loglog_slope(N, rows[:, 3]),
    )

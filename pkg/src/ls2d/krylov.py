"""Left-preconditioned GMRES and a dense spectrum probe."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = ["GmresConfig", "IterationLog", "gmres", "spectrum_probe", "DENSE_CAP"]

DENSE_CAP = 4096


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-10
    maxit: int = 100
    restart: Optional[int] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("GMRES tol must be positive")
        if self.maxit < 1:
            raise ValueError("GMRES maxit must be at least 1")
        if self.restart is not None and self.restart < 1:
            raise ValueError("GMRES restart must be at least 1")


@dataclass
class IterationLog:
    residuals: list = field(default_factory=list)  # preconditioned, relative
    true_residual: float = float("nan")
    iterations: int = 0
    wall_time: float = 0.0
    converged: bool = False


def _givens(a, b):
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, b.conjugate() / abs(b)
    r = np.hypot(abs(a), abs(b))
    c = abs(a) / r
    s = (a / abs(a)) * b.conjugate() / r
    return c, s


def gmres(applyA: Callable, applyM: Optional[Callable], f, cfg: GmresConfig = GmresConfig()):
    """Solve A q = f by GMRES on M A q = M f.

    Convergence is monitored on the preconditioned residual; on exit the
    true residual ``|A q - f| / |f|`` is recomputed. When it misses
    ``cfg.tol`` the internal target is tightened and the same Krylov space
    is extended until the iteration cap.
    """
    t0 = time.perf_counter()
    f = np.asarray(f, dtype=complex)
    if not np.all(np.isfinite(f)):
        raise ValueError("right-hand side must be finite")
    M = applyM or (lambda v: v)
    log = IterationLog()
    fnorm = np.linalg.norm(f)
    n = f.shape[0]
    x = np.zeros(n, dtype=complex)
    if fnorm == 0:
        # trivial solve: one pass confirms the zero residual
        log.iterations = 1
        log.residuals.append(0.0)
        log.true_residual = 0.0
        log.converged = True
        log.wall_time = time.perf_counter() - t0
        return x, log

    g_norm = np.linalg.norm(M(f))
    target = cfg.tol
    while log.iterations < cfg.maxit:
        # one cycle from the current iterate; without restart it is the only one
        r = M(f - applyA(x))
        beta = np.linalg.norm(r)
        if beta == 0:
            break
        cap = cfg.maxit - log.iterations
        m = cap if cfg.restart is None else min(cfg.restart, cap)
        V = np.zeros((m + 1, n), dtype=complex)
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        e = np.zeros(m + 1, dtype=complex)
        e[0] = beta
        V[0] = r / beta
        j = 0
        breakdown = False
        while j < m and not breakdown:
            # copy: operators may hand back their input
            w = np.array(M(applyA(V[j])), dtype=complex)
            wnorm = np.linalg.norm(w)
            for i in range(j + 1):
                h = np.vdot(V[i], w)
                H[i, j] += h
                w -= h * V[i]
            if np.linalg.norm(w) < 0.7 * wnorm:
                # second modified Gram-Schmidt pass
                for i in range(j + 1):
                    h = np.vdot(V[i], w)
                    H[i, j] += h
                    w -= h * V[i]
            hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            breakdown = hn <= 1e-14 * wnorm
            if not breakdown:
                V[j + 1] = w / hn
            for i in range(j):
                a, b = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * a + sn[i] * b
                H[i + 1, j] = -sn[i].conjugate() * a + cs[i] * b
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            e[j + 1] = -sn[j].conjugate() * e[j]
            e[j] = cs[j] * e[j]
            j += 1
            log.iterations += 1
            est = abs(e[j]) / g_norm
            log.residuals.append(float(est))
            if est <= target:
                if cfg.restart is not None:
                    break
                true = np.linalg.norm(applyA(x + _update(H, e, V, j)) - f) / fnorm
                if true <= cfg.tol:
                    break
                target = est * cfg.tol / true * 0.5
        x = x + _update(H, e, V, j)
        true = np.linalg.norm(applyA(x) - f) / fnorm
        if true <= cfg.tol or breakdown or cfg.restart is None:
            break
        if est <= target:
            target = est * cfg.tol / true * 0.5
    log.true_residual = float(np.linalg.norm(applyA(x) - f) / fnorm)
    log.converged = log.true_residual <= cfg.tol
    log.wall_time = time.perf_counter() - t0
    return x, log


def _update(H, e, V, j):
    y = np.linalg.solve(np.triu(H[:j, :j]), e[:j])
    return y @ V[:j]


def spectrum_probe(applyA: Callable, applyM: Optional[Callable], N: int, n_eigs: Optional[int] = None):
    """Eigenvalues of the dense-assembled M A, sorted by distance from 1 (largest first)."""
    if N > DENSE_CAP:
        raise ValueError(f"spectrum probe needs N <= {DENSE_CAP}, got {N}")
    eye = np.eye(N, dtype=complex)
    try:
        A = applyA(eye)
        MA = applyM(A) if applyM is not None else A
    except (ValueError, IndexError):
        cols = []
        for c in eye.T:
            v = applyA(c)
            cols.append(applyM(v) if applyM is not None else v)
        MA = np.array(cols).T
    lam = np.linalg.eigvals(MA)
    lam = lam[np.argsort(-np.abs(lam - 1.0), kind="stable")]
    return lam if n_eigs is None else lam[:n_eigs]

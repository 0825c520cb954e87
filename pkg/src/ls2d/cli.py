"""Command-line driver: ``ls2d <mode> --config <path> [--out <dir>] [--threads k]``.

Exit status is 0 on success, 1 on a configuration error and 2 when
preconditioned GMRES hits its iteration cap.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from contextlib import ExitStack
from pathlib import Path

import numpy as np
from pydantic import ValidationError
from scipy import fft
from threadpoolctl import threadpool_limits

from . import discretization as disc
from .config import MODES, RunConfig, load_config
from .experiments import (compress_stats, direct_solve, preconditioned_solve,
                          quadrature_convergence, setup)
from .fast_apply import apply_G
from .hbs import save_factors
from .krylov import DENSE_CAP, GmresConfig, spectrum_probe
from .report import RunReport, export_field
from .solver import apply_inverse, build_inverse, save_inverse

log = logging.getLogger("ls2d")

EXIT_OK, EXIT_CONFIG, EXIT_NOCONV = 0, 1, 2


class ConfigError(Exception):
    pass


def _gmres_cfg(cfg: RunConfig):
    g = cfg.gmres
    return GmresConfig(g.tol, g.maxit, g.restart)


def _probe_values(prob, q, cfg: RunConfig):
    pts = np.asarray(cfg.probes, dtype=float)
    if not len(pts):
        return []
    u = disc.evaluate_scattered_field(prob.grid, prob.spec.kappa, q, pts, prob.spec.correction)
    return [{"x": p.tolist(), "u": v} for p, v in zip(pts, u)]


def _export(prob, q, cfg: RunConfig, out: Path, report: RunReport):
    if cfg.output.field:
        spec = prob.spec
        u_tot = apply_G(prob.op, q) + spec.incident(prob.grid.points(), spec.kappa)
        csv, lsf = export_field(out / cfg.output.field, u_tot, grid=prob.grid)
        report.extra["field_files"] = [csv.name, lsf.name]


def run_direct(cfg: RunConfig, out: Path) -> tuple:
    prob = setup(cfg.problem_spec())
    q, info = direct_solve(prob, cfg.eps, cfg.leaf_size, cfg.proxy_width)
    rep = RunReport("direct", prob.grid.N, prob.grid.h, prob.spec.kappa,
                    T_skel=info["T_skel"], T_build=info["T_build"], T_apply=info["T_apply"],
                    mem=info["mem"], res=info["res"], ranks=info["ranks"])
    rep.extra["eps"] = cfg.eps
    rep.extra["growth"] = info["inv"].growth
    rep.extra["probes"] = _probe_values(prob, q, cfg)
    if cfg.output.factors:
        save_inverse(out / cfg.output.factors, info["inv"])
    _export(prob, q, cfg, out, rep)
    return rep, EXIT_OK


def run_pgmres(cfg: RunConfig, out: Path) -> tuple:
    prob = setup(cfg.problem_spec())
    q, info = preconditioned_solve(prob, cfg.eps_pre, _gmres_cfg(cfg), cfg.leaf_size,
                                   cfg.proxy_width)
    lg = info["log"]
    rep = RunReport("pgmres", prob.grid.N, prob.grid.h, prob.spec.kappa,
                    T_skel=info["T_skel"], T_build=info["T_build"], T_gmres=info["T_gmres"],
                    mem=info["mem"], res=info["res"], iter=info["iter"], ranks=info["ranks"],
                    converged=lg.converged)
    rep.extra["eps_pre"] = cfg.eps_pre
    rep.extra["preconditioned_residuals"] = lg.residuals
    rep.extra["probes"] = _probe_values(prob, q, cfg)
    if cfg.output.factors:
        save_inverse(out / cfg.output.factors, info["inv"])
    _export(prob, q, cfg, out, rep)
    return rep, EXIT_OK if lg.converged else EXIT_NOCONV


def run_compress_stats(cfg: RunConfig, out: Path) -> tuple:
    prob = setup(cfg.problem_spec())
    st = compress_stats(prob, cfg.eps, cfg.leaf_size, cfg.proxy_width, seed=cfg.seed)
    F = st["F"]
    rep = RunReport("compress-stats", prob.grid.N, prob.grid.h, prob.spec.kappa,
                    T_skel=st["T_skel"], ranks=st["ranks"])
    if cfg.output.factors:
        rep.mem = save_factors(out / cfg.output.factors, F)
    rep.extra.update(eps=cfg.eps, proxy_width=st["proxy_width"], lr_ranks=st["lr_ranks"],
                     max_interp=st["max_interp"], hbs_error=st["hbs_error"])
    return rep, EXIT_OK


def run_quad_test(cfg: RunConfig, out: Path) -> tuple:
    grid = cfg.grid()
    pts = np.asarray(cfg.probes, dtype=float)
    rep = RunReport("quad-test", grid.N, grid.h, cfg.problem.kappa)
    for order in (2, 4):
        def make(h, order=order):
            return cfg.problem_spec(disc.build_grid(cfg.problem.domain, h), order)
        vals, slopes = quadrature_convergence(make, grid.h, pts, cfg.quad_test.refinements,
                                              cfg.quad_test.tol)
        rep.extra[f"order{order}"] = {"values": vals, "slopes": slopes}
    kh = cfg.problem.kappa * grid.h
    corr = disc.fit_diagonal_correction(kh)
    rep.extra["tau"] = {"kappa_h": kh, "tau": corr.tau, "fit_residual": corr.residual}
    return rep, EXIT_OK


def run_spectrum(cfg: RunConfig, out: Path) -> tuple:
    prob = setup(cfg.problem_spec())
    N = prob.grid.N
    if N > DENSE_CAP:
        raise ConfigError(f"spectrum mode needs N <= {DENSE_CAP}; this grid has N = {N}")
    from .hbs import build_tree, compress
    tree = build_tree(prob.grid, cfg.leaf_size)
    F = compress(tree, prob.grid, prob.spec.kappa, prob.spec.correction, cfg.eps_pre,
                 cfg.proxy_width)
    inv = build_inverse(F, prob.B)
    plain = spectrum_probe(prob.forward, None, N, cfg.n_eigs)
    pre = spectrum_probe(prob.forward, lambda v: apply_inverse(inv, v), N, cfg.n_eigs)
    rep = RunReport("spectrum", N, prob.grid.h, prob.spec.kappa, ranks=F.ranks)
    rep.extra.update(eps_pre=cfg.eps_pre,
                     radius_plain=float(np.abs(plain - 1).max()),
                     radius_preconditioned=float(np.abs(pre - 1).max()))
    for name, lam in (("eigs_plain", plain), ("eigs_preconditioned", pre)):
        np.savetxt(out / f"{name}.csv", np.column_stack([lam.real, lam.imag]), fmt="%.17g",
                   delimiter=",", header="re,im", comments="")
    return rep, EXIT_OK


RUNNERS = {
    "direct": run_direct,
    "pgmres": run_pgmres,
    "compress-stats": run_compress_stats,
    "quad-test": run_quad_test,
    "spectrum": run_spectrum,
}


def _parser():
    p = argparse.ArgumentParser(prog="ls2d", description="2D Lippmann-Schwinger solver")
    p.add_argument("mode", choices=MODES)
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--out", default=".", help="output directory (default: .)")
    p.add_argument("--threads", type=int, default=None, help="cap on BLAS/FFT threads")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if cfg.mode is not None and cfg.mode != args.mode:
            raise ConfigError(f"config mode {cfg.mode!r} differs from command-line mode {args.mode!r}")
        threads = args.threads or cfg.threads
        if threads is not None and threads < 1:
            raise ConfigError("--threads must be positive")
        grid = cfg.grid()
        if not cfg.problem.kappa * grid.h < np.pi:
            raise ConfigError(f"kappa*h = {cfg.problem.kappa * grid.h:.3g} must be below pi; "
                              f"decrease problem.h")
        cfg.problem_spec(grid)   # surfaces tabulated-file problems early
    except ValidationError as e:
        print(f"ls2d: invalid config {args.config}:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConfigError, OSError, ValueError) as e:
        print(f"ls2d: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with ExitStack() as stack:
        if threads is not None:
            stack.enter_context(threadpool_limits(threads))
            stack.enter_context(fft.set_workers(threads))
        try:
            report, code = RUNNERS[args.mode](cfg, out)
        except ConfigError as e:
            print(f"ls2d: config error: {e}", file=sys.stderr)
            return EXIT_CONFIG
    path = out / cfg.output.report
    report.write(path)
    summary = {k: v for k, v in report.to_dict().items() if k != "extra" and v is not None}
    print(json.dumps(summary))
    if code == EXIT_NOCONV:
        print(f"ls2d: GMRES stopped at {report.iter} iterations with residual {report.res:.3e}",
              file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())

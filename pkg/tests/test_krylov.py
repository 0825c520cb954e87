import numpy as np
import pytest
from scipy import linalg

from ls2d import discretization as disc
from ls2d.experiments import build_solver, plain_solve, setup
from ls2d.krylov import DENSE_CAP, GmresConfig, gmres, spectrum_probe
from ls2d.solver import apply_inverse


def rand_system(n, seed=0, spread=1.0):
    rng = np.random.default_rng(seed)
    A = np.eye(n) + spread * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)
    f = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return A, f


def test_identity_one_iteration():
    f = np.arange(1, 11) + 0j
    q, log = gmres(lambda v: v, None, f, GmresConfig(1e-12))
    assert log.iterations == 1 and log.converged
    assert np.allclose(q, f, rtol=1e-15)


def test_exact_preconditioner_one_iteration():
    A, f = rand_system(50, spread=3.0)
    Ainv = np.linalg.inv(A)
    q, log = gmres(lambda v: A @ v, lambda v: Ainv @ v, f, GmresConfig(1e-10))
    assert log.iterations == 1
    assert log.true_residual <= 1e-10


def test_distinct_eigenvalue_count_bounds_iterations():
    rng = np.random.default_rng(1)
    Q = np.linalg.qr(rng.standard_normal((60, 60)))[0]
    lam = np.repeat([1.0, 2.0, 3.0 + 1j, 0.5], 15)
    A = Q @ np.diag(lam) @ Q.T
    f = rng.standard_normal(60) + 0j
    q, log = gmres(lambda v: A @ v, None, f, GmresConfig(1e-12))
    assert log.iterations <= 4
    assert log.converged


def test_matches_dense_solve():
    A, f = rand_system(120, seed=2)
    q, log = gmres(lambda v: A @ v, None, f, GmresConfig(1e-12, maxit=200))
    assert log.converged
    qd = np.linalg.solve(A, f)
    assert np.linalg.norm(q - qd) <= 1e-10 * np.linalg.norm(qd)
    assert log.true_residual == pytest.approx(np.linalg.norm(A @ q - f) / np.linalg.norm(f))


def test_residuals_monotone():
    A, f = rand_system(100, seed=3, spread=2.0)
    _, log = gmres(lambda v: A @ v, None, f, GmresConfig(1e-10, maxit=100))
    r = np.array(log.residuals)
    assert np.all(np.diff(r) <= 1e-14)
    assert len(r) == log.iterations


def test_restart():
    A, f = rand_system(100, seed=4, spread=0.5)
    q, log = gmres(lambda v: A @ v, None, f, GmresConfig(1e-10, maxit=400, restart=10))
    assert log.converged
    full = gmres(lambda v: A @ v, None, f, GmresConfig(1e-10, maxit=400))[1]
    assert log.iterations >= full.iterations


def test_nonconvergence_flagged():
    A, f = rand_system(100, seed=5, spread=4.0)
    q, log = gmres(lambda v: A @ v, None, f, GmresConfig(1e-12, maxit=3))
    assert not log.converged and log.iterations == 3
    assert log.true_residual > 1e-12


def test_zero_rhs_and_bad_config():
    q, log = gmres(lambda v: v, None, np.zeros(5), GmresConfig())
    assert np.all(q == 0) and log.converged and log.iterations == 1
    with pytest.raises(ValueError):
        GmresConfig(tol=0.0)
    with pytest.raises(ValueError):
        GmresConfig(maxit=0)
    with pytest.raises(ValueError):
        gmres(lambda v: v, None, np.array([1.0, np.nan]))


def test_true_residual_enforced_under_poor_preconditioner():
    # a preconditioner that shrinks residuals hides error unless the true residual is checked
    A, f = rand_system(80, seed=6, spread=2.0)
    D = np.diag(np.r_[np.full(40, 1e-4), np.ones(40)])
    q, log = gmres(lambda v: A @ v, lambda v: D @ v, f, GmresConfig(1e-9, maxit=200))
    assert log.converged
    assert np.linalg.norm(A @ q - f) <= 1e-9 * np.linalg.norm(f)


# ---------------------------------------------------------------- spectrum

def test_spectrum_probe_diagonal():
    d = np.array([1.0, 0.5, 3.0, 1.1 + 0.2j])
    lam = spectrum_probe(lambda v: d[:, None] * v if v.ndim == 2 else d * v, None, 4)
    assert np.allclose(lam, [3.0, 0.5, 1.1 + 0.2j, 1.0])
    assert np.allclose(spectrum_probe(lambda v: d[:, None] * v, None, 4, 2), [3.0, 0.5])


def test_spectrum_probe_identity_preconditioned():
    A, _ = rand_system(30, seed=7)
    Ainv = linalg.inv(A)
    lam = spectrum_probe(lambda v: A @ v, lambda v: Ainv @ v, 30)
    assert np.abs(lam - 1).max() <= 1e-12


def test_spectrum_probe_cap():
    with pytest.raises(ValueError):
        spectrum_probe(lambda v: v, None, DENSE_CAP + 1)


def test_preconditioner_trend(gauss1600):
    # tighter eps_pre clusters the spectrum closer to 1 and needs fewer iterations
    p = gauss1600
    plain = plain_solve(p, GmresConfig(1e-8, 200))[1]
    its, radii = [], []
    for e in (1e-2, 1e-4, 1e-6):
        F, inv, *_ = build_solver(p, e)
        M = lambda v, inv=inv: apply_inverse(inv, v)
        its.append(gmres(p.forward, M, p.f, GmresConfig(1e-8, 200))[1].iterations)
        radii.append(np.abs(spectrum_probe(p.forward, M, p.grid.N, 1) - 1)[0])
    assert its[0] >= its[1] >= its[2]
    assert its[0] <= plain.iterations
    assert radii[0] > radii[1] > radii[2]


def test_lens_spectrum_clusters():
    g = disc.build_grid(disc.UNIT_SQUARE, 1 / 40)
    p = setup(disc.ProblemSpec(8 * np.pi, disc.Lens(), g, disc.PlaneWave(offset=-0.5), 4))
    plain = plain_solve(p, GmresConfig(1e-5, 200))[1]
    assert 40 <= plain.iterations <= 120
    F, inv, *_ = build_solver(p, 1e-2)
    pre = spectrum_probe(p.forward, lambda v: apply_inverse(inv, v), g.N)
    raw = spectrum_probe(p.forward, None, g.N, 1)
    assert np.abs(pre - 1).max() <= 0.3
    assert np.abs(raw - 1).max() >= 1.0

"""Bessel J0/Y0, the Hankel function H0 = J0 + iY0, and erf in double precision.

J0 and Y0 use the Cephes rational approximations (S. L. Moshier): a rational
function of x**2 on [0, 5] and the Hankel amplitude/phase form for x > 5.
The phase ``x - pi/4`` is never formed explicitly; cos/sin of the shifted
argument are expanded as ``(cos x +/- sin x)/sqrt(2)`` so that the error
stays at the level of a few ulps of the envelope up to x = 1e4 and beyond.

All functions accept scalars or arrays and return numpy arrays (0-d for
scalar input).
"""
import numpy as np
from scipy import special as _sp

__all__ = ["bessel_j0", "bessel_y0", "hankel_h0", "erf"]

# j0 on [0, 5]: (z - DR1)(z - DR2) RP(z)/RQ(z), z = x**2
_RP = np.array([
    -4.79443220978201773821e9,
    1.95617491946556577543e12,
    -2.49248344360967716204e14,
    9.70862251047306323952e15,
])
_RQ = np.array([  # leading 1 implied
    4.99563147152651017219e2,
    1.73785401676374683123e5,
    4.84409658339962045305e7,
    1.11855537045356834862e10,
    2.11277520115489217587e12,
    3.10518229857422583814e14,
    3.18121955943204943306e16,
    1.71086294081043136091e18,
])
_DR1 = 5.78318596294678452118e0
_DR2 = 3.04712623436620863991e1

# y0 on [0, 5]: YP(z)/YQ(z) + (2/pi) log(x) j0(x)
_YP = np.array([
    1.55924367855235737965e4,
    -1.46639295903971606143e7,
    5.43526477051876500413e9,
    -9.82136065717911466409e11,
    8.75906394395366999549e13,
    -3.46628303384729719441e15,
    4.42733268572569800351e16,
    -1.84950800436986690637e16,
])
_YQ = np.array([  # leading 1 implied
    1.04128353664259848412e3,
    6.26107330137134956842e5,
    2.68919633393814121987e8,
    8.64002487103935000337e10,
    2.02979612750105546709e13,
    3.17157752842975028269e15,
    2.50596256172653059228e17,
])

# Hankel asymptotic amplitude (P) and phase (Q) rationals in (5/x)**2
_PP = np.array([
    7.96936729297347051624e-4,
    8.28352392107440799803e-2,
    1.23953371646414299388e0,
    5.44725003058768775090e0,
    8.74716500199817011941e0,
    5.30324038235394892183e0,
    9.99999999999999997821e-1,
])
_PQ = np.array([
    9.24408810558863637013e-4,
    8.56288474354474431428e-2,
    1.25352743901058953537e0,
    5.47097740330417105182e0,
    8.76190883237069594232e0,
    5.30605288235394617618e0,
    1.00000000000000000218e0,
])
_QP = np.array([
    -1.13663838898469149931e-2,
    -1.28252718670509318512e0,
    -1.95539544257735972385e1,
    -9.32060152123768231369e1,
    -1.77681167980488050595e2,
    -1.47077505154951170175e2,
    -5.14105326766599330220e1,
    -6.05014350600728481186e0,
])
_QQ = np.array([  # leading 1 implied
    6.43178256118178023184e1,
    8.56430025976980587198e2,
    3.88240183605401609683e3,
    7.24046774195652478189e3,
    5.93072701187316984827e3,
    2.06209331660327847417e3,
    2.42005740240291393179e2,
])

_TWO_OVER_PI = 2.0 / np.pi
_CROSSOVER = 5.0


def _polevl(x, coef):
    out = np.full_like(x, coef[0])
    for c in coef[1:]:
        out = out * x + c
    return out


def _p1evl(x, coef):
    out = x + coef[0]
    for c in coef[1:]:
        out = out * x + c
    return out


def _j0_small(x):
    z = x * x
    val = (z - _DR1) * (z - _DR2) * _polevl(z, _RP) / _p1evl(z, _RQ)
    return np.where(x < 1e-5, 1.0 - 0.25 * z, val)


def _asymptotic(x):
    """Return (J0, Y0) for x > 5 from the amplitude/phase rationals."""
    w = _CROSSOVER / x
    z = w * w
    p = _polevl(z, _PP) / _polevl(z, _PQ)
    q = w * _polevl(z, _QP) / _p1evl(z, _QQ)
    c = np.cos(x)
    s = np.sin(x)
    # sqrt(2) cos(x - pi/4) and sqrt(2) sin(x - pi/4)
    cm = c + s
    sm = s - c
    amp = 1.0 / np.sqrt(np.pi * x)
    return amp * (p * cm - q * sm), amp * (p * sm + q * cm)


def _j0y0(x, want_y):
    x = np.asarray(x, dtype=float)
    j = np.empty_like(x)
    y = np.empty_like(x) if want_y else None
    small = x <= _CROSSOVER
    if np.any(small):
        xs = x[small]
        js = _j0_small(xs)
        j[small] = js
        if want_y:
            z = xs * xs
            y[small] = _polevl(z, _YP) / _p1evl(z, _YQ) + _TWO_OVER_PI * np.log(xs) * js
    big = ~small
    if np.any(big):
        jb, yb = _asymptotic(x[big])
        j[big] = jb
        if want_y:
            y[big] = yb
    return j, y


def _check_domain(x, strict):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("Bessel argument must be finite")
    bad = (x <= 0) if strict else (x < 0)
    if np.any(bad):
        raise ValueError(
            "Y0/H0 need x > 0 (logarithmic singularity at 0)" if strict
            else "J0 is implemented for x >= 0 only"
        )
    return x


def bessel_j0(x):
    """Bessel function of the first kind of order zero, x >= 0."""
    x = _check_domain(x, strict=False)
    return _j0y0(x, want_y=False)[0]


def bessel_y0(x):
    """Bessel function of the second kind of order zero, x > 0.

    Raises ValueError at x = 0, where Y0 has a logarithmic singularity.
    """
    x = _check_domain(x, strict=True)
    return _j0y0(x, want_y=True)[1]


def hankel_h0(x):
    """Hankel function of the first kind, H0(x) = J0(x) + i Y0(x), x > 0."""
    x = _check_domain(x, strict=True)
    j, y = _j0y0(x, want_y=True)
    return j + 1j * y


def hankel_h0_unchecked(x):
    # hot path for kernel tables: caller guarantees x > 0 and finite
    j, y = _j0y0(np.asarray(x, dtype=float), want_y=True)
    return j + 1j * y


def erf(x):
    """Error function (backed by scipy.special.erf)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("erf argument must be finite")
    return _sp.erf(x)

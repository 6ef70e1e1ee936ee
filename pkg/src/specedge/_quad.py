"""Quadrature node caches shared by the measure and edge machinery."""

import numpy as np
from scipy.special import roots_jacobi

_leg_cache = {}
_jac_cache = {}


def leggauss(n):
    """Gauss-Legendre nodes/weights on [-1, 1], cached."""
    if n not in _leg_cache:
        _leg_cache[n] = np.polynomial.legendre.leggauss(n)
    return _leg_cache[n]


def jacgauss(n, alpha, beta):
    """Gauss-Jacobi nodes/weights on [-1, 1] for weight (1-t)^alpha (1+t)^beta."""
    key = (n, float(alpha), float(beta))
    if key not in _jac_cache:
        _jac_cache[key] = roots_jacobi(n, alpha, beta)
    return _jac_cache[key]


def gl_integrate(f, lo, hi, rtol=1e-12, n0=32, nmax=16384):
    """Integrate a smooth (vector-valued ok) function on [lo, hi].

    Doubles the Gauss-Legendre node count until two successive results agree
    to rtol relative.  Returns the last value; no error is raised on stall,
    callers that care check against nmax themselves.
    """
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    prev = None
    n = n0
    while n <= nmax:
        t, w = leggauss(n)
        val = half * np.tensordot(f(mid + half * t), w, axes=([-1], [0]))
        if prev is not None:
            scale = np.max(np.abs(val)) + 1e-300
            if np.max(np.abs(val - prev)) <= rtol * scale:
                return val
        prev = val
        n *= 2
    return prev

"""Multivariate Bessel functions, Schur functions and their supersymmetric
lifts, in determinant, matrix and contour forms.

All alternants are evaluated confluent-safely: coinciding (or nearly
coinciding) arguments are grouped into clusters and handled with divided
differences, so specializations like z = (0, ..., 0) are exact rather than
catastrophic 0/0 ratios.
"""

import numpy as np

from .measures import (Measure, Empirical, quantile_spectrum, inverse_cauchy,
                       NoConvergence)
from .edge import S_eval


class Overflow(Exception):
    pass


class SingularAlternant(Exception):
    pass


class RayBlocked(Exception):
    pass


class QuadratureStall(Exception):
    pass


class BranchError(Exception):
    pass


class PoleCollision(Exception):
    pass


class ZeroArgumentNegativePower(Exception):
    pass


_CLUSTER_GAP = 1e-6   # relative gap below which arguments count as confluent
_SERIES_GAP = 10.0    # below this, divided differences use the centroid
                      # Taylor series (direct subtraction or raw alternant
                      # determinants lose most of their digits on tight node
                      # clusters, and the series stays accurate at wide gaps
                      # whenever it converges; non-convergent entries fall
                      # back to subtraction)


def _scale_of(nodes):
    return max(1.0, float(np.max(np.abs(nodes))) if len(nodes) else 1.0)


# ---------------------------------------------------------------------------
# divided-difference machinery
#
# det(f_j(z_i)) / Vandermonde(z) = (-1)^{m(m-1)/2} det( f_j[z_1..z_i] ),
# so alternant ratios reduce to determinants of Newton divided differences,
# which stay finite (and well conditioned) at coinciding nodes.


def _h_list(deltas, smax):
    """Complete homogeneous symmetric polynomials h_0..h_smax of deltas."""
    cur = np.zeros(smax + 1, dtype=complex)
    cur[0] = 1.0
    for d in deltas:
        # h_s over nodes+[d] = sum_{t<=s} h_t(nodes) * d^{s-t}
        powers = np.asarray(d, dtype=complex) ** np.arange(smax + 1)
        cur = np.convolve(cur, powers)[:smax + 1]
    return cur


def _confluent_dd(taylor, nodes):
    """Divided difference f[nodes] from Taylor coefficients at the centroid.

    taylor(r, t) must return f^(r)(t)/r!.  Uses the series
    f[x_0..x_m] = sum_s taylor(m+s, tbar) h_s(x - tbar).
    Returns (value, converged).
    """
    m = len(nodes) - 1
    tbar = np.mean(nodes)
    deltas = np.asarray(nodes, dtype=complex) - tbar
    if np.all(deltas == 0):
        return taylor(m, tbar), True
    total = 0.0 + 0.0j
    smax = 80
    H = _h_list(deltas, smax)
    small = 0
    for s in range(smax + 1):
        term = taylor(m + s, tbar) * H[s]
        total += term
        if s > 2 and abs(term) <= 1e-18 * max(abs(total), 1e-300):
            small += 1
            if small >= 2:
                return total, True
        else:
            small = 0
    return total, False


def _dd_matrix(nodes, taylors):
    """M[i, j] = f_j[nodes_0..nodes_i] for column functions given by their
    Taylor-coefficient callables."""
    nodes = np.asarray(nodes, dtype=complex)
    m = len(nodes)
    tol = _SERIES_GAP * _scale_of(nodes)
    M = np.zeros((m, len(taylors)), dtype=complex)
    for j, tay in enumerate(taylors):
        col = np.array([tay(0, t) for t in nodes], dtype=complex)
        M[0, j] = col[0]
        for r in range(1, m):
            new = np.zeros(m - r, dtype=complex)
            for i in range(m - r):
                gap = nodes[i + r] - nodes[i]
                done = False
                if abs(gap) < tol:
                    val, done = _confluent_dd(tay, nodes[i:i + r + 1])
                if done:
                    new[i] = val
                else:
                    new[i] = (col[i + 1] - col[i]) / gap
            col = new
            M[r, j] = col[0]
    return M


def _sorted_nodes(nodes):
    nodes = np.asarray(nodes, dtype=complex)
    order = np.lexsort((nodes.imag, nodes.real))
    return nodes[order]


def _exp_taylor(ell):
    from scipy.special import gammaln

    def tay(r, t):
        # ell^r e^(t ell) / r!
        if ell == 0:
            return np.exp(t * ell) if r == 0 else 0.0
        lg = r * np.log(complex(ell)) + t * ell - gammaln(r + 1)
        return np.exp(lg)

    return tay


def _epole_taylor(p, v):
    from scipy.special import gammaln

    def tay(r, t):
        # Taylor coefficients of e^{p(t - v)}/(t - v)
        base = np.exp(p * (t - v))
        acc = 0.0 + 0.0j
        for a in range(r + 1):
            b = r - a
            pa = np.exp(a * np.log(complex(p)) - gammaln(a + 1)) if (a > 0 and p != 0) \
                else (1.0 if a == 0 else 0.0)
            acc += pa * (-1.0) ** b * (t - v) ** (-1 - b)
        return base * acc

    return tay


def _pow_taylor(a):
    def tay(r, t):
        # binom(a, r) t^(a - r), generalized binomial
        coef = 1.0
        for s in range(r):
            coef *= (a - s) / (s + 1)
        if t == 0:
            if a - r < 0:
                raise ZeroArgumentNegativePower("0 raised to a negative power")
            return coef if a == r else (0.0 if a > r else coef)
        return coef * t ** (a - r)

    return tay


def _rpole_taylor(y):
    def tay(r, t):
        # Taylor coefficients of 1/(t - y)
        return (-1.0) ** r * (t - y) ** (-1 - r)

    return tay


def _det_value(M):
    sign, logabs = np.linalg.slogdet(M)
    if sign == 0:
        return 0.0 + 0.0j, -np.inf
    return sign, logabs


def _vandermonde_log(z):
    """Vandermonde prod_{i<j}(z_i - z_j) as (phase, log magnitude)."""
    z = np.asarray(z, dtype=complex)
    phase, logmag = 1.0 + 0.0j, 0.0
    for i in range(len(z)):
        for j in range(i + 1, len(z)):
            d = z[i] - z[j]
            if d == 0:
                return 0.0, -np.inf
            logmag += np.log(abs(d))
            phase *= d / abs(d)
    return phase, logmag


def _assemble(sign, logabs):
    if logabs > 700.0:
        raise Overflow("value exceeds floating point range; use the log form")
    return sign * np.exp(logabs)


# ---------------------------------------------------------------------------
# Bessel and Schur alternants


def _alternant(nodes, taylors):
    """(phase, log) of det(f_j(z_i)) / Vandermonde(z), confluent-safe."""
    ns = _sorted_nodes(nodes)
    m = len(ns)
    gaps = np.abs(ns[1:] - ns[:-1]) if m > 1 else np.array([np.inf])
    tol = _SERIES_GAP * _scale_of(ns)
    if m > 1 and gaps.min() > tol:
        A = np.array([[tay(0, t) for tay in taylors] for t in ns], dtype=complex)
        sa, la = _det_value(A)
        pv, lv = _vandermonde_log(ns)
        # det/Delta with Delta in the sorted order; the sort permutation sign
        # cancels between numerator and denominator
        return sa / pv, la - lv
    M = _dd_matrix(ns, taylors)
    sd, ld = _det_value(M)
    s = (-1.0) ** (m * (m - 1) // 2)
    return s * sd, ld


def bessel(l, z):
    """Multivariate Bessel function det(e^(z_i l_j)) / Vandermonde(z)."""
    l = np.asarray(l, dtype=float)
    z = np.asarray(z, dtype=complex)
    if len(l) != len(z):
        raise ValueError("spectrum and argument lengths differ")
    sign, logabs = _alternant(z, [_exp_taylor(e) for e in l])
    return _assemble(sign, logabs)


def bessel_log(l, z):
    """(phase, log magnitude) of the multivariate Bessel function."""
    l = np.asarray(l, dtype=float)
    z = np.asarray(z, dtype=complex)
    return _alternant(z, [_exp_taylor(e) for e in l])


def bessel_normalized(l, z):
    """B_l(z) / B_l(0^N)."""
    s1, l1 = bessel_log(l, z)
    s0, l0 = bessel_log(l, np.zeros(len(np.atleast_1d(l))))
    return _assemble(s1 / s0, l1 - l0)


def schur(lam, x):
    """Rational Schur function det(x_i^(lam_j + N - j)) / Vandermonde(x)."""
    lam = np.asarray(lam, dtype=int)
    x = np.asarray(x, dtype=complex)
    N = len(lam)
    if len(x) != N:
        raise ValueError("signature and argument lengths differ")
    powers = lam + np.arange(N - 1, -1, -1)
    if np.any(powers < 0) and np.any(x == 0):
        raise ZeroArgumentNegativePower("zero argument with negative exponent")
    sign, logabs = _alternant(x, [_pow_taylor(int(a)) for a in powers])
    return _assemble(sign, logabs)


def hciz_mc(l, z, samples=100000, seed=0):
    """Monte Carlo of the unitary-group integral of exp(tr diag(z) U diag(l) U*).

    Returns (estimate, stderr); matches bessel_normalized(l, z).
    """
    l = np.asarray(l, dtype=float)
    z = np.asarray(z, dtype=float)
    N = len(l)
    if N == 1:
        return float(np.exp(z[0] * l[0])), 0.0
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    vals = np.empty(samples)
    for t in range(samples):
        g = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
        q, r = np.linalg.qr(g)
        q = q * (np.diag(r) / np.abs(np.diag(r)))
        w = np.abs(q) ** 2  # w[i, j] = |U_ij|^2
        vals[t] = np.exp(np.dot(z, w @ l))
    est = float(np.mean(vals))
    err = float(np.std(vals, ddof=1) / np.sqrt(samples))
    return est, err


# ---------------------------------------------------------------------------
# supersymmetric lifts


def ssym_lift_det(l, p, u_args, v_args):
    """The determinantal lift: (-1)^(Nk) D(u;-v)/(Delta(u) Delta(-v))
    times det[ E_p(u; v) | A_l(u) ], confluent-safe in u.

    Collisions u_i = v_j are evaluated by their cancellation limit.
    """
    l = np.asarray(l, dtype=float)
    u = np.asarray(u_args, dtype=complex)
    v = np.asarray(v_args, dtype=complex)
    k = len(v)
    N = len(l)
    if len(u) != N + k:
        raise ValueError("need len(u_args) = len(l) + len(v_args)")
    scale = _scale_of(np.concatenate([u, v]))
    # cancellation limit: a colliding pair simply drops out
    for j in range(k):
        d = np.abs(u - v[j])
        i = int(np.argmin(d))
        if d[i] < 1e-8 * scale:
            uu = np.delete(u, i)
            vv = np.delete(v, j)
            return ssym_lift_det(l, p, uu, vv)
    taylors = [_epole_taylor(p, vj) for vj in v] + [_exp_taylor(e) for e in l]
    sign, logabs = _alternant(u, taylors)  # det[cols]/Delta(u)
    # remaining prefactor: (-1)^(Nk) D(u;-v)/Delta(-v)
    pref_s, pref_l = 1.0 + 0.0j, 0.0
    for ui in u:
        for vj in v:
            d = ui - vj
            pref_l += np.log(abs(d))
            pref_s *= d / abs(d)
    for a in range(k):
        for b in range(a + 1, k):
            d = v[b] - v[a]  # Delta(-v) = prod_{a<b} (v_b - v_a)
            pref_l -= np.log(abs(d))
            pref_s /= d / abs(d)
    sign = sign * pref_s * (-1.0) ** (N * k)
    return _assemble(sign, logabs + pref_l)


def _ratio_k1_matrix(l, p, u, v, xi):
    """B_{l,p}(u, xi / v) / B_l(xi) via the rank-one kernel formula."""
    l = np.asarray(l, dtype=float)
    xi = np.asarray(xi, dtype=complex)
    A = np.exp(np.outer(xi, l))
    if np.linalg.cond(A) > 1e12:
        raise SingularAlternant("reference alternant is numerically singular")
    a = np.exp(l * u)
    b = np.exp(p * (xi - v)) / (v - xi)
    core = np.exp(p * (u - v)) / (u - v) + a @ np.linalg.solve(A, b)
    return (u - v) * np.prod((v - xi) / (u - xi)) * core


def ssym_lift_matrix_form(l, p, u, v, xi):
    """Normalized lift B_{l,p}(u, xi / v) / B_l(xi) as a k x k determinant of
    the k = 1 kernel.  xi components are spread apart if they coincide."""
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    xi = np.atleast_1d(np.asarray(xi, dtype=complex))
    scale = _scale_of(np.concatenate([u, v, xi, np.atleast_1d(complex(p))]))
    N = len(xi)
    # regularize coinciding reference points
    for _ in range(3):
        d = np.abs(xi[:, None] - xi[None, :])
        d[np.diag_indices(N)] = np.inf
        if N == 1 or d.min() > 1e-9 * scale:
            break
        xi = xi + np.arange(1, N + 1) * 1e-7 * scale
    k = len(u)
    K = np.zeros((k, k), dtype=complex)
    for i in range(k):
        for j in range(k):
            K[i, j] = _ratio_k1_matrix(l, p, u[i], v[j], xi) / (u[i] - v[j])
    pref = 1.0 + 0.0j
    for i in range(k):
        for j in range(k):
            pref *= u[i] - v[j]
    for i in range(k):
        for j in range(i + 1, k):
            pref /= (u[i] - u[j]) * (v[j] - v[i])
    return pref * np.linalg.det(K)


def _z_circle(l, pad=0.2, nodes=512):
    l = np.asarray(l, dtype=float)
    c = 0.5 * (l.min() + l.max())
    rb = 0.5 * (l.max() - l.min())
    r = rb * (1.0 + pad) + 0.1 * max(1.0, abs(c))
    th = (np.arange(nodes) + 0.5) * 2.0 * np.pi / nodes
    return c, rb, r, c + r * np.exp(1j * th)


def ssym_lift_contour_k1(l, p, u, v):
    """Normalized lift B_{l,p}(u, 0^N / v) / B_l(0^N) by the double-contour
    formula: closed z-circle around the spectrum, w-ray from p to infinity."""
    l = np.asarray(l, dtype=float)
    N = len(l)
    u = complex(u)
    v = complex(v)
    if u == 0 or v == 0 or u == v:
        raise ValueError("need u, v nonzero and distinct")
    if np.min(np.abs(l - p)) == 0:
        raise PoleCollision("p coincides with a spectrum point")
    c0, rb, r0, znodes = _z_circle(l)
    pad = r0 - rb  # keep the ray one padding width clear of the circle
    # choose the ray direction maximizing decay of e^{-wv}
    best = None
    for th in np.linspace(-np.pi, np.pi, 721)[:-1]:
        d = np.exp(1j * th)
        decay = (d * v).real
        if decay <= 1e-3:
            continue
        # distance from the ray {p + t d : t >= 0} to the circle center
        w0 = c0 - p
        t_star = max((w0 * np.conj(d)).real, 0.0)
        dist = abs(p + t_star * d - c0)
        if dist < r0 + pad:
            continue
        if abs(p - c0) < r0 + pad:
            continue
        if best is None or decay > best[0]:
            best = (decay, d)
    if best is None:
        raise RayBlocked("no admissible ray direction from p")
    decay, d = best

    # vectorized double quadrature: trapezoid in z, panelled Gauss in w
    from numpy.polynomial.legendre import leggauss
    gx, gw = leggauss(96)
    total = 0.0 + 0.0j
    t0 = 0.0
    L = max(2.0 / decay, 1.0)
    zfac = np.exp(znodes * u) / np.prod(znodes[:, None] - l[None, :], axis=1)
    stall = 0
    for panel in range(200):
        t = t0 + 0.5 * L * (gx + 1.0)
        wgt = 0.5 * L * gw
        ws = p + t * d
        pw = np.prod(ws[:, None] - l[None, :], axis=1)
        kern = 1.0 / (ws[:, None] - znodes[None, :])
        # midpoint rule: (1/2 pi i) oint f dz = mean of f(z) (z - center)
        zint = (kern * zfac[None, :] * (znodes - c0)[None, :]).mean(axis=1)
        vals = np.exp(-ws * v) * pw * zint
        piece = np.sum(vals * wgt * d)
        total += piece
        t0 += L
        if abs(piece) < 1e-14 * max(abs(total), 1e-300):
            stall += 1
            if stall >= 2:
                break
        else:
            stall = 0
    else:
        raise QuadratureStall("ray quadrature did not converge")
    core = np.exp(p * (u - v)) / (u - v) + total
    return (u - v) * (v / u) ** N * core


def ssym_lift_schur(lam, p, u, v, form="matrix"):
    """Normalized supersymmetric Schur lift s_{lam,p}(e^u, 1^N / e^v)/s_lam(1^N)."""
    lam = np.asarray(lam, dtype=int)
    N = len(lam)
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    k = len(u)
    ell = (lam + np.arange(N - 1, -1, -1)).astype(float)
    scale = _scale_of(np.concatenate([u, v]))
    # full cancellation u = v (componentwise)
    if np.all(np.abs(u - v) < 1e-12 * scale):
        return 1.0 + 0.0j
    if form == "matrix":
        core = ssym_lift_matrix_form(ell, p, u, v, np.zeros(N))
    else:
        if k != 1:
            raise ValueError("contour form only for k = 1")
        core = ssym_lift_contour_k1(ell, p, u[0], v[0])
    pref = 1.0 + 0.0j
    for i in range(k):
        pref *= np.exp(-v[i]) * (u[i] / np.expm1(u[i]) * np.expm1(v[i]) / v[i]) ** N
    for i in range(k):
        for j in range(k):
            pref *= (np.exp(u[i]) - np.exp(v[j])) / (u[i] - v[j])
    for i in range(k):
        for j in range(i + 1, k):
            pref *= (u[i] - u[j]) * (v[i] - v[j])
            pref /= (np.exp(u[i]) - np.exp(u[j])) * (np.exp(v[i]) - np.exp(v[j]))
    return pref * core


def susy_schur_det(lam, x, y):
    """Supersymmetric Schur function s_lam(x_1..x_m / y_1..y_n) with
    m - n = N, by the Cauchy-kernel determinant."""
    lam = np.asarray(lam, dtype=int)
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    N = len(lam)
    n = len(y)
    if len(x) != N + n:
        raise ValueError("need len(x) - len(y) = len(lam)")
    scale = _scale_of(np.concatenate([x, y]))
    for j in range(n):
        d = np.abs(x - y[j])
        i = int(np.argmin(d))
        if d[i] < 1e-8 * scale:
            return susy_schur_det(lam, np.delete(x, i), np.delete(y, j))
    powers = lam + np.arange(N - 1, -1, -1)
    taylors = [_rpole_taylor(yj) for yj in y] + [_pow_taylor(int(a)) for a in powers]
    if np.any(powers < 0) and np.any(x == 0):
        raise ZeroArgumentNegativePower("zero argument with negative exponent")
    sign, logabs = _alternant(x, taylors)
    pref_s, pref_l = 1.0 + 0.0j, 0.0
    for xi in x:
        for yj in y:
            d = xi - yj
            if d == 0:
                raise PoleCollision("x_i equals y_j")
            pref_l += np.log(abs(d))
            pref_s *= d / abs(d)
    for a in range(n):
        for b in range(a + 1, n):
            d = y[b] - y[a]
            pref_l -= np.log(abs(d))
            pref_s /= d / abs(d)
    sign = sign * pref_s * (-1.0) ** (N * n)
    return _assemble(sign, logabs + pref_l)


def susy_schur_contour_q(lam, x, y, q):
    """s_lam(x, 1, q, .., q^(N-1) / y) / s_lam(1, q, .., q^(N-1)) by the
    double contour formula with the sin-kernel."""
    lam = np.asarray(lam, dtype=int)
    N = len(lam)
    x = complex(x)
    y = complex(y)
    if not (0.05 < q < 0.95):
        raise ValueError("q out of the conditioned range")
    ell = (lam + np.arange(N - 1, -1, -1)).astype(float)
    qpows = q ** np.arange(N)
    if np.min(np.abs(x - qpows)) == 0 or np.min(np.abs(y - qpows)) == 0:
        raise PoleCollision("argument collides with a geometric node")
    lnq = np.log(q)
    p0 = -0.5
    # z-contour: a flat ellipse tightly enclosing the spectrum so it fits
    # inside the w-wedge; the z-poles sit exactly at the spectrum points
    c0 = 0.5 * (ell.min() + ell.max())
    a_ax = 0.5 * (ell.max() - ell.min()) + 0.3
    b_ax = 0.3
    nz = 1024
    ts = (np.arange(nz) + 0.5) * 2.0 * np.pi / nz
    znodes = c0 + a_ax * np.cos(ts) + 1j * b_ax * np.sin(ts)
    zwgt = b_ax * np.cos(ts) + 1j * a_ax * np.sin(ts)  # (1/2 pi i) dz factor
    # the wedge from p0 must contain the ellipse and the nonnegative integers,
    # stay clear of the period-shifted z-poles, and have decaying integrand
    # on both rays
    lny = np.log(complex(y))
    per = 2.0 * np.pi / abs(lnq)
    best = None
    for sigma in (1.0, -1.0):
        for phi in np.linspace(0.3, 1.0, 15):
            rates = []
            ok = True
            for th in (phi, -phi):
                rates.append(np.pi * (abs(np.sin(th)) + sigma * np.sin(th))
                             + lny.real * np.cos(th) - lny.imag * np.sin(th))
            # ellipse inside the wedge with margin
            rel = znodes - p0
            ang = np.angle(rel)
            if np.max(np.abs(ang)) > phi - 0.08:
                ok = False
            # shifted poles ell_i +/- i per outside the wedge
            for e in ell:
                for sgn in (1.0, -1.0):
                    pp = e + 1j * sgn * per
                    if abs(np.angle(pp - p0)) < phi + 0.08:
                        ok = False
            if ok and min(rates) > 0.05:
                if best is None or min(rates) > best[0]:
                    best = (min(rates), sigma, phi)
    if best is None:
        raise BranchError("no wedge with sufficient integrand decay")
    rate, sigma, phi = best

    from numpy.polynomial.legendre import leggauss
    gx, gw = leggauss(96)
    qell = q ** ell
    zden = np.prod(np.power(q, znodes)[:, None] - qell[None, :], axis=1)
    zfac = np.power(x, znodes) / zden

    def ray_integral(th):
        d = np.exp(1j * th)
        total = 0.0 + 0.0j
        t0, L, stall = 0.0, max(2.0 / rate, 1.0), 0
        for panel in range(200):
            t = t0 + 0.5 * L * (gx + 1.0)
            wgt = 0.5 * L * gw
            ws = p0 + t * d
            qw = np.power(q, ws)
            pw = np.prod(qw[:, None] - qell[None, :], axis=1)
            sin_k = np.pi * np.exp(sigma * 1j * np.pi * ws) / np.sin(np.pi * ws)
            kern = lnq / (np.power(q, ws[:, None] - znodes[None, :]) - 1.0)
            zint = (kern * (zfac * zwgt)[None, :]).mean(axis=1)
            vals = sin_k * np.power(y, -(ws + 1.0)) * pw * zint
            piece = np.sum(vals * wgt * d)
            total += piece
            t0 += L
            if abs(piece) < 1e-14 * max(abs(total), 1e-300):
                stall += 1
                if stall >= 2:
                    break
            else:
                stall = 0
        else:
            raise QuadratureStall("wedge quadrature did not converge")
        return total

    # positively oriented wedge boundary: out along the lower ray, back in
    # along the upper ray
    dbl = (ray_integral(-phi) - ray_integral(phi)) / (2.0j * np.pi)
    core = 1.0 / (x - y) + dbl
    return (x - y) * np.prod((y - qpows) / (x - qpows)) * core


def ssym_lift_asymptotic(m, p, u, v, N):
    """Large-N asymptotic value of the normalized Bessel lift at arguments
    N*u, N*v, driven by the empirical quantile spectrum of the measure."""
    if not isinstance(m, Measure):
        raise TypeError("need a measure")
    u = np.atleast_1d(np.asarray(u, dtype=complex))
    v = np.atleast_1d(np.asarray(v, dtype=complex))
    k = len(u)
    emp = Empirical(quantile_spectrum(m, N))
    scale = _scale_of(np.concatenate([u, v]))
    # the diagonal u_i = v_j limit is finite; resolve it by a tiny split
    for i in range(k):
        for j in range(k):
            if abs(u[i] - v[j]) < 1e-10 * scale:
                v = v.copy()
                v[j] += 1e-7 * scale
    zu = np.array([inverse_cauchy(emp, float(ui.real)) for ui in u], dtype=complex)
    zv = np.array([inverse_cauchy(emp, float(vi.real)) for vi in v], dtype=complex)
    pref = 1.0 + 0.0j
    for i in range(k):
        for j in range(k):
            pref *= (u[i] - v[j]) / (zu[i] - zv[j])
    for i in range(k):
        for j in range(i + 1, k):
            pref /= (u[i] - u[j]) * (v[j] - v[i])
            pref *= (zu[i] - zu[j]) * (zv[j] - zv[i])
    out = pref
    for i in range(k):
        gp_u = emp.cauchy(complex(zu[i]), 1)
        gp_v = emp.cauchy(complex(zv[i]), 1)
        # principal square root keeps the inverse branch continuous at u = v
        out /= np.sqrt(complex(gp_u)) * np.sqrt(complex(gp_v))
        su = S_eval(emp, u[i], complex(zu[i]))
        sv = S_eval(emp, v[i], complex(zv[i]))
        out *= np.exp(N * (su - sv))
    return complex(out)

"""Contour-integral moment formulas for spectra of randomly rotated sums and
tensor-product decompositions, shift-operator oracles, and Laplace-type
functionals of the Airy point process.
"""

import numpy as np

from .symfuncs import (ssym_lift_matrix_form, SingularAlternant,
                       QuadratureStall)


class ContourViolation(Exception):
    pass


class ExtrapolationUnstable(Exception):
    pass


class TruncationInsufficient(Exception):
    pass


class MomentRequest:
    """Description of a moment computation.

    model: ("deterministic", spectrum) or ("additive", [spectra]) or
           ("tensor", [signatures]).
    c: vector of positive shifts, one per moment factor.
    N: matrix size / signature length.
    radii: optional override for the contour circle radii.
    """

    def __init__(self, model, c, N, radii=None, nodes=64):
        self.kind = model[0]
        if self.kind == "deterministic":
            self.factors = [np.asarray(model[1], dtype=float)]
        else:
            self.factors = [np.asarray(f, dtype=float) for f in model[1]]
        self.c = np.atleast_1d(np.asarray(c, dtype=float))
        self.N = int(N)
        if np.any(self.c <= 0):
            raise ValueError("shifts must be positive")
        for f in self.factors:
            if len(f) != self.N:
                raise ValueError("factor length differs from N")
        self.radii = radii
        self.nodes = nodes
        self.nodes_used = None


def default_contours(c):
    """Circle centers and radii for the k-fold moment integral, for shifts
    sorted in ascending order.

    Two families of cross-ratio poles constrain the u_j-circle: u_i + c_i
    must lie inside it (these carry the residues) while u_i - c_j must stay
    outside.  Origin-centered circles cannot separate both families unless
    the shifts grow quickly, so each circle is centered halfway to the
    rightmost point it must enclose, with its radius midway between the
    enclosure lower bound and the exclusion upper bound.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    centers = [0.0]
    radii = [float(c[0]) / 4.0]
    for j in range(1, len(c)):
        right = max(centers[i] + c[i] + radii[i] for i in range(j))
        g = 0.5 * right
        lo = g
        hi = np.inf
        for i in range(j):
            lo = max(lo, abs(centers[i] + c[i] - g) + radii[i])
            hi = min(hi, abs(g - centers[i] + c[j]) - radii[i])
        if hi <= lo * (1.0 + 1e-3):
            raise ContourViolation(
                "no circle separates the residue poles from the excluded "
                "poles for these shifts")
        centers.append(g)
        radii.append(0.5 * (lo + hi))
    return np.array(centers), np.array(radii)


class _LiftKernel:
    """Rank-one kernel of the normalized lift of one spectrum at reference
    point 0^N, evaluated by residue summation (the closed-form value of the
    ray-contour representation).  Stable for the moderate N used in moment
    integrals."""

    def __init__(self, l, p):
        l = np.sort(np.asarray(l, dtype=float))[::-1]
        scale = max(1.0, float(np.max(np.abs(l))))
        # residues need simple poles; spread tied values symmetrically, so
        # the elementary symmetric functions (hence the lift) move only by
        # O(delta^2) while the residue cancellation stays mild
        delta = 1e-4 * scale
        groups = []
        for x in l:
            if groups and abs(groups[-1][0] - x) < 1e-6 * scale:
                groups[-1].append(x)
            else:
                groups.append([x])
        spread = []
        for g in groups:
            mid = float(np.mean(g))
            n = len(g)
            spread.extend(mid + (np.arange(n) - 0.5 * (n - 1)) * delta)
        l = np.asarray(spread)
        self.l = l
        self.p = complex(p)
        self.N = len(l)
        N = self.N
        diff = l[:, None] - l[None, :]
        np.fill_diagonal(diff, 1.0)
        self.w = 1.0 / np.prod(diff, axis=1)
        # coef[a, j]: ascending-power coefficients of prod_{i != a}(t + p - l_i)
        import math
        coef = np.zeros((N, N), dtype=complex)
        for a in range(N):
            poly = np.array([1.0 + 0.0j])
            for i in range(N):
                if i == a:
                    continue
                r = self.p - l[i]
                # multiply by (t + r)
                poly = np.concatenate([[0.0], poly]) \
                    + r * np.concatenate([poly, [0.0]])
            coef[a] = poly
        self.coef = coef
        self.fact = np.array([float(math.factorial(j)) for j in range(N)])

    def ratio(self, a, b):
        """Normalized k = 1 lift value at (a, 0^N / b); a, b broadcastable
        complex arrays."""
        a = np.asarray(a, dtype=complex)
        b = np.asarray(b, dtype=complex)
        l, p, N = self.l, self.p, self.N
        # P_alpha(b) = e^{-pb} sum_j coef[alpha, j] j! / b^{j+1}
        binv = 1.0 / b[..., None]
        powers = binv ** (np.arange(1, N + 1))
        P = np.exp(-p * b)[..., None] * np.tensordot(
            powers, (self.coef * self.fact).T, axes=([-1], [0]))
        T = np.sum(np.exp(np.multiply.outer(a, l)) * self.w * P, axis=-1)
        core = np.exp(p * (a - b)) / (a - b) + T
        return (a - b) * (b / a) ** N * core

    def lift(self, u_vec, v_vec):
        """Normalized k-argument lift at (u_vec, 0^N / v_vec) via the
        Cauchy-determinant factorization of the rank-one kernel.
        u_vec, v_vec: arrays of shape (..., k)."""
        u = np.asarray(u_vec, dtype=complex)
        v = np.asarray(v_vec, dtype=complex)
        k = u.shape[-1]
        if k == 1:
            return self.ratio(u[..., 0], v[..., 0])
        M = np.zeros(u.shape[:-1] + (k, k), dtype=complex)
        pref = np.ones(u.shape[:-1], dtype=complex)
        for i in range(k):
            for j in range(k):
                d = u[..., i] - v[..., j]
                M[..., i, j] = self.ratio(u[..., i], v[..., j]) / d
                pref = pref * d
        for i in range(k):
            for j in range(i + 1, k):
                pref = pref / ((u[..., i] - u[..., j]) * (v[..., j] - v[..., i]))
        return pref * np.linalg.det(M)


def _default_p(l):
    l = np.asarray(l, dtype=float)
    span = max(float(l.max() - l.min()), 1.0)
    return 0.5 * (float(l.min()) + float(l.max())) + 1e-6j * span


def _matrix_form_usable(l, p, c):
    """Probe the reference-point alternant conditioning once per factor."""
    try:
        ssym_lift_matrix_form(l, p, [0.9 * max(np.max(c), 0.5) + 0.3j],
                              [0.2 + 0.1j], np.zeros(len(l)))
        return True
    except SingularAlternant:
        return False


def _factor_lift(l, p, c):
    """Return a callable (u_vec, v_vec) -> normalized lift values.

    The closed-form contour kernel is used for simple spectra: the
    reference-point alternant of the matrix form needs regularization at
    coinciding reference points, which injects a bias right at the accuracy
    budget, while the kernel route evaluates the same lift exactly up to its
    symmetric tie-splitting.
    """
    return _LiftKernel(l, p).lift


def _circle_nodes(center, radius, n_nodes):
    th = (np.arange(n_nodes) + 0.5) * 2.0 * np.pi / n_nodes
    return center + radius * np.exp(1j * th)


def _check_contours(centers, radii, c):
    for i in range(len(c)):
        if radii[i] <= 0:
            raise ContourViolation("radius must be positive")
        if abs(centers[i]) >= radii[i]:
            raise ContourViolation("circle must enclose the origin")
        for j in range(i + 1, len(c)):
            if abs(centers[i] + c[i] - centers[j]) + radii[i] >= radii[j]:
                raise ContourViolation("contours are not nested")
            if abs(centers[i] - c[j] - centers[j]) - radii[i] <= radii[j]:
                raise ContourViolation("excluded pole inside a contour")


def _moment_integral(req, integrand_weight, lift_fns):
    """Shared k-fold circle quadrature with node doubling.

    The moment is symmetric in the shifts, so they are relabeled in
    ascending order; the default contour construction needs that ordering.
    """
    order = np.argsort(req.c, kind="stable")
    c = req.c[order]
    k = len(c)
    if req.radii is not None:
        spec = [req.radii[i] for i in order]
        centers = np.array([s[0] if np.iterable(s) else 0.0 for s in spec],
                           dtype=float)
        radii = np.array([s[1] if np.iterable(s) else s for s in spec],
                         dtype=float)
    else:
        centers, radii = default_contours(c)
    if len(radii) != k:
        raise ContourViolation("need one contour per factor")
    _check_contours(centers, radii, c)
    n_nodes = max(64, req.nodes)
    prev = None
    for _ in range(6):
        circles = [_circle_nodes(centers[i], radii[i], n_nodes)
                   for i in range(k)]
        grids = np.meshgrid(*circles, indexing="ij")
        U = np.stack(grids, axis=-1)              # (..., k) u nodes
        Uc = U + c                                # u + c
        val = np.ones(U.shape[:-1], dtype=complex)
        for fn in lift_fns:
            val = val * fn(Uc, U)
        val = val * integrand_weight(U, c, req.N)
        # midpoint rule per circle: (1/2 pi i) oint f du = mean(f(u) (u - g))
        for i in range(k):
            val = val * (grids[i] - centers[i])
        est = complex(np.mean(val))
        if prev is not None and abs(est - prev) <= 1e-9 * max(abs(est), 1e-12):
            req.nodes_used = n_nodes
            return est
        prev = est
        n_nodes *= 2
    raise QuadratureStall("moment quadrature did not stabilize")


def _weight_additive(U, c, N):
    w = np.ones(U.shape[:-1], dtype=complex)
    k = len(c)
    for i in range(k):
        w = w * ((U[..., i] + c[i]) / U[..., i]) ** N / c[i]
    for i in range(k):
        for j in range(i + 1, k):
            w = w * ((U[..., j] + c[j] - U[..., i] - c[i])
                     * (U[..., j] - U[..., i])) \
                / ((U[..., j] - U[..., i] - c[i])
                   * (U[..., j] + c[j] - U[..., i]))
    return w


def _weight_tensor(U, c, N):
    w = np.ones(U.shape[:-1], dtype=complex)
    k = len(c)
    E = np.exp(U)
    Ec = np.exp(U + c)
    for i in range(k):
        w = w * ((Ec[..., i] - 1.0) / (E[..., i] - 1.0)) ** N / np.expm1(c[i])
    for i in range(k):
        for j in range(i + 1, k):
            w = w * ((Ec[..., j] - Ec[..., i]) * (E[..., j] - E[..., i])) \
                / ((E[..., j] - Ec[..., i]) * (Ec[..., j] - E[..., i]))
    return w


def moment_additive(req):
    """E[prod_i sum_j e^{c_i l_j}] for the spectrum of a sum of independent
    Haar-rotated matrices with the given deterministic spectra."""
    lifts = []
    for l in req.factors:
        p = _default_p(l)
        lifts.append(_factor_lift(l, p, req.c))
    val = _moment_integral(req, _weight_additive, lifts)
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-12):
        raise QuadratureStall("moment has a non-negligible imaginary part")
    return val.real


class _SchurLift:
    """Normalized supersymmetric Schur lift of one signature factor,
    expressed through the exponential-variable Bessel lift."""

    def __init__(self, lam, p, N):
        lam = np.asarray(lam, dtype=int)
        self.N = N
        ell = (lam + np.arange(N - 1, -1, -1)).astype(float)
        self.kern = _LiftKernel(ell, p)

    def __call__(self, u_vec, v_vec):
        u = np.asarray(u_vec, dtype=complex)
        v = np.asarray(v_vec, dtype=complex)
        k = u.shape[-1]
        N = self.N
        core = self.kern.lift(u, v)
        pref = np.ones(u.shape[:-1], dtype=complex)
        for i in range(k):
            pref = pref * np.exp(-v[..., i]) \
                * (u[..., i] / np.expm1(u[..., i])
                   * np.expm1(v[..., i]) / v[..., i]) ** N
        for i in range(k):
            for j in range(k):
                pref = pref * (np.exp(u[..., i]) - np.exp(v[..., j])) \
                    / (u[..., i] - v[..., j])
        for i in range(k):
            for j in range(i + 1, k):
                pref = pref * (u[..., i] - u[..., j]) * (v[..., i] - v[..., j])
                pref = pref / ((np.exp(u[..., i]) - np.exp(u[..., j]))
                               * (np.exp(v[..., i]) - np.exp(v[..., j])))
        return pref * core


def moment_tensor(req):
    """E[prod_i sum_j e^{c_i (lam_j + N - j)}] for lam drawn from the
    isotypic decomposition of the tensor product of the given signatures."""
    lifts = []
    for lam in req.factors:
        ell = np.asarray(lam, dtype=float) + np.arange(req.N - 1, -1, -1)
        p = _default_p(ell)
        lifts.append(_SchurLift(lam, p, req.N))
    val = _moment_integral(req, _weight_tensor, lifts)
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-12):
        raise QuadratureStall("moment has a non-negligible imaginary part")
    return val.real


def difference_operator_oracle(kind, S, c, N):
    """Apply the shift-operator sums for the given shifts and evaluate at the
    origin; independent oracle for the contour moment formulas.

    kind: "bessel" uses rational coefficients (z_i + c - z_j)/(z_i - z_j),
    "schur" their exponential counterparts.  S: callable on length-N complex
    vectors.  Coinciding arguments are regularized by evaluating on a small
    symmetric offset pattern and extrapolating the offset to zero.
    """
    c = np.atleast_1d(np.asarray(c, dtype=float))
    k = len(c)
    if N > 5 or k > 3:
        raise ValueError("operator sums limited to N <= 5, k <= 3")

    def apply(cs, z):
        if not cs:
            return S(z)
        cc = cs[0]
        total = 0.0 + 0.0j
        for i in range(N):
            coef = 1.0 + 0.0j
            for j in range(N):
                if j == i:
                    continue
                if kind == "bessel":
                    coef *= (z[i] + cc - z[j]) / (z[i] - z[j])
                else:
                    coef *= (np.exp(z[i] + cc) - np.exp(z[j])) \
                        / (np.exp(z[i]) - np.exp(z[j]))
            zs = np.array(z, dtype=complex)
            zs[i] += cc
            total += coef * apply(cs[1:], zs)
        return total

    offsets = np.arange(1, N + 1, dtype=float) / N
    # the composed operator sum is analytic in the offset scale, but the
    # individual terms blow up when an offset difference hits a shift; stay
    # a factor 2 below the smallest such scale so the cancellations are mild
    tb = 0.5 * float(np.min(c)) * N / max(N - 1, 1)
    ts = tb * 0.7 ** np.arange(6)
    # normalizing by S at the base point subtracts the dominant analytic
    # t-variation (exactly, for eigenfunctions) and leaves the extrapolation
    # an almost constant target; the limits at t = 0 coincide since S(0) = 1
    # for generating functions (general S: the ratio limit is rescaled back)
    s0 = complex(S(np.zeros(N, dtype=complex)))
    vals = np.array([apply(list(c), (t * offsets).astype(complex))
                     / complex(S((t * offsets).astype(complex)))
                     for t in ts]) * s0
    # Richardson in the offset scale, with adaptive depth: each level removes
    # one power of t but multiplies the rounding noise of the evaluations,
    # so stop once the inter-column corrections stop shrinking
    v = vals.copy()
    best = complex(v[-1])
    best_spread = float(np.max(np.abs(np.diff(vals)))) if len(vals) > 1 \
        else 0.0
    for lev in range(1, len(ts)):
        v = v[1:] + (v[1:] - v[:-1]) * ts[lev:] / (ts[:-lev] - ts[lev:])
        spread = float(np.max(np.abs(np.diff(v)))) if len(v) > 1 \
            else abs(v[0] - best)
        if not np.all(np.isfinite(v)) or spread >= best_spread:
            break
        best = complex(v[-1])
        best_spread = spread
    if abs(best - vals[-1]) > 0.5 * max(abs(best), 1.0) \
            or not np.isfinite(best):
        raise ExtrapolationUnstable("offset extrapolation diverged")
    return best


# ---------------------------------------------------------------------------
# Airy point process Laplace functionals


def _airy_weight(Z, c):
    """Vandermonde-type cross ratio of the Airy moment integrand."""
    n = len(c)
    w = np.ones(Z.shape[:-1], dtype=complex)
    for i in range(n):
        for j in range(i + 1, n):
            zi, zj = Z[..., i], Z[..., j]
            w = w * ((zj + c[j] / 2 - zi - c[i] / 2)
                     * (zj - c[j] / 2 - zi + c[i] / 2)) \
                / ((zj - c[j] / 2 - zi - c[i] / 2)
                   * (zj + c[j] / 2 - zi + c[i] / 2))
    return w


def _gl_line(T, nodes_per_seg):
    """Gauss-Legendre nodes and weights on [-T, T] in length-2 segments."""
    from numpy.polynomial.legendre import leggauss
    gx, gw = leggauss(nodes_per_seg)
    edges = np.arange(-T, T + 1e-12, 2.0)
    if edges[-1] < T:
        edges = np.append(edges, T)
    xs, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        xs.append(0.5 * (b - a) * gx + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * gw)
    return np.concatenate(xs), np.concatenate(ws)


def _airy_integral(c, abscissas, nodes_per_seg=None):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    n = len(c)
    if n > 3:
        raise ValueError("quadrature limited to n <= 3")
    if np.any(c <= 0):
        raise ValueError("shifts must be positive")
    if nodes_per_seg is None:
        nodes_per_seg = 200 if n <= 2 else 40
    T = np.sqrt(40.0 / float(np.min(c)))
    t, wt = _gl_line(T, nodes_per_seg)
    # tail bound for the Gaussian factor at the truncation point
    tail = np.exp(np.max(c * np.asarray(abscissas) ** 2) - np.min(c) * T * T)
    if tail > 1e-12:
        raise TruncationInsufficient("Gaussian tail above tolerance")
    pref = np.exp(np.sum(c ** 3) / 12.0) / np.prod(c) / (2.0 * np.pi) ** n
    if n == 1:
        z = abscissas[0] + 1j * t
        return pref * np.sum(np.exp(c[0] * z * z) * wt)
    if n == 2:
        total = 0.0 + 0.0j
        z2 = abscissas[1] + 1j * t
        e2 = np.exp(c[1] * z2 * z2) * wt
        chunk = 256
        for s in range(0, len(t), chunk):
            z1 = abscissas[0] + 1j * t[s:s + chunk]
            e1 = np.exp(c[0] * z1 * z1) * wt[s:s + chunk]
            Z = np.stack(np.meshgrid(z1, z2, indexing="ij"), axis=-1)
            total += np.sum(e1[:, None] * e2[None, :] * _airy_weight(Z, c))
        return pref * total
    total = 0.0 + 0.0j
    z3 = abscissas[2] + 1j * t
    e3 = np.exp(c[2] * z3 * z3) * wt
    for s1 in range(len(t)):
        z1 = abscissas[0] + 1j * t[s1]
        e1 = np.exp(c[0] * z1 * z1) * wt[s1]
        z2 = abscissas[1] + 1j * t
        e2 = np.exp(c[1] * z2 * z2) * wt
        Z = np.stack([np.broadcast_to(z1, (len(t), len(t))),
                      np.broadcast_to(z2[:, None], (len(t), len(t))),
                      np.broadcast_to(z3[None, :], (len(t), len(t)))], axis=-1)
        total += e1 * np.sum(e2[:, None] * e3[None, :] * _airy_weight(Z, c))
    return pref * total


def airy_laplace(c):
    """Laplace-type moment of the Airy point process, by quadrature on
    vertical lines with staggered abscissas."""
    c = np.atleast_1d(np.asarray(c, dtype=float))
    ab = [0.0]
    for j in range(1, len(c)):
        ab.append(ab[-1] + (c[j - 1] + c[j]) / 2.0 + 0.5)
    val = _airy_integral(c, ab)
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-12):
        raise TruncationInsufficient("imaginary residue above tolerance")
    return float(val.real)


def airy_pair_remainder(c1, c2):
    """The two-line integral with both contours on the imaginary axis."""
    val = _airy_integral([c1, c2], [0.0, 0.0])
    if abs(val.imag) > 1e-8 * max(abs(val.real), 1e-12):
        raise TruncationInsufficient("imaginary residue above tolerance")
    return float(val.real)


def airy_recursion_check(c1, c2):
    """Consistency of the two-point moment with its pole-decomposition:
    moving the second line onto the axis picks up the one-point moment at
    c1 + c2."""
    lhs = airy_laplace([c1, c2])
    rhs = airy_pair_remainder(c1, c2) + airy_laplace([c1 + c2])
    return {"lhs": lhs, "rhs": rhs, "gap": abs(lhs - rhs)}

"""Compactly supported probability measures and their Cauchy-transform analytics.

Everything downstream (subordination, edge constants, lifts) talks to measures
only through G, its derivatives, the right inverse, and quantiles, so those are
the operations that carry the accuracy requirements here.
"""

import json

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, betaincinv, betaln, hyp2f1

from ._quad import gl_integrate, jacgauss


class MeasureError(Exception):
    pass


class PointOnSupport(MeasureError):
    pass


class AtomicUnsupported(MeasureError):
    pass


class NearSingularEndpoint(MeasureError):
    pass


class OutOfRange(MeasureError):
    pass


class NoConvergence(MeasureError):
    pass


class NotDensityBounded(MeasureError):
    pass


_FACT = [1.0, 1.0, 2.0, 6.0]


def _clog1p(w):
    """log(1 + w) for complex arrays, accurate for small |w|."""
    u = 1.0 + w
    d = u - 1.0
    safe = np.where(d == 0, 1.0, d)
    adj = np.where(d == 0, 1.0, np.log(np.where(u == 0, 1.0, u)) / safe)
    return w * adj


class Measure:
    """Base class. Subclasses fill in support, cauchy, cdf, quantile."""

    density_le_one = False

    @property
    def span(self):
        return self.support[1] - self.support[0]

    @property
    def _scale(self):
        # length scale for "near" tolerances; a single atom has zero span
        s = self.span
        return s if s > 0 else max(1.0, abs(self.support[0]))

    def _check_off_support(self, z):
        z = np.asarray(z, dtype=complex)
        lo, hi = self.support
        dx = np.maximum(0.0, np.maximum(lo - z.real, z.real - hi))
        if np.any(np.hypot(dx, z.imag) < 1e-12 * self._scale):
            raise PointOnSupport("evaluation point touches the support")
        return z

    def cauchy(self, z, order=0):
        raise NotImplementedError

    def mean(self):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def quantile(self, q):
        raise NotImplementedError

    def shifted(self, a):
        raise NotImplementedError

    def principal_value(self, x):
        raise AtomicUnsupported("principal value needs a density variant")

    def to_json_dict(self):
        raise NotImplementedError


class Atomic(Measure):
    def __init__(self, atoms, density_le_one=False):
        atoms = sorted(atoms)
        self.locations = np.array([a for a, _ in atoms], dtype=float)
        self.weights = np.array([w for _, w in atoms], dtype=float)
        if np.any(self.weights <= 0):
            raise ValueError("atom weights must be positive")
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError("atomic weights must sum to 1")
        self.support = (float(self.locations[0]), float(self.locations[-1]))
        self.density_le_one = density_le_one

    def _check_off_support(self, z):
        z = np.asarray(z, dtype=complex)
        d = np.abs(z[..., None] - self.locations).min(axis=-1)
        if np.any(d < 1e-12 * self._scale):
            raise PointOnSupport("evaluation point touches an atom")
        return z

    def cauchy(self, z, order=0):
        z = self._check_off_support(z)
        k = order
        val = ((-1) ** k * _FACT[k]) * np.sum(
            self.weights / (z[..., None] - self.locations) ** (k + 1), axis=-1
        )
        return val if val.ndim else complex(val)

    def mean(self):
        return float(self.weights @ self.locations)

    def cdf(self, x):
        return float(self.weights[self.locations <= x].sum())

    def quantile(self, q):
        c = np.cumsum(self.weights)
        idx = int(np.searchsorted(c, q - 1e-14))
        return float(self.locations[min(idx, len(self.locations) - 1)])

    def shifted(self, a):
        return Atomic(list(zip(self.locations + a, self.weights)))

    def to_json_dict(self):
        return {
            "type": "atomic",
            "atoms": [{"x": float(x), "w": float(w)}
                      for x, w in zip(self.locations, self.weights)],
        }


class Empirical(Atomic):
    """Equal-weight atoms at sorted points."""

    def __init__(self, points):
        points = np.sort(np.asarray(points, dtype=float))
        Atomic.__init__(self, [(x, 1.0 / len(points)) for x in points])
        self.points = points

    def shifted(self, a):
        return Empirical(self.points + a)

    def to_json_dict(self):
        return {"type": "empirical", "points": [float(x) for x in self.points]}


class Uniform(Measure):
    def __init__(self, lo, hi, density_le_one=None):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi = float(lo), float(hi)
        self.support = (self.lo, self.hi)
        if density_le_one is None:
            density_le_one = 1.0 / (hi - lo) <= 1.0 + 1e-12
        self.density_le_one = density_le_one

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / (self.hi - self.lo), 0.0)

    def cauchy(self, z, order=0):
        z = self._check_off_support(z)
        w = self.hi - self.lo
        if order == 0:
            val = (np.log(z - self.lo) - np.log(z - self.hi)) / w
        else:
            k = order
            val = ((-1) ** (k - 1) * _FACT[k - 1] / w) * (
                (z - self.lo) ** (-k) - (z - self.hi) ** (-k)
            )
        return val if val.ndim else complex(val)

    def mean(self):
        return 0.5 * (self.lo + self.hi)

    def cdf(self, x):
        return float(np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0))

    def quantile(self, q):
        return self.lo + q * (self.hi - self.lo)

    def principal_value(self, x):
        lo, hi = self.support
        if not lo < x < hi:
            raise OutOfRange("point must be interior to the support")
        return float(np.log((x - lo) / (hi - x)) / (hi - lo))

    def shifted(self, a):
        return Uniform(self.lo + a, self.hi + a, self.density_le_one)

    def to_json_dict(self):
        d = {"type": "uniform", "lo": self.lo, "hi": self.hi}
        if self.density_le_one:
            d["density_le_one"] = True
        return d


class JacobiLike(Measure):
    """Density proportional to (x-alpha)^a (beta-x)^b on (alpha, beta)."""

    def __init__(self, a, b, alpha, beta, density_le_one=None):
        if a <= -1 or b <= -1:
            raise ValueError("exponents must exceed -1")
        if not beta > alpha:
            raise ValueError("need beta > alpha")
        self.a, self.b = float(a), float(b)
        self.alpha, self.beta = float(alpha), float(beta)
        self.support = (self.alpha, self.beta)
        # mass = c * (beta-alpha)^(a+b+1) * B(a+1, b+1) = 1
        self.lognorm = -(self.a + self.b + 1) * np.log(self.beta - self.alpha) \
            - betaln(self.a + 1, self.b + 1)
        if density_le_one is None:
            if self.a < 0 or self.b < 0:
                density_le_one = False
            else:
                xg = np.linspace(self.alpha, self.beta, 2001)
                density_le_one = bool(self.density(xg).max() <= 1.0 + 1e-9)
        self.density_le_one = density_le_one

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.alpha) & (x < self.beta)
        out = np.zeros_like(x, dtype=float)
        xs = x[inside]
        out[inside] = np.exp(
            self.lognorm + self.a * np.log(xs - self.alpha) + self.b * np.log(self.beta - xs)
        )
        return out

    def _integrate(self, f, rtol=1e-12):
        # full-support integral of f against the density, Gauss-Jacobi in the
        # physical variable with node doubling
        half = 0.5 * (self.beta - self.alpha)
        const = np.exp(self.lognorm) * half ** (self.a + self.b + 1)
        prev = None
        n = 64
        while n <= 16384:
            t, w = jacgauss(n, self.b, self.a)
            x = self.alpha + half * (1.0 + t)
            val = const * np.tensordot(f(x), w, axes=([-1], [0]))
            if prev is not None:
                scale = np.max(np.abs(val)) + 1e-300
                if np.max(np.abs(val - prev)) <= rtol * scale:
                    return val
            prev = val
            n *= 2
        return prev

    def cauchy(self, z, order=0):
        # geometric expansion of 1/(z-x)^(k+1) against the Beta moments sums
        # to a Gauss hypergeometric function; exact and stable right up to
        # the support edge, unlike direct quadrature
        z = self._check_off_support(z)
        k = order
        w = (self.beta - self.alpha) / (z - self.alpha)
        val = (-1) ** k * _FACT[k] \
            * hyp2f1(k + 1, self.a + 1, self.a + self.b + 2, w) \
            / (z - self.alpha) ** (k + 1)
        return val if val.ndim else complex(val)

    def cauchy_at_top_edge(self, order=0):
        """G and G' at z = beta in closed form (Beta integrals); inf where divergent."""
        if order == 0:
            if self.b <= 0:
                return np.inf
            return float(np.exp(self.lognorm + (self.a + self.b)
                                * np.log(self.beta - self.alpha)
                                + betaln(self.a + 1, self.b)))
        if order == 1:
            if self.b <= 1:
                return -np.inf
            return -float(np.exp(self.lognorm + (self.a + self.b - 1)
                                 * np.log(self.beta - self.alpha)
                                 + betaln(self.a + 1, self.b - 1)))
        raise ValueError("only orders 0 and 1 have closed forms here")

    def mean(self):
        return self.alpha + (self.beta - self.alpha) * (self.a + 1) / (self.a + self.b + 2)

    def cdf(self, x):
        t = np.clip((x - self.alpha) / (self.beta - self.alpha), 0.0, 1.0)
        return float(betainc(self.a + 1, self.b + 1, t))

    def quantile(self, q):
        return self.alpha + (self.beta - self.alpha) * float(
            betaincinv(self.a + 1, self.b + 1, q))

    def principal_value(self, x):
        lo, hi = self.support
        if not lo < x < hi:
            raise OutOfRange("point must be interior to the support")
        s = self._scale
        if (x - lo < 1e-6 * s and self.a <= -0.5) or (hi - x < 1e-6 * s and self.b <= -0.5):
            raise NearSingularEndpoint("too close to a singular endpoint")
        h = 0.5 * min(x - lo, hi - x)

        # symmetric window: pv integral of f(t)/(x-t) over |t-x|<h equals
        # the smooth integral of (f(x-s)-f(x+s))/s on (0,h)
        inner = gl_integrate(
            lambda ss: (self.density(x - ss) - self.density(x + ss)) / ss, 0.0, h)

        # outer pieces carry at most one endpoint singularity each
        left = self._pv_piece(lo, x - h, x)
        right = self._pv_piece(x + h, hi, x)
        return float(inner + left + right)

    def _pv_piece(self, lo, hi, x):
        if hi <= lo:
            return 0.0
        ja = self.b if abs(hi - self.beta) < 1e-300 else 0.0
        jb = self.a if abs(lo - self.alpha) < 1e-300 else 0.0
        half = 0.5 * (hi - lo)
        prev = None
        n = 64
        val = 0.0
        while n <= 16384:
            t, w = jacgauss(n, ja, jb)
            u = lo + half * (1.0 + t)
            # density with the singular factors handled by the Jacobi weight
            logg = self.lognorm + np.zeros_like(u)
            if jb == 0.0:
                logg = logg + self.a * np.log(u - self.alpha)
            if ja == 0.0:
                logg = logg + self.b * np.log(self.beta - u)
            val = half ** (1.0 + ja + jb) * np.sum(w * np.exp(logg) / (x - u))
            if prev is not None and abs(val - prev) <= 1e-12 * (abs(val) + 1e-300):
                return val
            prev = val
            n *= 2
        return val

    def shifted(self, a):
        return JacobiLike(self.a, self.b, self.alpha + a, self.beta + a,
                          self.density_le_one)

    def to_json_dict(self):
        d = {"type": "jacobi", "a": self.a, "b": self.b,
             "alpha": self.alpha, "beta": self.beta}
        if self.density_le_one:
            d["density_le_one"] = True
        return d


class TabulatedDensity(Measure):
    """Piecewise-linear density on given nodes, renormalized at construction.

    Cauchy transforms integrate the interpolant panel by panel in closed form
    (complex logs), which stays accurate arbitrarily close to the support.
    """

    def __init__(self, nodes, values, density_le_one=None):
        x = np.asarray(nodes, dtype=float)
        f = np.asarray(values, dtype=float)
        if x.ndim != 1 or x.shape != f.shape or len(x) < 2:
            raise ValueError("need matching 1-d nodes and values")
        if np.any(np.diff(x) <= 0):
            raise ValueError("nodes must be strictly increasing")
        if np.any(f < 0):
            raise ValueError("density values must be nonnegative")
        mass = float(np.trapezoid(f, x))
        if mass <= 0:
            raise ValueError("zero mass")
        self.x = x
        self.f = f / mass
        self.support = (float(x[0]), float(x[-1]))
        # panel slope/intercept for the closed-form transforms
        self._B = np.diff(self.f) / np.diff(x)
        self._A = self.f[:-1] - self._B * x[:-1]
        self._cum = np.concatenate(
            [[0.0], np.cumsum(0.5 * (self.f[1:] + self.f[:-1]) * np.diff(x))])
        if density_le_one is None:
            density_le_one = bool(self.f.max() <= 1.0 + 1e-9)
        self.density_le_one = density_le_one

    def density(self, xq):
        return np.interp(xq, self.x, self.f, left=0.0, right=0.0)

    def cauchy(self, z, order=0):
        z = self._check_off_support(z)
        zc = z[..., None]
        x0, x1 = self.x[:-1], self.x[1:]
        A, B = self._A, self._B
        d0, d1 = zc - x0, zc - x1
        h = x1 - x0
        # log((z-x1)/(z-x0)) written as log1p(-h/(z-x0)) so panels far below
        # |z| do not cancel a pair of nearly equal logs
        w = h / d0
        dlog = _clog1p(-w)
        if order == 0:
            # exact panel value -B*h - (A+B*z)*log((z-x1)/(z-x0)); for panels
            # far below |z| the two pieces nearly cancel, so switch to the
            # series form f0*h/d0 + (A+B*z)*(w^2/2 + w^3/3 + ...) there
            exact = -B * h - (A + B * zc) * dlog
            ser = w * w * (1 / 2 + w * (1 / 3 + w * (1 / 4 + w * (
                1 / 5 + w * (1 / 6 + w * (1 / 7 + w / 8))))))
            series = self.f[:-1] * w + (A + B * zc) * ser
            val = np.sum(np.where(np.abs(w) < 1e-3, series, exact), axis=-1)
        elif order == 1:
            val = -np.sum((A + B * zc) * h / (d1 * d0) + B * dlog, axis=-1)
        elif order == 2:
            # (z-x0)^2 - (z-x1)^2 = h*(d0+d1), factored to avoid cancellation
            val = 2.0 * np.sum((A + B * zc) * h * (d0 + d1) / (2 * (d1 * d0) ** 2)
                               - B * h / (d1 * d0), axis=-1)
        else:
            val = -6.0 * np.sum(
                (A + B * zc) * h * (d0 * d0 + d0 * d1 + d1 * d1) / (3 * (d1 * d0) ** 3)
                - B * h * (d0 + d1) / (2 * (d1 * d0) ** 2), axis=-1)
        return val if val.ndim else complex(val)

    def mean(self):
        x0, x1 = self.x[:-1], self.x[1:]
        # exact first moment of the piecewise-linear interpolant
        return float(np.sum(self._A * (x1 ** 2 - x0 ** 2) / 2
                            + self._B * (x1 ** 3 - x0 ** 3) / 3))

    def cdf(self, xq):
        if xq <= self.x[0]:
            return 0.0
        if xq >= self.x[-1]:
            return 1.0
        i = int(np.searchsorted(self.x, xq) - 1)
        d = xq - self.x[i]
        return float(self._cum[i] + d * (self.f[i] + 0.5 * self._B[i] * d))

    def quantile(self, q):
        q = min(max(q, 0.0), 1.0)
        i = int(np.searchsorted(self._cum, q) - 1)
        i = min(max(i, 0), len(self.x) - 2)
        rem = q - self._cum[i]
        fi, b = self.f[i], self._B[i]
        # solve fi*d + b*d^2/2 = rem on the panel
        if abs(b) < 1e-14 * (abs(fi) + 1e-300):
            d = rem / fi if fi > 0 else 0.0
        else:
            disc = max(fi * fi + 2 * b * rem, 0.0)
            d = (np.sqrt(disc) - fi) / b
        d = min(max(d, 0.0), self.x[i + 1] - self.x[i])
        return float(self.x[i] + d)

    def principal_value(self, x):
        lo, hi = self.support
        if not lo < x < hi:
            raise OutOfRange("point must be interior to the support")
        x0, x1 = self.x[:-1], self.x[1:]
        A, B = self._A, self._B
        # F(t) = -B t - (A + B x) log|x - t|; the log terms at t = x cancel
        # between the two panels sharing the point because the density is
        # continuous, so just drop them
        with np.errstate(divide="ignore"):
            l1 = np.where(np.abs(x - x1) < 1e-300, 0.0, np.log(np.abs(x - x1)))
            l0 = np.where(np.abs(x - x0) < 1e-300, 0.0, np.log(np.abs(x - x0)))
        val = np.sum(-B * (x1 - x0) - (A + B * x) * (l1 - l0))
        return float(val)

    def shifted(self, a):
        return TabulatedDensity(self.x + a, self.f, self.density_le_one)

    def to_json_dict(self):
        d = {"type": "table", "xs": [float(v) for v in self.x],
             "fs": [float(v) for v in self.f]}
        if self.density_le_one:
            d["density_le_one"] = True
        return d


class Mixture(Measure):
    """Atoms plus an absolutely continuous part.

    Not part of the JSON schema proper (serialized as "mixture"); it shows up
    as the output of the Markov-Krein forward map when an input has intervals
    of full density.
    """

    def __init__(self, atoms, table, atom_mass):
        # atoms: list of (x, w) with sum(w) = atom_mass; table: Measure with
        # mass 1 carrying the remaining (1 - atom_mass)
        self.atoms = sorted(atoms)
        self.table = table
        self.atom_mass = float(atom_mass)
        locs = [a for a, _ in self.atoms]
        lo = min([table.support[0]] + locs)
        hi = max([table.support[1]] + locs)
        self.support = (lo, hi)
        self._aloc = np.array(locs, dtype=float)
        self._aw = np.array([w for _, w in self.atoms], dtype=float)

    def cauchy(self, z, order=0):
        z = np.asarray(z, dtype=complex)
        k = order
        part = ((-1) ** k * _FACT[k]) * np.sum(
            self._aw / (z[..., None] - self._aloc) ** (k + 1), axis=-1)
        val = part + (1.0 - self.atom_mass) * self.table.cauchy(z, order)
        return val if np.ndim(val) else complex(val)

    def density(self, x):
        return (1.0 - self.atom_mass) * self.table.density(x)

    def mean(self):
        return float(self._aw @ self._aloc) + (1.0 - self.atom_mass) * self.table.mean()

    def cdf(self, x):
        return float(self._aw[self._aloc <= x].sum()) \
            + (1.0 - self.atom_mass) * self.table.cdf(x)

    def quantile(self, q):
        # bisection on the mixed cdf; plenty for plotting and spectra
        lo, hi = self.support
        lo -= 1e-12
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.cdf(mid) >= q:
                hi = mid
            else:
                lo = mid
        return hi

    def shifted(self, a):
        return Mixture([(x + a, w) for x, w in self.atoms],
                       self.table.shifted(a), self.atom_mass)

    def to_json_dict(self):
        return {"type": "mixture",
                "atoms": [{"x": float(x), "w": float(w)} for x, w in self.atoms],
                "table": self.table.to_json_dict(),
                "atom_mass": self.atom_mass}


def rademacher():
    return Atomic([(-1.0, 0.5), (1.0, 0.5)])


def semicircle(radius=2.0, center=0.0):
    # semicircle law is JacobiLike with both exponents 1/2
    return JacobiLike(0.5, 0.5, center - radius, center + radius)


# ---------------------------------------------------------------------------
# module-level operations


def cauchy_transform(m, z):
    return m.cauchy(z, 0)


def cauchy_derivative(m, z, order):
    if order not in (1, 2, 3):
        raise ValueError("order must be 1, 2 or 3")
    return m.cauchy(z, order)


def principal_value_G(m, x):
    return m.principal_value(x)


def inverse_cauchy(m, u):
    """Right inverse of the Cauchy transform.

    Real u inverts on the real ray outside the support (bracketed Brent plus a
    Newton polish); complex u in the far-from-support regime uses Newton from
    the asymptotic guess z ~ mean + 1/u.
    """
    lo, hi = m.support
    s = m._scale
    if abs(np.imag(u)) > 0:
        z = m.mean() + 1.0 / complex(u)
        for _ in range(100):
            g = m.cauchy(z, 0)
            if abs(g - u) <= 1e-12 * abs(u):
                return z
            z = z - (g - u) / m.cauchy(z, 1)
        raise NoConvergence("Newton failed for complex u")
    u = float(np.real(u))
    if u == 0.0:
        raise OutOfRange("u = 0 is not attained")
    far = max(1e6 * s, 2.0 / abs(u))  # G ~ 1/z at infinity
    if u > 0:
        zlo, zhi = hi + 2e-12 * s, hi + far
        if m.cauchy(zlo, 0).real < u:
            raise OutOfRange("u exceeds G at the top edge")
    else:
        zlo, zhi = lo - far, lo - 2e-12 * s
        if m.cauchy(zhi, 0).real > u:
            raise OutOfRange("u below G at the bottom edge")

    def f(z):
        return m.cauchy(complex(z), 0).real - u

    z = brentq(f, zlo, zhi, xtol=1e-15, rtol=8.9e-16)

    def tol(z):
        # steep G near an endpoint limits the attainable residual: one ulp of
        # movement in z already changes G by |G'| * eps * |z|
        gp = abs(m.cauchy(complex(z), 1).real)
        return max(1e-13 * abs(u), 8.0 * gp * np.finfo(float).eps * max(abs(z), s))

    for _ in range(3):
        if abs(f(z)) <= tol(z):
            break
        step = f(z) / m.cauchy(complex(z), 1).real
        znew = z - step
        if (u > 0 and znew <= hi) or (u < 0 and znew >= lo):
            break
        z = znew
    if abs(f(z)) > max(1e-12 * abs(u), 10.0 * tol(z)):
        raise NoConvergence("inverse Cauchy residual too large")
    return float(z)


def variance_functional(m, z):
    g = m.cauchy(complex(z), 0)
    gp = m.cauchy(complex(z), 1)
    return float((-g * g / gp).real)


def quantile_spectrum(m, N):
    """Decreasing mid-quantiles (j - 1/2)/N of the measure."""
    qs = (np.arange(N, 0, -1) - 0.5) / N
    return np.array([m.quantile(q) for q in qs])


def signature_spectrum(m, N):
    """Weakly decreasing integer signature whose particles track the quantiles.

    Rounding is half-down (so exact .5 quantile grids, e.g. uniform measures of
    density one, land on the canonical signature); this convention is ours, the
    underlying theory only needs (lambda_j + N - j)/N -> quantiles.
    """
    if not m.density_le_one:
        raise NotDensityBounded("signature spectra need density <= 1")
    ell = quantile_spectrum(m, N)
    j = np.arange(1, N + 1)
    lam = np.ceil(N * ell - 0.5).astype(int) - N + j
    # clip to restore weak decrease after rounding jitter
    for i in range(1, N):
        lam[i] = min(lam[i], lam[i - 1])
    return lam


def measure_to_json(m):
    return json.dumps(m.to_json_dict())


def measure_from_json(text):
    d = json.loads(text) if isinstance(text, str) else text
    kind = d["type"]
    flag = d.get("density_le_one", None)
    if kind == "atomic":
        return Atomic([(a["x"], a["w"]) for a in d["atoms"]],
                      density_le_one=bool(flag))
    if kind == "uniform":
        return Uniform(d["lo"], d["hi"], density_le_one=flag)
    if kind == "jacobi":
        return JacobiLike(d["a"], d["b"], d["alpha"], d["beta"], density_le_one=flag)
    if kind == "table":
        return TabulatedDensity(d["xs"], d["fs"], density_le_one=flag)
    if kind == "empirical":
        return Empirical(d["points"])
    if kind == "mixture":
        return Mixture([(a["x"], a["w"]) for a in d["atoms"]],
                       measure_from_json(d["table"]), d["atom_mass"])
    raise ValueError("unknown measure type %r" % kind)

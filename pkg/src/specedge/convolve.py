"""Free additive convolution via subordination, Stieltjes inversion, and the
Markov-Krein bijection (hence quantized convolution).

The fixed-point map omega -> z + H2(z + H1(omega)) with H(w) = 1/G(w) - w is a
self-map of the upper half plane, so plain iteration always converges; we run
a short plain warmup and then switch to a vectorized Newton polish, falling
back to averaged steps whenever Newton tries to leave the half plane.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .measures import (Atomic, Measure, Mixture, NoConvergence,
                       NotDensityBounded, TabulatedDensity, Uniform)


class BothAtoms(Exception):
    pass


class BranchViolation(Exception):
    pass


class NotOutsideSupport(Exception):
    pass


@dataclass
class FixedPointConfig:
    tol: float = 1e-13
    max_iter: int = 100000
    warmup: int = 200


@dataclass
class SubordinationSample:
    z: complex
    omegas: tuple
    G_value: complex
    iterations: int
    residual: float


@dataclass
class ConvolutionResult:
    measure: Measure
    support: tuple
    mass_defect: float
    grid: np.ndarray = field(repr=False)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["x", "density"])
        dens = self.measure.density(self.grid) if hasattr(self.measure, "density") \
            else np.zeros_like(self.grid)
        for x, f in zip(self.grid, dens):
            w.writerow(["%.12g" % x, "%.12g" % f])
        return buf.getvalue()

    def to_json(self):
        return json.dumps({"support": [self.support[0], self.support[1]],
                           "mass_defect": self.mass_defect})


def _single_atom(m):
    if isinstance(m, Atomic) and len(m.locations) == 1:
        return float(m.locations[0])
    return None


def _fp_grid(m1, m2, z, tol=1e-13, max_iter=100000, warmup=200):
    """Vectorized subordination fixed point over an array of z in C^+.

    Returns (omega1, omega2, G, iterations, residual array).
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    omega = z.copy()
    scale = np.maximum(1.0, np.abs(z))
    imz = z.imag

    def sweep(om):
        g1 = m1.cauchy(om, 0)
        w2 = z + 1.0 / g1 - om
        g2 = m2.cauchy(w2, 0)
        return z + 1.0 / g2 - w2, w2, g1, g2

    tom, w2, g1, g2 = sweep(omega)
    res = np.abs(tom - omega)
    iters = 1
    # plain warmup
    while iters < warmup:
        if np.all(res <= tol * scale):
            break
        omega = np.where(res <= tol * scale, omega, tom)
        tom, w2, g1, g2 = sweep(omega)
        res = np.abs(tom - omega)
        iters += 1

    # Newton on F(omega) = omega - T(omega), averaged fallback on bad steps
    while iters < max_iter and np.any(res > tol * scale):
        g1p = m1.cauchy(omega, 1)
        g2p = m2.cauchy(w2, 1)
        h1p = -g1p / g1 ** 2 - 1.0
        h2p = -g2p / g2 ** 2 - 1.0
        fprime = 1.0 - h2p * h1p
        small = np.abs(fprime) < 1e-14
        step = np.where(small, 0.0, (omega - tom) / np.where(small, 1.0, fprime))
        cand = omega - step
        bad = (cand.imag < imz) | small
        cand = np.where(bad, 0.5 * (omega + tom), cand)
        omega = np.where(res <= tol * scale, omega, cand)
        tom, w2, g1, g2 = sweep(omega)
        res = np.abs(tom - omega)
        iters += 1
    if np.any(res > tol * scale):
        raise NoConvergence("subordination fixed point stalled")
    return omega, w2, g1, iters, res


def subordination_at(m1, m2, z, cfg=None):
    cfg = cfg or FixedPointConfig()
    z = complex(z)
    if z.imag <= 0:
        raise ValueError("need Im z > 0")
    a1, a2 = _single_atom(m1), _single_atom(m2)
    if a1 is not None and a2 is not None:
        raise BothAtoms("convolution of two atoms is a shifted atom")
    if a1 is not None or a2 is not None:
        a, other = (a1, m2) if a1 is not None else (a2, m1)
        om_other = z - a
        g = other.cauchy(om_other, 0)
        om_atom = a + 1.0 / g
        omegas = (om_atom, om_other) if a1 is not None else (om_other, om_atom)
        return SubordinationSample(z, omegas, g, 0, 0.0)
    om1, om2, g, it, res = _fp_grid(m1, m2, z, cfg.tol, cfg.max_iter, cfg.warmup)
    return SubordinationSample(z, (complex(om1[0]), complex(om2[0])),
                               complex(g[0]), it, float(res[0]))


def convolution_cauchy(m1, m2, z):
    """G of m1 boxplus m2 at complex z (vectorized), via subordination."""
    a1, a2 = _single_atom(m1), _single_atom(m2)
    if a1 is not None:
        return m2.cauchy(np.asarray(z, dtype=complex) - a1, 0)
    if a2 is not None:
        return m1.cauchy(np.asarray(z, dtype=complex) - a2, 0)
    return _fp_grid(m1, m2, z)[2]


_EPS_SCHEDULE = np.array([1e-3, 5e-4, 2.5e-4])


def _richardson3(v1, v2, v3):
    # assumes v(eps) = v0 + a eps + b eps^2 over the eps, eps/2, eps/4 schedule
    return (4.0 * (2.0 * v3 - v2) - (2.0 * v2 - v1)) / 3.0


def stieltjes_density(gfun, xs, span):
    """Density at real nodes via -Im G(x + i eps)/pi, Richardson over eps."""
    vals = [-np.imag(gfun(xs + 1j * e * span)) / np.pi for e in _EPS_SCHEDULE]
    return _richardson3(*vals)


def _tabulate(measure, lo, hi, n):
    xs = np.linspace(lo, hi, n)
    if hasattr(measure, "density"):
        fs = measure.density(xs)
    else:
        fs = stieltjes_density(lambda z: measure.cauchy(z, 0), xs, hi - lo)
    return xs, np.maximum(fs, 0.0)


def _package(xs, dens, density_le_one=None):
    dens = np.maximum(dens, 0.0)
    keep = np.nonzero(dens >= 1e-8)[0]
    if len(keep) < 2:
        raise NoConvergence("no density mass found on the grid")
    i0, i1 = max(keep[0] - 1, 0), min(keep[-1] + 1, len(xs) - 1)
    xs, dens = xs[i0:i1 + 1], dens[i0:i1 + 1]
    mass = float(np.trapezoid(dens, xs))
    meas = TabulatedDensity(xs, dens, density_le_one=density_le_one)
    return ConvolutionResult(meas, (float(xs[0]), float(xs[-1])), 1.0 - mass, xs)


def free_convolve(m1, m2, grid_n=2048):
    a1, a2 = _single_atom(m1), _single_atom(m2)
    if a1 is not None and a2 is not None:
        shifted = Atomic([(a1 + a2, 1.0)])
        return ConvolutionResult(shifted, shifted.support, 0.0,
                                 np.array(shifted.support))
    if a1 is not None or a2 is not None:
        a, other = (a1, m2) if a1 is not None else (a2, m1)
        shifted = other.shifted(a)
        if isinstance(shifted, Atomic):
            return ConvolutionResult(shifted, shifted.support, 0.0,
                                     np.array([shifted.support[0],
                                               shifted.support[1]]))
        xs, fs = _tabulate(shifted, shifted.support[0], shifted.support[1], grid_n)
        return _package(xs, fs)
    lo = m1.support[0] + m2.support[0]
    hi = m1.support[1] + m2.support[1]
    xs = np.linspace(lo, hi, grid_n)
    dens = stieltjes_density(lambda z: convolution_cauchy(m1, m2, z), xs, hi - lo)
    return _package(xs, dens)


def free_convolve_n(measures, grid_n=2048):
    if len(measures) == 0:
        raise ValueError("need at least one measure")
    if len(measures) == 1:
        m = measures[0]
        if isinstance(m, Atomic):
            return ConvolutionResult(m, m.support, 0.0, np.array(m.support))
        xs, fs = _tabulate(m, m.support[0], m.support[1], grid_n)
        return _package(xs, fs)
    acc = measures[0]
    result = None
    for m in measures[1:]:
        result = free_convolve(acc, m, grid_n)
        acc = result.measure
    return result


def omega_real_extension(m1, m2, x):
    lo = m1.support[0] + m2.support[0]
    hi = m1.support[1] + m2.support[1]
    span = hi - lo
    if x <= lo:  # definitely not right of the support
        raise NotOutsideSupport("x is not right of the support")
    # the component transforms are exact arbitrarily close to the real axis,
    # so evaluate just above it and cancel the O(delta) imaginary part with a
    # two-point extrapolation in the offset
    d = 1e-9 * span
    s1 = subordination_at(m1, m2, complex(x, d))
    s2 = subordination_at(m1, m2, complex(x, 0.5 * d))
    out = []
    for i in range(2):
        w = 2.0 * s2.omegas[i] - s1.omegas[i]
        if abs(w.imag) > 1e-8 * max(1.0, abs(w.real)):
            raise NotOutsideSupport("imaginary residue too large; x inside support?")
        out.append(w.real)
    return tuple(out)


# ---------------------------------------------------------------------------
# Markov-Krein bijection


class _TransformMeasure(Measure):
    """Measure defined through an exact transform of a base measure's G.

    cauchy() composes the defining relation analytically; density, cdf and
    quantiles come from Stieltjes inversion (cached table on first use).
    """

    def __init__(self, base, support):
        self.base = base
        self.support = (float(support[0]), float(support[1]))
        self._tab = None

    def _transform(self, g, order):
        raise NotImplementedError

    def cauchy(self, z, order=0):
        z = self._check_off_support(z)
        gs = [self.base.cauchy(z, k) for k in range(order + 1)]
        val = self._transform(gs, order)
        return val if np.ndim(val) else complex(val)

    def density(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        span = self._scale
        out = stieltjes_density(lambda z: self.cauchy(z, 0), x, span)
        return np.maximum(out, 0.0)

    def _table(self):
        if self._tab is None:
            lo, hi = self.support
            # cluster nodes toward the endpoints: inversion output can blow up
            # like an inverse square root there
            theta = np.linspace(np.pi, 0.0, 2049)
            xs = 0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(theta)
            pad = 1e-9 * (hi - lo)
            xs[0], xs[-1] = lo + pad, hi - pad
            self._tab = TabulatedDensity(xs, self.density(xs))
        return self._tab

    def mean(self):
        return self._table().mean()

    def cdf(self, x):
        return self._table().cdf(x)

    def quantile(self, q):
        return self._table().quantile(q)

    def to_json_dict(self):
        t = self._table()
        d = t.to_json_dict()
        if self.density_le_one:
            d["density_le_one"] = True
        return d


class QImage(_TransformMeasure):
    """Absolutely continuous part of Qm (normalized), G_{Qm} = 1 - exp(-G_m)."""

    def __init__(self, base, atoms, ac_mass, support):
        _TransformMeasure.__init__(self, base, support)
        self._atoms = [(float(a), float(w)) for a, w in atoms]
        self._ac_mass = float(ac_mass)

    def cauchy(self, z, order=0):
        z = self._check_off_support(z)
        gs = [self.base.cauchy(z, k) for k in range(order + 1)]
        e = np.exp(-gs[0])
        if order == 0:
            val = 1.0 - e
        elif order == 1:
            val = e * gs[1]
        elif order == 2:
            val = e * (gs[2] - gs[1] ** 2)
        else:
            val = e * (gs[3] - 3.0 * gs[1] * gs[2] + gs[1] ** 3)
        k = order
        fact = [1.0, 1.0, 2.0, 6.0][k]
        for a, w in self._atoms:
            val = val - (-1) ** k * fact * w / (z - a) ** (k + 1)
        val = val / self._ac_mass
        return val if np.ndim(val) else complex(val)

    def shifted(self, s):
        return QImage(self.base.shifted(s), [(a + s, w) for a, w in self._atoms],
                      self._ac_mass, (self.support[0] + s, self.support[1] + s))


class QPreimage(_TransformMeasure):
    """Q^{-1} m with G = -log(1 - G_m), principal branch."""

    density_le_one = True

    def _transform(self, gs, order):
        w = 1.0 - gs[0]
        wr = np.atleast_1d(w)
        if np.any((wr.real <= 0) & (np.abs(wr.imag) < 1e-12)):
            raise BranchViolation("1 - G reached the negative real axis")
        if order == 0:
            return -np.log(w)
        if order == 1:
            return gs[1] / w
        if order == 2:
            return gs[2] / w + gs[1] ** 2 / w ** 2
        return gs[3] / w + 3.0 * gs[1] * gs[2] / w ** 2 + 2.0 * gs[1] ** 3 / w ** 3

    def shifted(self, s):
        return QPreimage(self.base.shifted(s),
                         (self.support[0] + s, self.support[1] + s))


def _refine_support(meas, lo, hi, thresh=1e-7):
    xs = np.linspace(lo, hi, 1025)[1:-1]
    f = meas.density(xs)
    on = np.nonzero(f > thresh)[0]
    if len(on) == 0:
        return lo, hi
    a = xs[on[0] - 1] if on[0] > 0 else lo
    b = xs[on[-1] + 1] if on[-1] < len(xs) - 1 else hi
    return float(a), float(b)


def markov_krein_forward(m):
    """The bijection Q: exp(-G_m) = 1 - G_{Qm}; atoms detected and split off."""
    if not m.density_le_one:
        raise NotDensityBounded("Q needs density <= 1")
    lo, hi = m.support
    span = m._scale
    probe = QImage(m, [], 1.0, (lo, hi))

    # atom scan: eps * |Im G| stays of order of the atom mass near a pole
    eps = 1e-4 * span
    xs = np.linspace(lo, hi, 4097)
    flag = eps * np.abs(np.imag(probe.cauchy(xs + 1j * eps, 0))) > 0.01
    atoms = []
    i = 0
    while i < len(xs):
        if not flag[i]:
            i += 1
            continue
        j = i
        while j + 1 < len(xs) and flag[j + 1]:
            j += 1
        xa, xb = xs[max(i - 1, 0)], xs[min(j + 1, len(xs) - 1)]
        r = minimize_scalar(
            lambda t: -abs(np.imag(probe.cauchy(complex(t, 1e-6 * span), 0))),
            bounds=(xa, xb), method="bounded",
            options={"xatol": 1e-12 * span})
        a = float(r.x)
        # a pole keeps eps*|Im G| of order of its mass as eps shrinks; an
        # integrable density blowup (inverse square root, say) does not
        e2 = 1e-7 * span
        if e2 * abs(np.imag(probe.cauchy(complex(a, e2), 0))) > 0.01:
            # circle average picks out the residue; compare two radii to be
            # sure we are not swallowing nearby continuous mass
            th = (np.arange(256) + 0.5) * (2.0 * np.pi / 256)  # off the real axis
            ws = []
            for rad in (1e-3 * span, 2.5e-4 * span):
                circ = a + rad * np.exp(1j * th)
                ws.append(float(np.real(
                    np.mean(probe.cauchy(circ, 0) * rad * np.exp(1j * th)))))
            if ws[0] > 0.005 and abs(ws[0] - ws[1]) <= 0.2 * abs(ws[0]):
                atoms.append((a, ws[1]))
        i = j + 1

    wsum = sum(w for _, w in atoms)
    if wsum > 1.0 - 1e-6:
        out = Atomic([(a, w / wsum) for a, w in atoms])
        out.raw_atom_weights = [w for _, w in atoms]
        return out
    ac = QImage(m, atoms, 1.0 - wsum, (lo, hi))
    ac.support = _refine_support(ac, lo, hi)
    ac._tab = None
    if not atoms:
        return ac
    mix = Mixture(atoms, ac, wsum)
    mix.raw_atom_weights = [w for _, w in atoms]
    return mix


def markov_krein_inverse(m):
    """Inverse bijection: G_{Q^{-1} m} = -log(1 - G_m)."""
    a = _single_atom(m)
    if a is not None:
        # -log(1 - 1/(z - a)) is exactly the transform of Uniform(a, a+1)
        return Uniform(a, a + 1.0, density_le_one=True)
    lo, hi = m.support
    out = QPreimage(m, (lo, hi + 1.0))
    out.support = _refine_support(out, lo, hi + 1.0)
    out._tab = None
    xs = np.linspace(out.support[0], out.support[1], 513)[1:-1]
    f = out.density(xs)
    if np.any(f > 1.0 + 1e-6):
        raise BranchViolation("inverse image density exceeds 1")
    return out


def quantized_convolve(m1, m2, grid_n=2048):
    """Quantized free convolution: Q^{-1}(Q m1 boxplus Q m2)."""
    q1 = markov_krein_forward(m1)
    q2 = markov_krein_forward(m2)
    a1, a2 = _single_atom(q1), _single_atom(q2)
    if a1 is not None and a2 is not None:
        return markov_krein_inverse(Atomic([(a1 + a2, 1.0)]))
    if a1 is not None or a2 is not None:
        a, other = (a1, q2) if a1 is not None else (a2, q1)
        return markov_krein_inverse(other.shifted(a))
    mid = free_convolve(q1, q2, grid_n)
    return markov_krein_inverse(mid.measure)

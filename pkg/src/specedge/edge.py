"""Edge machinery: the master function A(u), its minimal positive critical
point, edge constants, compression thresholds, and phase-function diagnostics.

For n summand groups with multiplicities n_i,

    A(u) = sum_i n_i G_i^[-1](u) + (1 - n)/u            (additive)
    A(u) = sum_i n_i G_i^[-1](u) + (1 - n)/(1 - e^-u)   (quantized)

and the rescaled largest particles follow the Airy point process with centering
A(frak_z) and scale (A''(frak_z)/2)^(1/3) once A' has a positive real zero.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from ._quad import gl_integrate
from .convolve import NotOutsideSupport
from .measures import (Atomic, JacobiLike, Measure, Mixture, NotDensityBounded,
                       OutOfRange, TabulatedDensity, Uniform, inverse_cauchy)


class ZeroU(Exception):
    pass


class NoCriticalPoint(Exception):
    pass


@dataclass
class EdgeModel:
    measures: list
    multiplicities: list
    kind: str = "additive"
    N: int = 1

    def __post_init__(self):
        if self.kind not in ("additive", "quantized"):
            raise ValueError("kind must be additive or quantized")
        if len(self.measures) != len(self.multiplicities):
            raise ValueError("one multiplicity per measure")
        if any(k < 1 for k in self.multiplicities):
            raise ValueError("multiplicities are positive integers")
        if self.kind == "quantized" and not all(m.density_le_one
                                                for m in self.measures):
            raise NotDensityBounded("quantized models need density <= 1")

    @property
    def n(self):
        return int(sum(self.multiplicities))


@dataclass
class EdgeReport:
    z_crit: float
    A_at_crit: float
    A2_at_crit: float
    V_N: float
    found: bool
    bracket: tuple
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps({"found": self.found, "z_crit": self.z_crit,
                           "E": self.A_at_crit, "A2": self.A2_at_crit,
                           "V": self.V_N})


@dataclass
class LevelSetGrid:
    region: tuple
    resolution: tuple
    values: np.ndarray
    classification: np.ndarray

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["x", "y", "Re_S", "class"])
        x0, x1, y0, y1 = self.region
        nx, ny = self.resolution
        xs = np.linspace(x0, x1, nx)
        ys = np.linspace(y0, y1, ny)
        for j, y in enumerate(ys):
            for i, x in enumerate(xs):
                w.writerow(["%.9g" % x, "%.9g" % y,
                            "%.9g" % self.values[j, i],
                            self.classification[j, i]])
        return buf.getvalue()


def _top_edge_G(m):
    """Right limit G(E_+), or the capped probe value when the limit is infinite.

    Returns (value, finite_flag).
    """
    if isinstance(m, JacobiLike):
        g = m.cauchy_at_top_edge(0)
        if np.isfinite(g):
            return float(g), True
        return float(m.cauchy(m.support[1] + 1e-9 * m._scale, 0).real), False
    hi, s = m.support[1], m._scale
    vals = [m.cauchy(hi + d * s, 0).real for d in (1e-6, 1e-7, 1e-8)]
    if vals[2] > 3.0 * vals[1] and vals[1] > 3.0 * vals[0]:
        # pole-like or log-like growth: treat the limit as infinite
        return float(m.cauchy(hi + 1e-9 * s, 0).real), False
    # finite limit: extrapolate geometrically and confirm with a closer probe
    g = m.cauchy(hi + 1e-9 * s, 0).real
    return float(g), True


def _inv_pieces(model, u):
    """G_i^[-1](u) and G_i'(there) for every component, with multiplicity."""
    out = []
    for m, k in zip(model.measures, model.multiplicities):
        z = inverse_cauchy(m, u)
        out.append((float(np.real(z)), m, k))
    return out


def A_eval(model, u):
    n = model.n
    if model.kind == "additive":
        tail = (1.0 - n) / u
    else:
        tail = (1.0 - n) / (1.0 - np.exp(-u))
    total = tail
    for m, k in zip(model.measures, model.multiplicities):
        total = total + k * inverse_cauchy(m, u)
    return total


def A_prime(model, u):
    """Analytic derivative: sum n_i / G_i'(G_i^[-1](u)) plus the tail term."""
    n = model.n
    if model.kind == "additive":
        tail = -(1.0 - n) / u ** 2
    else:
        e = np.exp(-u)
        tail = -(1.0 - n) * e / (1.0 - e) ** 2
    total = tail
    for m, k in zip(model.measures, model.multiplicities):
        z = inverse_cauchy(m, u)
        total = total + k / m.cauchy(complex(z), 1).real
    return float(np.real(total))


def A_second(model, u):
    n = model.n
    if model.kind == "additive":
        tail = 2.0 * (1.0 - n) / u ** 3
    else:
        e = np.exp(-u)
        d = 1.0 - e
        tail = (1.0 - n) * (2.0 * e ** 2 / d ** 3 + e / d ** 2)
    total = tail
    for m, k in zip(model.measures, model.multiplicities):
        z = complex(inverse_cauchy(m, u))
        g1 = m.cauchy(z, 1).real
        g2 = m.cauchy(z, 2).real
        total = total + k * (-g2 / g1 ** 3)
    return float(np.real(total))


def find_critical_point(model):
    """Scan A' on a log grid for its smallest positive zero.

    The scan upper end is min_i G_i(E_+); when that limit is finite the
    critical point can sit exactly at the endpoint (single semicircle being
    the canonical case), which the interior sign-change scan cannot see, so a
    separate endpoint branch handles |A'| -> 0 at the top of the range.
    """
    edges = [_top_edge_G(m) for m in model.measures]
    gmax = min(v for v, _ in edges)
    all_finite = all(f for _, f in edges)
    # anchor the low end to G at unit distance from the edge: for atomic or
    # uniform components the capped gmax is huge and 1e-6*gmax would overshoot
    # the whole interesting range
    glo = min(m.cauchy(m.support[1] + m._scale, 0).real for m in model.measures)
    u_lo = 1e-6 * min(glo, gmax)
    # cap the top of the scan at values whose preimage is still representable
    # (a square-root edge squashes z - E_+ like (gmax - u)^2)
    u_repr = min(m.cauchy(m.support[1] + 1e-11 * m._scale, 0).real
                 for m in model.measures)
    u_hi = min(gmax * (1.0 - 1e-9), u_repr * (1.0 - 1e-12))
    us = np.geomspace(u_lo, u_hi, 400)
    vals = np.array([A_prime(model, u) for u in us])
    diagnostics = {"u_lo": u_lo, "u_hi": u_hi, "A1_lo": vals[0], "A1_hi": vals[-1]}

    pos = np.nonzero(vals > 0)[0]
    if len(pos) > 0 and pos[0] > 0:
        i = pos[0]
        bracket = (us[i - 1], us[i])
        z = brentq(lambda t: A_prime(model, t), *bracket, xtol=1e-16, rtol=8.9e-16)
        a1 = A_prime(model, z)
        a2 = A_second(model, z)
        h = 1e-5 * z
        a2_cd = (A_prime(model, z + h) - A_prime(model, z - h)) / (2 * h)
        diagnostics["A2_central_diff"] = a2_cd
        if abs(a1) <= 1e-10 and a2 > 0:
            e = float(A_eval(model, z))
            return EdgeReport(float(z), e, a2, (a2 / 2.0) ** (1.0 / 3.0),
                              True, bracket, diagnostics)
        # a sign change born of float noise in a flat tail of A' is not a
        # critical point; keep looking at the endpoint branch below

    # endpoint branch: A' < 0 throughout but vanishing at the finite top edge
    if all_finite:
        z = gmax
        # E = A(z): the binding components hit their edge exactly
        n = model.n
        e = (1.0 - n) / z if model.kind == "additive" \
            else (1.0 - n) / (1.0 - np.exp(-z))
        for (gm, _), m, k in zip(edges, model.measures, model.multiplicities):
            if gm <= gmax * (1.0 + 1e-12):
                e += k * m.support[1]
            else:
                e += k * inverse_cauchy(m, z * (1.0 - 1e-13))
        # A' is analytic at the endpoint (square-root edge), so one-sided
        # difference quotients of the analytic A' extrapolate cleanly
        ss = z * np.array([0.04, 0.02, 0.01, 0.005])
        ds = np.array([-A_prime(model, z - s) / s for s in ss])
        # a genuine endpoint zero of A' makes these quotients nearly constant;
        # anything else (A' with a finite limit, say) makes them run away
        consistent = ds.min() > 0 and ds.max() <= 1.5 * ds.min()
        ds_n = ds.copy()
        for j in range(1, len(ss)):  # Neville to s = 0
            ds_n = ds_n[1:] + (ds_n[1:] - ds_n[:-1]) * ss[j:] / (ss[:-j] - ss[j:])
        a2 = float(ds_n[0])
        diagnostics["endpoint"] = True
        diagnostics["quotients"] = ds.tolist()
        if consistent and a2 > 0:
            return EdgeReport(float(z), float(e), a2, (a2 / 2.0) ** (1.0 / 3.0),
                              True, (us[-1], gmax), diagnostics)

    return EdgeReport(float("nan"), float("nan"), float("nan"), float("nan"),
                      False, (u_lo, u_hi), diagnostics)


def edge_constants(report, N):
    if not report.found:
        raise NoCriticalPoint("model has no positive critical point")
    return report.A_at_crit, report.V_N


def _x_threshold(m):
    lo, hi = m.support
    return 4.0 * (hi - lo) + hi


def tau(m):
    x = _x_threshold(m)
    g = m.cauchy(complex(x), 0).real
    gp = m.cauchy(complex(x), 1).real
    denom = 1.0 + g * g / gp
    if denom <= 1e-15:
        return float("inf")
    return 1.0 / denom


def _optimized_c():
    # root of log c - (c+1)/c = 0
    c = 3.5
    for _ in range(60):
        f = np.log(c) - 1.0 - 1.0 / c
        c = c - f / (1.0 / c + 1.0 / c ** 2)
    return c


_C_OPT = None


def tau_optimized(m):
    global _C_OPT
    if _C_OPT is None:
        _C_OPT = _optimized_c()
    lo, hi = m.support
    x = _C_OPT * (hi - lo) + hi
    g = m.cauchy(complex(x), 0).real
    gp = m.cauchy(complex(x), 1).real
    denom = 1.0 + g * g / gp
    if denom <= 1e-15:
        return float("inf")
    return 1.0 / denom


def tau_q(m):
    if not m.density_le_one:
        raise NotDensityBounded("tau_q needs density <= 1")
    x = _x_threshold(m)
    g = m.cauchy(complex(x), 0).real
    gp = m.cauchy(complex(x), 1).real
    eg = np.exp(g)
    denom = 1.0 + (eg - 1.0) ** 2 / (eg * gp)
    if abs(denom) <= 1e-12:
        return float("inf")
    return 1.0 / denom


def sqrt_edge_indicator(m):
    """(1 + G(E_+)^2 / G'(E_+))^{-1}; equals p^2 for a (1-x)^p right edge."""
    if isinstance(m, JacobiLike):
        g = m.cauchy_at_top_edge(0)
        gp = m.cauchy_at_top_edge(1)
        if not np.isfinite(g):
            return 1.0
        if not np.isfinite(gp):
            return 1.0
        return float(1.0 / (1.0 + g * g / gp))
    hi, s = m.support[1], m._scale
    prev_gp = None
    for d in np.geomspace(1e-3, 1e-10, 15):
        z = complex(hi + d * s)
        g = m.cauchy(z, 0).real
        gp = m.cauchy(z, 1).real
        if abs(gp) > 1e12:
            return 1.0
        if prev_gp is not None and abs(gp - prev_gp) <= 1e-9 * abs(gp):
            break
        prev_gp = gp
    return float(1.0 / (1.0 + g * g / gp))


def _log_moment(m, z):
    """integral of log(z - x) dm(x), branch continuous in x."""
    z = np.asarray(z, dtype=complex)
    if isinstance(m, Atomic):
        return np.sum(m.weights * np.log(z[..., None] - m.locations), axis=-1)
    if isinstance(m, Uniform):
        t0, t1 = z - m.lo, z - m.hi

        def F(t):
            return t * np.log(t) - t

        return (F(t0) - F(t1)) / (m.hi - m.lo)
    if isinstance(m, TabulatedDensity):
        zc = z[..., None]
        t0, t1 = zc - m.x[:-1], zc - m.x[1:]
        C = m._A + m._B * zc

        def F(t):
            return C * (t * np.log(t) - t) - m._B * (0.5 * t ** 2 * np.log(t)
                                                     - 0.25 * t ** 2)

        return np.sum(F(t1) - F(t0), axis=-1)
    if isinstance(m, JacobiLike):
        return m._integrate(lambda x: np.log(z[..., None] - x))
    if isinstance(m, Mixture):
        a = np.sum(m._aw * np.log(z[..., None] - m._aloc), axis=-1)
        return a + (1.0 - m.atom_mass) * _log_moment(m.table, z)
    if hasattr(m, "_table"):
        return _log_moment(m._table(), z)
    raise TypeError("no log-moment rule for %r" % type(m).__name__)


def S_eval(m, u, z):
    """Phase function S_u(z) = z u - int log(z - x) dm(x) - log u."""
    if u == 0:
        raise ZeroU("u must be nonzero")
    zc = np.asarray(z, dtype=complex)
    m._check_off_support(zc)
    val = zc * u - _log_moment(m, zc) - np.log(complex(u))
    return val if val.ndim else complex(val)


def level_set_grid(m, u, region, resolution):
    """Classify a rectangle into D^- / D^+ / near-support by Re S_u."""
    x0, x1, y0, y1 = region
    nx, ny = resolution
    zu = inverse_cauchy(m, u)
    s0 = float(np.real(S_eval(m, u, complex(zu) + 0j if np.imag(zu) != 0
                              else complex(zu, 1e-14 * m._scale))))
    xs = np.linspace(x0, x1, nx)
    ys = np.linspace(y0, y1, ny)
    X, Y = np.meshgrid(xs, ys)
    Z = X + 1j * Y
    lo, hi = m.support
    band = max((x1 - x0) / max(nx - 1, 1), (y1 - y0) / max(ny - 1, 1))
    dx = np.maximum(0.0, np.maximum(lo - X, X - hi))
    dist = np.hypot(dx, Y)
    near = dist < band
    # keep the evaluation off the support to dodge the log singularity
    Zs = np.where(dist < 1e-9 * m._scale, Z + 1j * band, Z)
    vals = np.real(S_eval(m, u, Zs.ravel())).reshape(Z.shape)
    cls = np.where(vals < s0 - 1e-9, "minus", "plus")
    cls = np.where(near, "near-support", cls)
    return LevelSetGrid(tuple(region), (nx, ny), vals, cls)


def admissibility_check(m, u):
    """Search superellipses through z_u around the support for a curve lying
    in D^- away from z_u.  Returns {"in_O": bool, "margin": float}."""
    zu = complex(inverse_cauchy(m, u))
    s0 = float(np.real(S_eval(m, u, zu if zu.imag != 0
                              else complex(zu.real, 1e-14 * m._scale))))
    lo, hi = m.support
    c = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    xu, yu = zu.real - c, abs(zu.imag)
    theta = np.linspace(0.0, 2.0 * np.pi, 721)[:-1]
    best = -np.inf
    for p in (2, 3, 4):
        for t in (0.3, 0.5, 0.8, 1.2):
            a = (abs(xu) ** p + (yu / t) ** p) ** (1.0 / p)
            if a <= half * (1.0 + 1e-9):
                continue  # curve would cut the support
            b = t * a
            x = c + a * np.sign(np.cos(theta)) * np.abs(np.cos(theta)) ** (2.0 / p)
            y = b * np.sign(np.sin(theta)) * np.abs(np.sin(theta)) ** (2.0 / p)
            z = x + 1j * y
            # drop nodes in a small arc around z_u itself
            keep = np.abs(z - zu) > 0.05 * a
            if yu == 0:
                keep &= np.abs(np.conj(z) - zu) > 0.05 * a
            zk = z[keep]
            zk = zk + 1j * 1e-12 * m._scale * (zk.imag == 0)
            vals = np.real(S_eval(m, u, zk))
            margin = s0 - float(vals.max())
            best = max(best, margin)
    if not np.isfinite(best):
        best = 0.0
    return {"in_O": bool(best > 0), "margin": float(max(best, 0.0))}


def set_inclusion_check(m, z_threshold, grid=None):
    lo, hi = m.support
    if z_threshold <= hi:
        raise NotOutsideSupport("threshold must exceed the support")
    span = m._scale
    if grid is None:
        cut = max(4.0 * span + hi - z_threshold, 2.0 * span)
        ys = np.linspace(-cut, cut, 9)
        grid = [complex(z_threshold, y) for y in ys]
        grid += [complex(z_threshold + dx, 0.25 * span)
                 for dx in np.linspace(0.1 * span, cut, 5)]
    for z in grid:
        zz = complex(z)
        if zz.imag == 0:
            zz = complex(zz.real, 1e-13 * span)
        u = m.cauchy(zz, 0)
        rec = admissibility_check(m, u)
        if not rec["in_O"]:
            return False
    return True

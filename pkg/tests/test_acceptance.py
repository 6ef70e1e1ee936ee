"""Acceptance gate: one check per release criterion, each printing a single
pass/fail line with its pinned tolerance."""

import time

import numpy as np
import pytest
from scipy.stats import ks_2samp

from specedge.measures import (rademacher, Uniform, JacobiLike, Atomic,
                               quantile_spectrum)
from specedge.convolve import (subordination_at, markov_krein_forward,
                               markov_krein_inverse, quantized_convolve)
from specedge.edge import (EdgeModel, find_critical_point, edge_constants,
                           tau, tau_optimized, sqrt_edge_indicator,
                           _optimized_c)
from specedge.convolve import convolution_cauchy
from specedge.symfuncs import (ssym_lift_det, ssym_lift_matrix_form,
                               ssym_lift_contour_k1, ssym_lift_asymptotic,
                               susy_schur_det, susy_schur_contour_q)
from specedge.moments import (MomentRequest, moment_additive, moment_tensor,
                              difference_operator_oracle, airy_laplace,
                              airy_recursion_check)
from specedge.simulate import (ExperimentConfig, edge_experiment, rho_V,
                               mc_moment, sample_tensor_particles,
                               _run_ensemble, _sum_spectrum_keyed)
from specedge.symfuncs import bessel, bessel_normalized, schur


def _report(num, label, ok, detail):
    print("criterion %2d %-38s %s  (%s)" % (num, label,
                                            "PASS" if ok else "FAIL", detail))
    assert ok, "criterion %d failed: %s" % (num, detail)


def test_criterion_01_tau_two_atoms():
    t0 = time.time()
    val = tau(rademacher())
    dt = time.time() - t0
    err = abs(val - 82.0)
    _report(1, "tau of the symmetric two-atom law", err < 1e-6 and dt < 1.0,
            "tau=%.9g err=%.2e time=%.3fs tol 1e-6 / 1s" % (val, err, dt))


def test_criterion_02_tau_optimized():
    val = tau_optimized(rademacher())
    c = _optimized_c()
    ok = 67.5 <= val <= 68.5 and abs(c - 3.59112) < 1e-4
    _report(2, "optimized threshold functional", ok,
            "value=%.6g in [67.5,68.5], c=%.6f vs 3.59112 tol 1e-4"
            % (val, c))


def test_criterion_03_sqrt_edge_indicator():
    worst = 0.0
    for p in (1.5, 2.0, 3.0):
        m = JacobiLike(0.0, p, 0.0, 1.0)
        worst = max(worst, abs(sqrt_edge_indicator(m) - p * p))
    _report(3, "power-law edge exponent recovery", worst < 1e-5,
            "worst |indicator - p^2| = %.2e tol 1e-5" % worst)


def test_criterion_04_markov_krein():
    t0 = time.time()
    q = markov_krein_forward(Uniform(0.0, 1.0))
    atom_ok = (isinstance(q, Atomic) and len(q.locations) == 1
               and abs(q.locations[0]) < 1e-5
               and abs(q.weights[0] - 1.0) < 1e-5)
    m = Uniform(0.0, 2.0)
    rt = markov_krein_inverse(markov_krein_forward(m))
    xs = np.linspace(0.02, 1.98, 400)
    sup = float(np.max(np.abs(rt.density(xs) - 0.5)))
    dt = time.time() - t0
    _report(4, "quantization map and round trip",
            atom_ok and sup <= 1e-4 and dt < 10.0,
            "atom ok=%s, round-trip sup err=%.2e tol 1e-4, time=%.1fs"
            % (atom_ok, sup, dt))


def test_criterion_05_subordination_closed_form():
    rad = rademacher()
    s = subordination_at(rad, rad, complex(3.0, 1e-9))
    om = s.omegas[0].real
    g = s.G_value.real
    # closed forms (3+sqrt(5))/2 and 1/sqrt(5) round to the quoted
    # 2.6180340 and 0.4472136
    err_om = abs(om - (3.0 + np.sqrt(5.0)) / 2.0)
    err_g = abs(g - 1.0 / np.sqrt(5.0))
    rng = np.random.default_rng(5)
    strict = True
    for _ in range(50):
        z = complex(rng.uniform(-4, 4), rng.uniform(0.05, 3.0))
        ss = subordination_at(rad, rad, z)
        strict = strict and all(o.imag > z.imag for o in ss.omegas)
    _report(5, "two-atom subordination at z=3",
            err_om < 1e-8 and err_g < 1e-8 and strict,
            "omega err=%.1e, G err=%.1e tol 1e-8, strict lift on 50 pts=%s"
            % (err_om, err_g, strict))


def test_criterion_06_moment_formula_identity():
    t0 = time.time()
    rng = np.random.default_rng(17)
    worst_add = worst_tens = worst_orc = 0.0
    for _ in range(6):
        N = int(rng.integers(1, 5))
        k = int(rng.integers(1, 3))
        c = rng.uniform(0.05, 1.0, k)
        l = np.sort(rng.uniform(-1.0, 1.0, N))[::-1]
        truth = float(np.prod([np.sum(np.exp(ci * l)) for ci in c]))
        got = moment_additive(MomentRequest(("deterministic", l), c, N))
        worst_add = max(worst_add, abs(got / truth - 1.0))
        orc = difference_operator_oracle(
            "bessel", lambda z: bessel_normalized(l, np.asarray(z)), c, N)
        worst_orc = max(worst_orc, abs(orc.real / truth - 1.0))
        lam = np.sort(rng.integers(0, 4, N))[::-1]
        ell = lam + np.arange(N - 1, -1, -1)
        truth_t = float(np.prod([np.sum(np.exp(ci * ell)) for ci in c]))
        got_t = moment_tensor(MomentRequest(("tensor", [lam]), c, N))
        worst_tens = max(worst_tens, abs(got_t / truth_t - 1.0))

        def s_schur(z, lam=lam, N=N):
            num = schur(lam, np.exp(np.asarray(z, dtype=complex)))
            return num / schur(lam, np.ones(N))
        orc_t = difference_operator_oracle("schur", s_schur, c, N)
        worst_orc = max(worst_orc, abs(orc_t.real / truth_t - 1.0))
    dt = time.time() - t0
    ok = max(worst_add, worst_tens, worst_orc) < 1e-7 and dt < 60.0
    _report(6, "moment formulas vs direct sums", ok,
            "additive=%.1e tensor=%.1e oracle=%.1e tol 1e-7, %.1fs"
            % (worst_add, worst_tens, worst_orc, dt))


def test_criterion_07_two_summand_monte_carlo():
    ok = True
    details = []
    for N in (2, 3):
        l = np.zeros(N)
        l[0] = 1.0
        c = [0.5]
        exact = moment_additive(MomentRequest(("additive", [l, l]), c, N))
        est, se = mc_moment([l, l], c, trials=100000, seed=7)
        dev = abs(est - exact) / se
        details.append("N=%d dev=%.2f sigma" % (N, dev))
        ok = ok and dev <= 3.0
    _report(7, "contour moment vs Monte Carlo", ok,
            ", ".join(details) + " tol 3 sigma")


def test_criterion_08_quantized_exact():
    dist = rho_V([(1, 0), (1, 0)], 2)
    probs = {k: float(v) for k, v in dist.entries.items()}
    exact_ok = probs == {(2, 0): 0.75, (1, 1): 0.25}
    got = moment_tensor(MomentRequest(("tensor", [(1, 0), (1, 0)]), [0.1], 2))
    recomputed = sum(float(w) * sum(np.exp(0.1 * (np.array(lam)
                                                  + np.array([1, 0]))))
                     for lam, w in dist.entries.items())
    err_pin = abs(got - 2.344037)
    err_orc = abs(got - recomputed)
    _report(8, "tensor decomposition of V(1,0)^2",
            exact_ok and err_pin < 1e-6 and err_orc < 1e-6,
            "weights=%s, |moment-2.344037|=%.1e, |moment-oracle|=%.1e "
            "tol 1e-6" % (probs, err_pin, err_orc))


def test_criterion_09_airy_laplace():
    worst1 = 0.0
    for c in (0.5, 1.0, 2.0):
        closed = np.exp(c ** 3 / 12.0) / (2.0 * np.sqrt(np.pi) * c ** 1.5)
        worst1 = max(worst1, abs(airy_laplace([c]) - closed))
    gap1 = airy_recursion_check(1.0, 1.0)["gap"]
    gap2 = airy_recursion_check(0.5, 2.0)["gap"]
    swap = abs(airy_laplace([0.7, 1.3]) - airy_laplace([1.3, 0.7]))
    ok = worst1 < 1e-6 and gap1 <= 1e-6 and gap2 <= 1e-6 and swap <= 1e-8
    _report(9, "Airy Laplace functionals", ok,
            "closed-form err=%.1e tol 1e-6, recursion gaps=%.1e/%.1e tol "
            "1e-6, swap=%.1e tol 1e-8" % (worst1, gap1, gap2, swap))


def test_criterion_10_lift_identities():
    rng = np.random.default_rng(11)
    worst_cancel = 0.0
    for _ in range(100):
        N = int(rng.integers(1, 5))
        k = int(rng.integers(1, 3))
        l = np.sort(rng.uniform(-1, 1, N))[::-1]
        u = rng.uniform(-1, 1, N + k) + 1j * rng.uniform(-1, 1, N + k)
        v = rng.uniform(-1, 1, k) + 1j * rng.uniform(-1, 1, k)
        p = rng.uniform(0.1, 0.8)
        reduced = ssym_lift_det(l, p, u[:-1], v[:-1])
        # approach the collision u_{N+k} -> v_k along a fixed direction and
        # extrapolate the linear and quadratic error away
        vals = []
        for d in (1e-3, 5e-4, 2.5e-4):
            uu = u.copy()
            uu[-1] = v[-1] + d * (1.0 + 0.3j)
            vals.append(ssym_lift_det(l, p, uu, v))
        v1, v2, v3 = vals
        ext = (8.0 * v3 - 6.0 * v2 + v1) / 3.0
        worst_cancel = max(worst_cancel, abs(ext - reduced) / abs(reduced))

    # the matrix and determinant forms are ratios at reference points xi;
    # the contour form fixes xi = 0^N, so each comparison matches xi
    l3 = np.array([1.2, 0.4, -0.3])
    p3, u3, v3c = -2.0, 0.5 + 0.2j, 0.1 - 0.1j
    zero = np.zeros(3)
    xi = np.array([0.0, 0.25, 0.5])
    det_xi = ssym_lift_det(l3, p3, np.concatenate([[u3], xi]), [v3c]) \
        / bessel(l3, xi.astype(complex))
    mat_val = ssym_lift_matrix_form(l3, p3, [u3], [v3c], xi)
    det_0 = ssym_lift_det(l3, p3, np.concatenate([[u3], zero]), [v3c]) \
        / ssym_lift_det(l3, p3, zero, [])
    con_val = ssym_lift_contour_k1(l3, p3, u3, v3c)
    forms = max(abs(det_xi - mat_val) / abs(det_xi),
                abs(det_0 - con_val) / abs(det_0))

    lam, q, x, y = np.array([2, 1, 0]), 0.5, 1.4, 1.6
    qpows = q ** np.arange(3)
    det_q = susy_schur_det(lam, np.concatenate([[x], qpows]), [y]) \
        / susy_schur_det(lam, qpows, [])
    con_q = susy_schur_contour_q(lam, x, y, q)
    susy = abs(det_q - con_q) / abs(det_q)
    ok = worst_cancel <= 1e-9 and forms <= 1e-6 and susy <= 1e-6
    _report(10, "lift identities", ok,
            "cancellation=%.1e tol 1e-9, forms=%.1e tol 1e-6, "
            "q-contour=%.1e tol 1e-6" % (worst_cancel, forms, susy))


def test_criterion_11_asymptotic_lift():
    # exact lift values frozen from an extended-precision residue-sum
    # evaluation of the one-pair lift on the uniform quantile spectrum
    # (double precision loses all digits at these sizes, so the exact side
    # is pinned; the package side is the live asymptotic formula)
    exact = {20: 251.37614380711, 40: 63850.254513097, 80: 4119455148.7656}
    m = Uniform(0.0, 1.0)
    errs = []
    for N in (20, 40, 80):
        a = ssym_lift_asymptotic(m, 0.5, [0.9], [0.4], N)
        errs.append(abs(exact[N] / a.real - 1.0))
    ok = errs[0] > errs[1] > errs[2] and errs[2] <= 0.05
    _report(11, "large-N lift asymptotics", ok,
            "|ratio-1| = %.2e > %.2e > %.2e, last tol 0.05"
            % (errs[0], errs[1], errs[2]))


def test_criterion_12_edge_pipeline_analytic():
    semi = JacobiLike(0.5, 0.5, -2.0, 2.0)
    rep = find_critical_point(EdgeModel([semi], [1], "additive", 1))
    E, V = edge_constants(rep, 1)
    err1 = max(abs(rep.z_crit - 1.0), abs(E - 2.0), abs(V - 1.0))
    m1 = JacobiLike(0.5, 0.5, -2.0, 2.0)
    m2 = JacobiLike(0.5, -0.5, 0.0, 1.0)
    rep2 = find_critical_point(EdgeModel([m1, m2], [1, 1], "additive", 1))
    E2, _ = edge_constants(rep2, 1)
    g = complex(np.asarray(convolution_cauchy(
        m1, m2, complex(E2 + 1e-9, 1e-6))).reshape(())).real
    err2 = abs(rep2.z_crit - g)
    _report(12, "edge constants, analytic checks",
            err1 < 1e-6 and err2 <= 1e-3,
            "semicircle err=%.1e tol 1e-6, |z - G(E+)|=%.1e tol 1e-3"
            % (err1, err2))


@pytest.mark.slow
def test_criterion_13_edge_pipeline_statistical():
    t0 = time.time()
    jac = JacobiLike(0.5, -0.5, 0.0, 1.0)
    cfg = ExperimentConfig([jac], [2], 300, 400, seed=2, top_k=8,
                           c_probes=(1.0,))
    summary, _ = edge_experiment(cfg)
    lap = summary["laplace"][0]["mean"]
    rel = abs(lap / 0.306610 - 1.0)
    ks = summary["ks_vs_gue"]
    # null control: two independent surrogate ensembles of the same size
    from specedge.measures import semicircle
    half = semicircle(radius=np.sqrt(2.0))
    _, _, s1 = _run_ensemble([half], [2], 300, 400, seed=21, top_k=8,
                             tag_base=16)
    _, _, s2 = _run_ensemble([half], [2], 300, 400, seed=22, top_k=8,
                             tag_base=16)
    ks0 = float(ks_2samp(np.array([s[0] for s in s1]),
                         np.array([s[0] for s in s2])).statistic)
    crit01 = 1.628 * np.sqrt(2.0 / 400.0)
    dt = time.time() - t0
    ok = rel <= 0.15 and ks <= 0.12 and ks0 < crit01 and dt < 600.0
    _report(13, "edge fluctuation experiment", ok,
            "Laplace dev=%.1f%% tol 15%%, KS=%.3f tol 0.12, control "
            "KS=%.3f < %.3f, %.0fs" % (100 * rel, ks, ks0, crit01, dt))


def test_criterion_14_global_laws():
    N = 500
    spec = quantile_spectrum(rademacher(), N)
    samp = np.sort(_sum_spectrum_keyed([spec, spec], seed=9, trial=0))
    ps = (np.arange(N) + 0.5) / N
    arcsine = 2.0 * np.sin(np.pi * (ps - 0.5))
    w1 = float(np.mean(np.abs(samp - arcsine)))

    u = Uniform(0.0, 2.0)
    dist = rho_V([tuple(range(4, 0, -1))] * 2, 4)
    parts = sample_tensor_particles(dist, seed=3, trials=4000)
    # the finite-N decomposition conserves the total particle count, which
    # sits 1/(2N) above the macroscopic limit; remove that exact trace shift
    parts = np.sort(np.asarray(parts).ravel()) - 1.0 / 8.0
    qc = quantized_convolve(u, u)
    ref = np.sort(quantile_spectrum(qc, 16000))
    w1q = float(np.mean(np.abs(parts - ref)))
    _report(14, "global spectral laws", w1 <= 0.05 and w1q <= 0.1,
            "free sum vs arcsine W1=%.3f tol 0.05, quantized W1=%.3f "
            "tol 0.1" % (w1, w1q))

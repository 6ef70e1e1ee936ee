import numpy as np
import pytest

from specedge.measures import (Atomic, Uniform, JacobiLike, TabulatedDensity,
                               Empirical, rademacher, semicircle,
                               cauchy_transform, cauchy_derivative,
                               inverse_cauchy, principal_value_G,
                               variance_functional, quantile_spectrum,
                               signature_spectrum, measure_to_json,
                               measure_from_json, PointOnSupport,
                               NotDensityBounded)


def test_cauchy_transform_atomic_closed_form():
    m = rademacher()
    rng = np.random.default_rng(0)
    for _ in range(20):
        z = complex(rng.uniform(-3, 3), rng.uniform(0.1, 2))
        expect = 0.5 / (z - 1.0) + 0.5 / (z + 1.0)
        assert abs(m.cauchy(z, 0) - expect) < 1e-12


def test_cauchy_transform_semicircle_closed_form():
    # G(z) = (z - sqrt(z^2 - 4)) / 2 for the radius-2 semicircle
    m = semicircle()
    rng = np.random.default_rng(1)
    for _ in range(20):
        z = complex(rng.uniform(-3, 3), rng.uniform(0.2, 2))
        expect = 2.0 / (z + np.sqrt(z - 2.0) * np.sqrt(z + 2.0))
        assert abs(m.cauchy(z, 0) - expect) < 1e-8


def test_cauchy_derivatives_match_finite_differences():
    rng = np.random.default_rng(2)
    for m in (Uniform(0.0, 1.0), JacobiLike(0.5, 0.5, -2.0, 2.0)):
        for _ in range(10):
            z = complex(rng.uniform(-2, 2), rng.uniform(0.5, 1.5))
            h = 1e-5
            fd = (m.cauchy(z + h, 0) - m.cauchy(z - h, 0)) / (2 * h)
            assert abs(m.cauchy(z, 1) - fd) < 1e-6 * max(1, abs(fd))


def test_density_normalization():
    from scipy.integrate import quad
    for m in (Uniform(-1.0, 2.0), JacobiLike(0.5, -0.5, 0.0, 1.0),
              JacobiLike(2.0, 3.0, -1.0, 4.0)):
        lo, hi = m.support
        mass, _ = quad(lambda x: float(m.density(x)), lo, hi,
                       points=[lo, hi], limit=200)
        assert abs(mass - 1.0) < 1e-8


def test_tabulated_density_matches_source():
    src = JacobiLike(0.5, 0.5, -2.0, 2.0)
    xs = np.linspace(-2.0, 2.0, 800)
    tab = TabulatedDensity(xs, src.density(xs))
    z = complex(0.3, 0.7)
    assert abs(tab.cauchy(z, 0) - src.cauchy(z, 0)) < 1e-4


def test_inverse_cauchy_round_trip():
    rng = np.random.default_rng(3)
    for m in (Uniform(0.0, 1.0), semicircle()):
        hi = m.support[1]
        for _ in range(10):
            x = hi + rng.uniform(0.1, 2.0)
            u = m.cauchy(complex(x), 0).real
            back = inverse_cauchy(m, u)
            assert abs(back - x) < 1e-8 * max(1.0, abs(x))


def test_principal_value_inside_support():
    m = Uniform(0.0, 1.0)
    # closed form: pv integral of 1/(x - t) dt on (0,1) = log(x/(1-x))
    for x in (0.2, 0.5, 0.8):
        assert abs(principal_value_G(m, x) - np.log(x / (1 - x))) < 1e-8


def test_pointwise_error_on_support():
    with pytest.raises(PointOnSupport):
        Uniform(0.0, 1.0).cauchy(complex(0.5, 0.0), 0)


def test_variance_functional_definition():
    m = semicircle()
    z = complex(3.0, 0.0)
    g = m.cauchy(z, 0)
    gp = m.cauchy(z, 1)
    assert abs(variance_functional(m, z) - (-g * g / gp).real) < 1e-12


def test_quantile_spectrum_uniform():
    spec = quantile_spectrum(Uniform(0.0, 1.0), 10)
    expect = (np.arange(10)[::-1] + 0.5) / 10.0
    assert np.max(np.abs(np.sort(spec) - np.sort(expect))) < 1e-9


def test_signature_spectrum_density_one():
    lam = signature_spectrum(Uniform(0.0, 1.0), 8)
    assert np.all(np.diff(lam) <= 0)
    # density-one uniform block corresponds to the zero signature
    assert np.all(lam == 0)


def test_signature_spectrum_requires_bounded_density():
    with pytest.raises(NotDensityBounded):
        signature_spectrum(Uniform(0.0, 0.25), 6)


def test_json_round_trip():
    rng = np.random.default_rng(4)
    ms = [rademacher(), Uniform(-1.0, 3.0), JacobiLike(0.5, -0.5, 0.0, 1.0),
          Empirical(rng.uniform(-1, 1, 12))]
    for m in ms:
        back = measure_from_json(measure_to_json(m))
        z = complex(0.4, 1.3)
        assert abs(back.cauchy(z, 0) - m.cauchy(z, 0)) < 1e-10
        assert back.support == m.support


def test_shifted_measure():
    m = Uniform(0.0, 1.0).shifted(2.5)
    assert m.support == (2.5, 3.5)
    z = complex(1.0, 1.0)
    assert abs(m.cauchy(z, 0) - Uniform(0.0, 1.0).cauchy(z - 2.5, 0)) < 1e-12

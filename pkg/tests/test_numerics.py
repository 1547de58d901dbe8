from __future__ import annotations

import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsdlevy.errors import BracketError, DomainError, NumericalError
from qsdlevy.models import QsdBase, VgParams, levy_density
from qsdlevy.numerics import (
    DEFAULT_QUAD,
    QuadSpec,
    RngStream,
    bessel_k1,
    expm1mx,
    find_root,
    integrate_levy,
    rng_gamma,
    rng_inverse_gaussian,
    rng_normal,
    rng_uniform,
)
from qsdlevy.qsd import _forward


# --- Bessel K1 ---------------------------------------------------------------

@pytest.mark.parametrize("x, expected", [(1.0, 0.6019072301972346), (10.0, 1.8648773453825582e-5)])
def test_k1_reference_values(x, expected):
    assert bessel_k1(x) == pytest.approx(expected, rel=1e-13)


def test_k1_matches_mpmath_across_range():
    for x in np.geomspace(1e-8, 700.0, 60):
        ref = float(mpmath.besselk(1, mpmath.mpf(float(x))))
        assert bessel_k1(float(x)) == pytest.approx(ref, rel=1e-12), x


def test_k1_small_argument_limit():
    for x in (1e-4, 1e-6, 1e-8):
        assert x * bessel_k1(x) == pytest.approx(1.0, abs=10 * x)


def test_k1_underflows_quietly():
    assert bessel_k1(800.0) == 0.0


@pytest.mark.parametrize("x", [0.0, -1.0, math.nan])
def test_k1_domain(x):
    with pytest.raises(DomainError):
        bessel_k1(x)


def test_k1_strictly_decreasing():
    vals = bessel_k1(np.linspace(1e-6, 5.0, 2000))
    assert np.all(np.diff(vals) < 0)


@given(st.floats(min_value=-5.0, max_value=5.0, allow_nan=False))
def test_expm1mx_against_mpmath(z):
    with mpmath.workdps(700):
        ref = float(mpmath.expm1(mpmath.mpf(z)) - z)
    assert abs(expm1mx(z) - ref) <= 1e-15 * abs(ref)


# --- quadrature ----------------------------------------------------------------

VG_SYM = VgParams(1.0, 1.5, 1.5, 0.0)


def vg_density(x):
    return levy_density(VG_SYM, x)


def lambda_integrand(x):
    if abs(x) <= 1:
        return expm1mx(x)
    return math.expm1(x)


def test_quadspec_validation():
    with pytest.raises(DomainError):
        QuadSpec(abs_tol=0)
    with pytest.raises(DomainError):
        QuadSpec(split_points=(1.0, -1.0))
    assert set(QuadSpec(split_points=(0.0,)).split_points) >= {-1.0, 0.0, 1.0}


def test_integrate_zero_integrand():
    assert integrate_levy(lambda x: 0.0, vg_density) == 0.0


def test_integrate_vg_lambda_value():
    assert integrate_levy(lambda_integrand, vg_density) == pytest.approx(math.log(9 / 5), abs=1e-10)


def test_integrate_never_touches_zero():
    def density(x):
        assert x != 0.0
        return vg_density(x)

    integrate_levy(lambda x: x * x, density)


def test_odd_integrand_even_density():
    assert abs(integrate_levy(lambda x: x ** 3 * math.exp(-x * x), vg_density)) < 1e-12


def test_integrate_overflow_becomes_numerical_error():
    # e^{2x} against a tail decaying like e^{-1.5 x}: the integral diverges
    with pytest.raises(NumericalError):
        integrate_levy(lambda x: math.expm1(2.0 * x) if abs(x) > 1 else 0.0, vg_density)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3))
def test_integrate_linear(c1, c2):
    def g1(x):
        return x * x / (1 + x * x)

    def g2(x):
        return math.sin(x) ** 2

    lhs = integrate_levy(lambda x: c1 * g1(x) + c2 * g2(x), vg_density)
    rhs = c1 * integrate_levy(g1, vg_density) + c2 * integrate_levy(g2, vg_density)
    assert abs(lhs - rhs) <= 10 * (DEFAULT_QUAD.abs_tol + DEFAULT_QUAD.rel_tol * abs(lhs))


# --- root finding --------------------------------------------------------------

def test_find_root_linear():
    assert find_root(lambda x: x - 1.0, 0.0, 2.0) == pytest.approx(1.0, abs=1e-12)


def test_find_root_nig_forward_map():
    nig = QsdBase("nig", a=1, d=1)
    assert find_root(lambda al: _forward(nig, al) - 1.0, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)


def test_find_root_vg_forward_map():
    vg = QsdBase("vg", C=1, beta=1.5)
    assert find_root(lambda al: _forward(vg, al) - math.log(9 / 5), -0.9, 2.9) == pytest.approx(0.0, abs=1e-12)


def test_find_root_bad_bracket():
    with pytest.raises(BracketError):
        find_root(lambda x: x * x + 1.0, -1.0, 1.0)


def test_find_root_iteration_cap():
    with pytest.raises(NumericalError):
        find_root(lambda x: math.atan(x - math.pi) ** 3, -100.0, 100.0, tol=1e-300, maxiter=3)


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 4))
def test_find_root_image_within_bracket_variation(shift, scale):
    def f(x):
        return math.tanh(scale * (x - shift))

    r = find_root(f, -10.0, 10.0)
    tol = 1e-12 + 4 * np.finfo(float).eps * abs(r)
    assert min(f(r - tol), f(r + tol)) <= f(r) <= max(f(r - tol), f(r + tol))
    assert abs(r - shift) <= 2 * tol


# --- random streams ------------------------------------------------------------

def test_stream_reproducible():
    a = rng_normal(RngStream(5, 3), 1000)
    b = rng_normal(RngStream(5, 3), 1000)
    assert np.array_equal(a, b)
    c = rng_normal(RngStream(5, 4), 1000)
    assert not np.array_equal(a, c)


def test_streams_uncorrelated():
    a = rng_uniform(RngStream(11, 0), 200_000)
    b = rng_uniform(RngStream(11, 1), 200_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / math.sqrt(200_000)


def test_gamma_mean():
    k, r = 0.7, 2.5
    x = rng_gamma(RngStream(1, 0), k, r, 1_000_000)
    se = math.sqrt(k) / r / 1000.0
    assert abs(x.mean() - k / r) < 4 * se


@pytest.mark.parametrize("delta, gamma", [(1.0, 1.0), (0.4, 3.9), (1e-3, 2.0)])
def test_inverse_gaussian_mean(delta, gamma):
    x = rng_inverse_gaussian(RngStream(2, 0), delta, gamma, 1_000_000)
    mean = delta / gamma
    sd = math.sqrt(delta / gamma ** 3)
    assert abs(x.mean() - mean) < 4 * sd / 1000.0
    assert np.all(x > 0)


def test_inverse_gaussian_laplace_transform():
    delta, gamma, s = 0.8, 1.3, 0.7
    x = rng_inverse_gaussian(RngStream(3, 0), delta, gamma, 1_000_000)
    y = np.exp(-s * x)
    assert abs(y.mean() - math.exp(delta * (gamma - math.sqrt(gamma ** 2 + 2 * s)))) < 4 * y.std() / 1000.0


@pytest.mark.parametrize("args", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
def test_sampler_domains(args):
    with pytest.raises(DomainError):
        rng_gamma(RngStream(0), *args)
    with pytest.raises(DomainError):
        rng_inverse_gaussian(RngStream(0), *args)

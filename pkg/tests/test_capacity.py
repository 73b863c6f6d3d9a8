import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from narrowgap.capacity import (GapIntegralSpec, Regime, angular_constant,
                                gap_integral, gap_integral_mc, predicted_rate,
                                radial_integral, reduction_sandwich, regime_of,
                                verify_claim)
from narrowgap.geometry import INFINITY
from narrowgap.quadrature import QuadratureError


def arctan_form(eps, r):
    return 2 / math.sqrt(eps) * math.atan(r / math.sqrt(eps))


@pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-5, 1e-9])
@pytest.mark.parametrize("r", [0.3, 1.0, 2.0])
def test_order_one_matches_arctan(eps, r):
    val = gap_integral(GapIntegralSpec([1], r, 2, eps), tol=1e-11)
    assert val == pytest.approx(arctan_form(eps, r), rel=1e-9)


def test_mixed_infinite_direction_factorises():
    eps, r = 1e-3, 0.7
    val = gap_integral(GapIntegralSpec([INFINITY, 1], r, 3, eps), tol=1e-11)
    assert val == pytest.approx(2 * r * arctan_form(eps, r), rel=1e-9)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_all_infinite_is_exact(n):
    eps, r = 3e-4, 0.8
    val = gap_integral(GapIntegralSpec([INFINITY] * (n - 1), r, n, eps))
    assert val * eps == pytest.approx(2 ** (n - 1) * r ** (n - 1), rel=1e-14)


@pytest.mark.parametrize("alpha", [1.5, 2.0, 3.0])
def test_one_dimensional_against_scipy(alpha):
    eps = 1e-3

    def fn(x):
        return 1 / (eps + x ** (2 * alpha))

    ref = 2 * integrate.quad(fn, 0, 1, points=[eps ** (0.5 / alpha)], epsabs=0,
                             epsrel=1e-12, limit=200)[0]
    val = gap_integral(GapIntegralSpec([alpha], 1.0, 2, eps), tol=1e-11)
    assert val == pytest.approx(ref, rel=1e-9)


def test_two_dimensional_against_scipy():
    eps = 1e-2

    def fn(y, x):
        return 1 / (eps + x * x + y ** 4)

    ref = 4 * integrate.dblquad(fn, 0, 1, 0, 1, epsabs=0, epsrel=1e-10)[0]
    val = gap_integral(GapIntegralSpec([1, 2], 1.0, 3, eps), tol=1e-10)
    assert val == pytest.approx(ref, rel=1e-7)


def test_monte_carlo_oracle_and_determinism():
    spec = GapIntegralSpec([1, 1], 1.0, 3, 0.05)
    a = gap_integral_mc(spec, 200_000, seed=3, chunk=50_000)
    b = gap_integral_mc(spec, 200_000, seed=3, chunk=50_000)
    assert a == b
    exact = gap_integral(spec)
    assert abs(a[0] - exact) <= 4 * a[1]
    with pytest.raises(ValueError):
        gap_integral_mc(spec, 100)


def test_angular_constants():
    assert angular_constant([1]) == 1.0
    assert angular_constant([1, 1]) == pytest.approx(math.pi / 2, rel=1e-12)
    assert angular_constant([1, 2]) == pytest.approx(0.5 * special.beta(0.25, 0.5),
                                                     rel=1e-11)
    assert angular_constant([INFINITY, 1, 1]) == angular_constant([1, 1])


@pytest.mark.parametrize("gamma", [0.25, 0.5, 0.75, 1.0, 1.5, 3.0])
@pytest.mark.parametrize("eps,R", [(1e-6, 1.0), (0.3, 2.0), (1e-2, 0.05)])
def test_radial_integral_against_scipy(gamma, eps, R):
    def fn(rho):
        return rho ** (2 * gamma - 1) / (eps + rho * rho)

    ref = integrate.quad(fn, 0, R, points=[min(math.sqrt(eps), R / 2)], epsabs=0,
                         epsrel=1e-13, limit=400)[0]
    assert radial_integral(gamma, eps, R) == pytest.approx(ref, rel=1e-9)


@given(st.floats(1e-10, 1.0), st.floats(1e-3, 10.0))
@settings(max_examples=40)
def test_radial_log_form(eps, R):
    exact = 0.5 * math.log1p(R * R / eps)
    assert radial_integral(1.0, eps, R) == pytest.approx(exact, rel=1e-12)
    assert radial_integral(1.0, eps, R, closed_form=False) == pytest.approx(
        exact, rel=1e-10)


@given(st.sampled_from([(1,), (2,), (1, 1), (1, 2), (2, 2)]),
       st.floats(-7.0, -1.0))
@settings(max_examples=25, deadline=None)
def test_reduction_sandwich_holds(orders, log_eps):
    n = len(orders) + 1
    sw = reduction_sandwich(orders, 1.0, n, 10.0 ** log_eps, tol=1e-9)
    assert sw.holds
    assert sw.lower <= sw.value * (1 + 1e-8) and sw.value <= sw.upper * (1 + 1e-8)


@given(st.sampled_from([(1,), (1.5,), (1, 1), (1, 3)]), st.floats(-6.0, -1.0),
       st.floats(1.5, 4.0))
@settings(max_examples=25, deadline=None)
def test_integral_decreases_in_eps(orders, log_eps, factor):
    n = len(orders) + 1
    e = 10.0 ** log_eps
    small = gap_integral(GapIntegralSpec(orders, 1.0, n, e))
    large = gap_integral(GapIntegralSpec(orders, 1.0, n, e * factor))
    assert large < small


def test_order_permutation_invariance():
    e = 1e-4
    a = gap_integral(GapIntegralSpec([1, 2], 1.0, 3, e), tol=1e-10)
    b = gap_integral(GapIntegralSpec([2, 1], 1.0, 3, e), tol=1e-10)
    assert a == pytest.approx(b, rel=1e-9)


def test_regimes_and_rates():
    assert regime_of(0.5) is Regime.GAMMA_LT_1
    assert regime_of(1.0) is Regime.GAMMA_EQ_1
    assert regime_of(1.25) is Regime.GAMMA_GT_1
    assert predicted_rate(1.0, 1e-4) == pytest.approx(math.log(1e4))
    assert predicted_rate(0.5, 1e-4) == pytest.approx(100.0)
    assert predicted_rate(2.0, 1e-4) == 1.0


@pytest.mark.parametrize("orders,n,tol", [((1,), 2, 1e-8), ((1, 1), 3, 1e-8),
                                          ((1, 2), 3, 1e-8)])
def test_verify_claim_regimes(orders, n, tol):
    bound = verify_claim(orders, 1.0, n, np.logspace(-7, -2, 6), factor=5.0, tol=tol)
    assert bound.success, bound.ratios


def test_budget_exhaustion_raises():
    with pytest.raises(QuadratureError):
        gap_integral(GapIntegralSpec([1, 1], 1.0, 3, 1e-8), tol=1e-10, budget=5000)


def test_verify_claim_input_checks():
    with pytest.raises(ValueError):
        verify_claim((1,), 1.0, 2, [1e-3, 1e-2])
    with pytest.raises(ValueError):
        verify_claim((1,), 0.1, 2, [1e-5, 1e-2, 1e-1])
    with pytest.raises(ValueError):
        gap_integral(GapIntegralSpec([1], 1.0, 2, 0.1), tol=0.5)
    with pytest.raises(ValueError):
        GapIntegralSpec([1, 1], 1.0, 2, 0.1)
    with pytest.raises(ValueError, match="ceiling"):
        gap_integral(GapIntegralSpec([1000], 1.0, 2, 0.1))

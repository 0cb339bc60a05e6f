import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special

from numerics.solvers import Tolerance, bisect_root, geometric_series_sum
from numerics.special import (EULER_GAMMA, LN2, exp_integral_e1, expected_log_gain, fading_log_moment,
                              fading_log_tail, scaled_exp_integral_e1, to_bits)
from util.errors import BracketError, ConvergenceError, NumericsDomainError

E1_GRID = np.logspace(-4.0, math.log10(50.0), 50)


def e1_by_quadrature(x):
    # E1(x) = integral over s >= 0 of exp(-x e^s), after t = e^s
    f = lambda s: math.exp(-x * math.exp(s))
    knee = max(0.0, math.log(1.0 / x))
    head = integrate.quad(f, 0.0, knee, epsabs=0.0, epsrel=1e-13, limit=200)[0] if knee > 0 else 0.0
    tail = integrate.quad(f, knee, knee + math.log(750.0), epsabs=0.0, epsrel=1e-13, limit=200)[0]
    return head + tail


def log_moment_by_quadrature(a):
    return integrate.quad(lambda h: math.log1p(a * h) * math.exp(-h), 0.0, math.inf, epsabs=0.0, epsrel=1e-12)[0]


@pytest.mark.parametrize('x', E1_GRID)
def test_e1_matches_quadrature(x):
    assert exp_integral_e1(x) == pytest.approx(e1_by_quadrature(x), rel=1e-8)


def test_e1_matches_scipy_on_grid():
    ours = np.array([exp_integral_e1(x) for x in E1_GRID])
    np.testing.assert_allclose(ours, special.exp1(E1_GRID), rtol=1e-11)


def test_e1_known_value():
    assert exp_integral_e1(1.0) == pytest.approx(0.21938393439552029, rel=1e-13)


def test_e1_continuous_across_switch():
    below = exp_integral_e1(1.0)
    above = exp_integral_e1(math.nextafter(1.0, 2.0))
    assert above == pytest.approx(below, rel=1e-12)


@pytest.mark.parametrize('x', [0.0, -1.0])
def test_e1_rejects_non_positive(x):
    with pytest.raises(NumericsDomainError):
        exp_integral_e1(x)
    with pytest.raises(NumericsDomainError):
        scaled_exp_integral_e1(x)


def test_scaled_e1_does_not_overflow():
    x = 800.0
    asymptotic = (1.0 - 1.0 / x + 2.0 / x ** 2 - 6.0 / x ** 3 + 24.0 / x ** 4) / x
    assert scaled_exp_integral_e1(x) == pytest.approx(asymptotic, rel=1e-10)


def test_fading_log_moment_at_one():
    assert fading_log_moment(1.0, 'nats') == pytest.approx(0.596347, abs=1e-6)
    assert fading_log_moment(1.0, 'bits') == pytest.approx(0.596347362323194 / LN2, rel=1e-10)


@pytest.mark.parametrize('a', [1e-3, 0.1, 2.0, 37.5, 1e3])
def test_fading_log_moment_matches_quadrature(a):
    assert fading_log_moment(a, 'nats') == pytest.approx(log_moment_by_quadrature(a), rel=1e-8)


def test_fading_log_moment_limits():
    assert fading_log_moment(0.0) == 0.0
    assert fading_log_moment(1e-12, 'nats') == pytest.approx(1e-12, rel=1e-9)
    assert fading_log_moment(1e8, 'nats') == pytest.approx(math.log(1e8) - EULER_GAMMA, rel=1e-6)
    assert fading_log_moment(5e-324, 'nats') > 0.0


def test_fading_log_moment_rejects_negative_and_bad_base():
    with pytest.raises(NumericsDomainError):
        fading_log_moment(-1.0)
    with pytest.raises(ValueError):
        fading_log_moment(1.0, 'decibels')


@given(st.floats(min_value=1e-6, max_value=1e6), st.floats(min_value=1.0001, max_value=10.0))
@settings(max_examples=100)
def test_fading_log_moment_increasing_and_concave_bound(a, factor):
    low = fading_log_moment(a, 'nats')
    high = fading_log_moment(a * factor, 'nats')
    assert high > low
    # Jensen: E[ln(1 + a h)] <= ln(1 + a)
    assert low <= math.log1p(a) + 1e-12


def test_fading_log_tail_at_zero_is_full_moment():
    assert fading_log_tail(0.0, 'nats') == pytest.approx(fading_log_moment(1.0, 'nats'), rel=1e-12)


@pytest.mark.parametrize('threshold', [0.1, math.log(2.0), 1.0, 4.0, 30.0])
def test_fading_log_tail_matches_quadrature(threshold):
    expected = integrate.quad(lambda h: math.log1p(h) * math.exp(-h), threshold, math.inf,
                              epsabs=0.0, epsrel=1e-12)[0]
    assert fading_log_tail(threshold, 'nats') == pytest.approx(expected, rel=1e-8)


def test_fading_log_tail_rejects_negative():
    with pytest.raises(NumericsDomainError):
        fading_log_tail(-0.5)


def test_expected_log_gain():
    f = lambda h: math.log(h) * math.exp(-h)
    expected = (integrate.quad(f, 0.0, 1.0, epsabs=1e-13, limit=200)[0]
                + integrate.quad(f, 1.0, math.inf, epsabs=1e-13, limit=200)[0])
    assert expected_log_gain() == pytest.approx(expected, rel=1e-8)


def test_to_bits():
    assert to_bits(LN2) == pytest.approx(1.0)


def test_geometric_series_sum_plain_geometric():
    assert geometric_series_sum(lambda j: 0.5 ** j, 0.5) == pytest.approx(2.0, abs=1e-11)


def test_geometric_series_sum_leading_zero_term():
    # sum j r^j = r / (1 - r)^2
    r = 0.5
    assert geometric_series_sum(lambda j: j * r ** j, r) == pytest.approx(r / (1 - r) ** 2, abs=1e-10)


@pytest.mark.parametrize('ratio', [0.0, 1.0, -0.2, 1.5])
def test_geometric_series_sum_rejects_ratio(ratio):
    with pytest.raises(ValueError):
        geometric_series_sum(lambda j: 0.5 ** j, ratio)


def test_geometric_series_sum_budget_exhausted():
    with pytest.raises(ConvergenceError):
        geometric_series_sum(lambda j: 0.9 ** j, 0.9, Tolerance(max_iter=3))


def test_bisect_root_sqrt_two():
    assert bisect_root(lambda x: x * x - 2.0, 0.0, 2.0) == pytest.approx(math.sqrt(2.0), rel=1e-9)


@pytest.mark.parametrize('lo,hi', [(1.0, 3.0), (-2.0, 1.0)])
def test_bisect_root_rejects_root_at_endpoint(lo, hi):
    with pytest.raises(BracketError):
        bisect_root(lambda x: x - 1.0, lo, hi)


def test_bisect_root_examples():
    assert bisect_root(lambda x: x - 2.0, 0.0, 5.0) == pytest.approx(2.0, abs=1e-12)
    assert bisect_root(lambda x: x * x - 2.0, 1.0, 2.0) == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_bisect_root_resolves_to_absolute_tolerance():
    found = bisect_root(lambda x: 3.0 * (x - 42.0), -100.0, 100.0)
    assert abs(found - 42.0) < 1e-12


def test_bisect_root_needs_sign_change():
    with pytest.raises(BracketError):
        bisect_root(lambda x: x * x + 1.0, -1.0, 1.0)


@given(st.floats(min_value=-50.0, max_value=50.0))
def test_bisect_root_recovers_linear_root(root):
    found = bisect_root(lambda x: 3.0 * (x - root), -100.0, 100.0)
    assert found == pytest.approx(root, abs=1e-9)


@pytest.mark.parametrize('kwargs', [{'rel': 0.0}, {'abs': -1.0}, {'max_iter': 0}])
def test_tolerance_validation(kwargs):
    with pytest.raises(ValueError):
        Tolerance(**kwargs)


def test_e1_at_one_half():
    assert exp_integral_e1(0.5) == pytest.approx(0.559773595, rel=1e-9)


def test_geometric_series_sum_examples():
    p = 0.5
    assert geometric_series_sum(lambda j: 0.5 * 0.5 ** j, 0.5) == pytest.approx(1.0, abs=1e-11)
    assert geometric_series_sum(lambda j: p * (1 - p) ** j * j, 1 - p) == pytest.approx((1 - p) / p, abs=1e-10)
    assert geometric_series_sum(lambda j: 0.0, 0.5) == 0.0

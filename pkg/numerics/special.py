"""
Exponential integral and the Exp(1) fading integrals built on it.

Everything here works in nats internally; to_bits is the single conversion
point to base-2 logarithms.
"""
import math
from typing import Literal

import numpy as np

from util.errors import NumericsDomainError

LogBase = Literal['bits', 'nats']

LN2 = math.log(2.0)
EULER_GAMMA = float(np.euler_gamma)

# E1 uses the power series up to here and the continued fraction above it.
SERIES_SWITCH = 1.0
_EPS = 1e-16
_CF_EPS = 1e-15
_TINY = 1e-300
_MAX_TERMS = 10_000


def to_bits(nats: float) -> float:
    """Convert a quantity in nats to bits."""
    return nats / LN2


def _convert(nats: float, log_base: LogBase) -> float:
    if log_base == 'nats':
        return nats
    if log_base == 'bits':
        return to_bits(nats)
    raise ValueError(f"log_base must be 'bits' or 'nats', got {log_base!r}")


def _e1_series(x: float) -> float:
    # E1(x) = -gamma - ln x - sum_{k>=1} (-x)^k / (k k!)
    total = -EULER_GAMMA - math.log(x)
    fact = 1.0
    for k in range(1, _MAX_TERMS):
        fact *= -x / k
        delta = -fact / k
        total += delta
        if abs(delta) < abs(total) * _EPS:
            return total
    raise NumericsDomainError(f"E1 series failed to converge at x={x}")


def _e1_continued_fraction_scaled(x: float) -> float:
    # Modified Lentz evaluation of e^x E1(x) = 1/(x+1- 1/(x+3- 4/(x+5- ...)))
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_TERMS):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NumericsDomainError(f"E1 continued fraction failed to converge at x={x}")


def exp_integral_e1(x: float) -> float:
    """
    Exponential integral E1(x) = integral from x to infinity of e^-t / t dt.

    Args:
        x: Positive argument

    Returns:
        E1(x) to about 1e-12 relative accuracy

    Raises:
        NumericsDomainError: If x <= 0
    """
    if not x > 0:
        raise NumericsDomainError(f"E1 is defined for x > 0, got {x}")
    if x <= SERIES_SWITCH:
        return _e1_series(x)
    return _e1_continued_fraction_scaled(x) * math.exp(-x)


def scaled_exp_integral_e1(x: float) -> float:
    """Return e^x * E1(x) without overflowing for large x."""
    if not x > 0:
        raise NumericsDomainError(f"E1 is defined for x > 0, got {x}")
    if x <= SERIES_SWITCH:
        return math.exp(x) * _e1_series(x)
    return _e1_continued_fraction_scaled(x)


def fading_log_moment(a: float, log_base: LogBase = 'bits') -> float:
    """
    Expected log(1 + a h) for a unit-mean exponential power gain h.

    Equals e^(1/a) E1(1/a) in nats.

    Args:
        a: Non-negative scale (received SNR per unit gain)
        log_base: 'bits' or 'nats'

    Returns:
        The integral of log(1 + a h) e^-h over h >= 0
    """
    if a < 0:
        raise NumericsDomainError(f"fading_log_moment needs a >= 0, got {a}")
    if a == 0:
        return 0.0
    inv = 1.0 / a
    if math.isinf(inv):
        # log(1 + a h) ~ a h for subnormal a
        return _convert(a, log_base)
    return _convert(scaled_exp_integral_e1(inv), log_base)


def fading_log_tail(threshold: float, log_base: LogBase = 'bits') -> float:
    """
    Integral of log(1 + h) e^-h over h > threshold.

    Integration by parts gives ln(1 + g) e^-g + e^-g * [e^(1+g) E1(1+g)].

    Args:
        threshold: Lower limit g >= 0 of the channel gain
        log_base: 'bits' or 'nats'

    Returns:
        The tail integral
    """
    if threshold < 0:
        raise NumericsDomainError(f"fading_log_tail needs threshold >= 0, got {threshold}")
    weight = math.exp(-threshold)
    nats = weight * (math.log1p(threshold) + scaled_exp_integral_e1(1.0 + threshold))
    return _convert(nats, log_base)


def expected_log_gain() -> float:
    """Integral of ln(h) e^-h over h > 0, i.e. minus the Euler-Mascheroni constant (nats)."""
    return -EULER_GAMMA

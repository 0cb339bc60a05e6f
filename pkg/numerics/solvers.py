"""
Series summation and scalar root finding used by the analytic bounds.

All functions are pure and safe to call from any number of threads.
"""
from dataclasses import dataclass
from typing import Callable

from util.errors import BracketError, ConvergenceError


@dataclass(frozen=True)
class Tolerance:
    """Stopping criteria shared by the iterative routines."""

    rel: float = 1e-10
    abs: float = 1e-12
    max_iter: int = 1_000_000

    def __post_init__(self):
        if not self.rel > 0:
            raise ValueError(f"Tolerance.rel must be positive, got {self.rel}")
        if not self.abs >= 0:
            raise ValueError(f"Tolerance.abs must be non-negative, got {self.abs}")
        if self.max_iter < 1:
            raise ValueError(f"Tolerance.max_iter must be at least 1, got {self.max_iter}")


DEFAULT_TOLERANCE = Tolerance()


def geometric_series_sum(term_fn: Callable[[int], float], ratio: float,
                         tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """
    Sum a non-negative series whose terms are eventually dominated geometrically.

    Terms are added from j = 0 until the tail certificate
    term_fn(J) * ratio / (1 - ratio) drops below tol.abs at some J >= 1 with
    term_fn(J) <= term_fn(J - 1), so a leading zero term such as j * r**j
    at j = 0 does not stop the sum early.

    Args:
        term_fn: Map from index j to the j-th term
        ratio: Geometric decay rate of the terms, in (0, 1)
        tol: Stopping criteria; tol.abs bounds the truncation error

    Returns:
        The truncated sum

    Raises:
        ValueError: If ratio is outside (0, 1)
        ConvergenceError: If tol.max_iter terms are added without the certificate holding
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")

    tail_factor = ratio / (1.0 - ratio)
    total = 0.0
    previous = float('inf')
    for j in range(tol.max_iter):
        term = term_fn(j)
        total += term
        if j >= 1 and term <= previous and term * tail_factor < tol.abs:
            return total
        previous = term

    raise ConvergenceError(
        f"Series did not meet tail bound {tol.abs} within {tol.max_iter} terms (partial sum {total})"
    )


def bisect_root(f: Callable[[float], float], lo: float, hi: float,
                tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """
    Find a root of a continuous function by bisection.

    Stops when |f(x)| <= tol.abs or the bracket is narrower than tol.abs, or
    when the bracket can no longer be halved in floating point. Deterministic
    for a given input.

    Args:
        f: Continuous function of one variable
        lo: Left end of the bracket
        hi: Right end of the bracket

    Returns:
        Approximate root

    Raises:
        BracketError: If f(lo) * f(hi) >= 0, including a root at either end
        ConvergenceError: If tol.max_iter halvings do not reach the tolerance
    """
    f_lo = f(lo)
    f_hi = f(hi)
    if not f_lo * f_hi < 0.0:
        raise BracketError(f"No sign change on [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")

    for _ in range(tol.max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) <= tol.abs or hi - lo < tol.abs:
            return mid
        # float resolution reached
        if mid == lo or mid == hi:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid

    raise ConvergenceError(f"Bisection did not converge within {tol.max_iter} iterations on [{lo}, {hi}]")

"""
Exception types raised across the simulator and bounds engine.

Library code raises these; the command line front end maps them to exit codes.
"""
from typing import List, Optional


class EhSimError(Exception):
    """Base class for every error raised by this package."""


class NumericsDomainError(EhSimError, ValueError):
    """Argument outside the domain of a special function."""


class BracketError(EhSimError, ValueError):
    """Root finder was given an interval without a sign change."""


class ConvergenceError(EhSimError, RuntimeError):
    """Iteration budget exhausted before the stopping criterion held."""


class DegenerateMedianError(EhSimError, ValueError):
    """The arrival median is zero, so median quantization is vacuous."""


class UnsupportedRegimeError(EhSimError, ValueError):
    """Parameters fall in a regime with no defined procedure (median above battery size)."""


class InsufficientDataError(EhSimError, ValueError):
    """Trace too short for the requested statistic."""


class ConfigError(EhSimError, ValueError):
    """Invalid run configuration or command line flags."""


class NeutralityViolation(EhSimError, RuntimeError):
    """
    A policy requested more energy than the battery holds.

    Args:
        slot: Slot index at which the request happened
        level: Battery level observed in that slot
        spend: Requested spend
        node: Which battery was violated ('tx' or 'rx')
        trace_tail: Last few (slot, level, spend) tuples before the violation
    """

    def __init__(self, slot: int, level: float, spend: float, node: str = 'tx',
                 trace_tail: Optional[List[tuple]] = None):
        self.slot = slot
        self.level = level
        self.spend = spend
        self.node = node
        self.trace_tail = list(trace_tail or [])
        super().__init__(
            f"Energy neutrality violated at {node} slot {slot}: spend {spend!r} > level {level!r}"
            + (f"; recent slots {self.trace_tail}" if self.trace_tail else "")
        )

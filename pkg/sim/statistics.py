"""
Estimators applied to simulated trajectories.
"""
import math
from typing import Sequence, Tuple

import numpy as np

from model.arrivals import ArrivalModel, arrival_second_moment
from util.errors import InsufficientDataError
from util.utils import logger

DEFAULT_BATCHES = 20


def replication_summary(means: Sequence[float]) -> Tuple[float, float]:
    """
    Grand mean and standard error across independent replications.

    A single replication has no spread estimate; its standard error is reported as 0.
    """
    values = np.asarray(means, dtype=float)
    if values.size == 0:
        raise InsufficientDataError("No replications to summarise")
    if values.size == 1:
        logger.warning("Single replication: standard error reported as 0")
        return float(values[0]), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def batch_means_stderr(values: np.ndarray, n_batches: int = DEFAULT_BATCHES) -> float:
    """Standard error of the mean of a correlated sequence from non-overlapping batch means."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 * n_batches:
        raise InsufficientDataError(f"Need at least {2 * n_batches} samples for {n_batches} batches, got {values.size}")
    size = values.size // n_batches
    batches = values[:size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(batches.std(ddof=1) / math.sqrt(n_batches))


def _check_fkg_length(trace: np.ndarray, lag: int) -> None:
    if lag < 1:
        raise ValueError(f"lag must be at least 1, got {lag}")
    if trace.size < 10 * lag:
        raise InsufficientDataError(f"Trace of {trace.size} slots is shorter than 10 x lag = {10 * lag}")


def estimate_fkg_terms(trace: Sequence[float], lag: int) -> Tuple[float, float]:
    """
    Both sides of E[P(t) P(t+lag)] >= (E[P])^2 from one post-warmup spend trace.

    Args:
        trace: Per-slot spend sequence
        lag: Slot separation, at least 1

    Returns:
        (lhs, rhs): time average of P(t) P(t+lag), and the squared time average of P(t)

    Raises:
        InsufficientDataError: If the trace is shorter than 10 x lag
    """
    spend = np.asarray(trace, dtype=float)
    _check_fkg_length(spend, lag)
    lhs = float(np.mean(spend[:-lag] * spend[lag:]))
    rhs = float(np.mean(spend)) ** 2
    return lhs, rhs


def fkg_standard_error(trace: Sequence[float], lag: int, n_batches: int = DEFAULT_BATCHES) -> float:
    """Batch-means estimate of the spread of lhs - rhs from estimate_fkg_terms."""
    spend = np.asarray(trace, dtype=float)
    _check_fkg_length(spend, lag)
    mean = float(np.mean(spend))
    # Centred lag products; their mean is lhs - rhs up to end effects
    centred = (spend[:-lag] - mean) * (spend[lag:] - mean)
    return batch_means_stderr(centred, n_batches)


def estimate_energy_second_moment_bound(trace: Sequence[float], arrivals: ArrivalModel,
                                        n_batches: int = DEFAULT_BATCHES) -> bool:
    """
    Whether the empirical E[P^2] stays within E[E^2] plus three standard errors.

    Short traces fall back to the plain comparison.
    """
    squared = np.square(np.asarray(trace, dtype=float))
    if squared.size == 0:
        return True
    empirical = float(squared.mean())
    try:
        sigma = batch_means_stderr(squared, n_batches)
    except InsufficientDataError:
        sigma = 0.0
    return empirical <= arrival_second_moment(arrivals) + 3.0 * sigma

"""
Closed-form throughput bounds for the energy harvesting fading channel.

All public outputs are in bits per slot. Series and fading integrals are
evaluated in nats and converted once through numerics.special.to_bits.
"""
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Optional, Tuple

from model.arrivals import (ArrivalModel, BernoulliArrivals, arrival_median, arrival_second_moment,
                            effective_arrival_probability)
from model.streams import ChannelModel
from numerics.solvers import DEFAULT_TOLERANCE, Tolerance, bisect_root, geometric_series_sum
from numerics.special import EULER_GAMMA, LN2, fading_log_moment, fading_log_tail, to_bits
from util.errors import DegenerateMedianError, UnsupportedRegimeError
from util.utils import logger

# Constants of the gap recursion, as printed (logs base 2)
GAP_RECURSION_OFFSET = 0.54
GAP_RECURSION_INVERSE_COEF = 1.0 / (2.0 * LN2)
# Gap of CFP at p = 1/2 and the median-quantization constant built on it
HALF_RATE_GAP = 1.41
MEDIAN_GAP_CONSTANT = 1.67

GAP_K_BRACKET = (1e-6, 1e9)
CHANNEL = ChannelModel()


@dataclass(frozen=True)
class BoundsReport:
    """Transmitter-only bounds for one arrival model and battery size."""

    arrivals: str
    b_max: float
    path: str
    t_ub: float
    t_lb: float
    gap_bound: Optional[float] = None
    k: Optional[float] = None
    branch: Optional[str] = None
    gap_limit: Optional[float] = None
    delta: Optional[float] = None
    storage_probability: Optional[float] = None
    t_lb_intermediate: Optional[float] = None

    def __post_init__(self):
        if self.t_lb < 0 or self.t_ub < self.t_lb - 1e-12:
            raise ValueError(f"Inconsistent bounds: t_ub={self.t_ub}, t_lb={self.t_lb}")
        if self.gap_bound is not None and self.gap_bound < 0:
            raise ValueError(f"Negative gap bound {self.gap_bound}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RxBoundsReport:
    """Bounds with energy harvesting at both ends."""

    p: float
    q: float
    b_max: float
    t_ub_rx: float
    t_lb_rx: float
    gamma_star: float
    t_ub_rx_cauchy_schwarz: Optional[float] = None
    t_lb_rx_simple: Optional[float] = None

    def __post_init__(self):
        if self.t_lb_rx < 0 or self.t_ub_rx < self.t_lb_rx - 1e-12:
            raise ValueError(f"Inconsistent receiver bounds: t_ub_rx={self.t_ub_rx}, t_lb_rx={self.t_lb_rx}")
        if self.gamma_star < 0:
            raise ValueError(f"Negative threshold {self.gamma_star}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class CapacityBracket:
    """Interval containing the Shannon capacity, given the constant c."""

    lower: float
    upper: float
    c_input: float

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError(f"Capacity bracket lower {self.lower} above upper {self.upper}")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _log2(x: float) -> float:
    return math.log2(x)


def transmitter_upper_bound(arrivals: ArrivalModel) -> float:
    """
    Upper bound on the throughput of any energy-neutral policy.

    Args:
        arrivals: Energy arrival model

    Returns:
        1/2 log2(1 + sqrt(2) sqrt(E[E^2])) in bits per slot
    """
    second_moment = arrival_second_moment(arrivals)
    return 0.5 * _log2(1.0 + math.sqrt(CHANNEL.gain_second_moment) * math.sqrt(second_moment))


def cfp_throughput(p_arrival: float, p_schedule: float, b_eff: float,
                   tol: Tolerance = DEFAULT_TOLERANCE) -> float:
    """
    Long-run throughput of the constant fraction policy by the renewal-reward theorem.

    Epochs occur independently with probability p_arrival per slot; j slots after
    an epoch the policy spends p_schedule (1 - p_schedule)^j b_eff.

    Args:
        p_arrival: Per-slot probability of an epoch
        p_schedule: Fraction parameter of the spending schedule
        b_eff: Energy available at every epoch
        tol: Series tolerance (absolute, in nats)

    Returns:
        Throughput in bits per slot with the 1/2 rate prefactor
    """
    if not 0.0 <= p_arrival <= 1.0 or not 0.0 < p_schedule <= 1.0:
        raise ValueError(f"Invalid CFP probabilities p_arrival={p_arrival}, p_schedule={p_schedule}")
    if b_eff < 0:
        raise ValueError(f"b_eff must be non-negative, got {b_eff}")
    if p_arrival == 0.0 or b_eff == 0.0:
        return 0.0

    def term(j: int) -> float:
        spend = p_schedule * (1.0 - p_schedule) ** j * b_eff
        return p_arrival * (1.0 - p_arrival) ** j * 0.5 * fading_log_moment(spend, 'nats')

    if p_arrival == 1.0:
        return to_bits(term(0))
    return to_bits(geometric_series_sum(term, 1.0 - p_arrival, tol))


def cfp_lower_bound_bernoulli(p: float, b_max: float) -> float:
    """
    Throughput of CFP under Bernoulli(p) arrivals that fill a battery of size b_max.

    Args:
        p: Arrival probability, 0 < p <= 1
        b_max: Battery size (energy per epoch)

    Returns:
        Sum over j of p(1-p)^j E[1/2 log2(1 + h p (1-p)^j b_max)]
    """
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    return cfp_throughput(p, p, b_max)


def gap_recursion_residual(k: float, p: float) -> float:
    """Left side minus right side of the recursion defining k; increasing in k."""
    scale = math.sqrt(2.0 * p) * k
    lhs = 0.5 * _log2(1.0 + scale)
    rhs = (GAP_RECURSION_OFFSET - 0.25 * _log2(p) + GAP_RECURSION_INVERSE_COEF / scale
           + (1.0 - p) / (2.0 * p) * _log2(1.0 / (1.0 - p)))
    return lhs - rhs


def solve_gap_constant(p: float) -> float:
    """
    Solve the gap recursion for k at arrival probability p.

    Args:
        p: Arrival probability in (0, 1)

    Returns:
        The unique positive root k

    Raises:
        ValueError: If p is outside (0, 1)
        BracketError: If no sign change exists on the search interval
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    lo, hi = GAP_K_BRACKET
    return bisect_root(lambda k: gap_recursion_residual(k, p), lo, hi)


def bernoulli_gap_bound(p: float) -> float:
    """Bound on T_ub - T_lb for CFP under Bernoulli(p) arrivals, in bits."""
    k = solve_gap_constant(p)
    return 0.5 * _log2(1.0 + math.sqrt(2.0 * p) * k)


def bernoulli_gap_limit(p: float) -> float:
    """
    Exact limit of T_ub - T_lb as b_max grows, for Bernoulli(p) arrivals.

    Uses E[log2 h] = -gamma / ln 2 for h ~ Exp(1). Where this exceeds
    bernoulli_gap_bound(p) the printed recursion constants are loose for very
    large batteries.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return (0.25 - 0.25 * _log2(p) + (1.0 - p) / (2.0 * p) * _log2(1.0 / (1.0 - p))
            + EULER_GAMMA / (2.0 * LN2))


def general_gap_bound(arrivals: ArrivalModel) -> float:
    """
    Gap bound of median-quantized CFP for arbitrary i.i.d. arrivals.

    Returns:
        1.67 + 1/4 log2(E[X^2] / delta^2) in bits

    Raises:
        DegenerateMedianError: If the median is zero
    """
    delta = arrival_median(arrivals)
    if delta <= 0:
        raise DegenerateMedianError(f"Median of {arrivals.describe()} is {delta}; the gap bound is vacuous")
    return MEDIAN_GAP_CONSTANT + 0.25 * _log2(arrival_second_moment(arrivals) / delta ** 2)


def cfp_general_intermediate_lb(delta: float) -> float:
    """Lower bound max(0, 1/2 log2(1 + delta) - 1.41) on quantized CFP throughput."""
    if delta < 0:
        raise ValueError(f"delta must be non-negative, got {delta}")
    return max(0.0, 0.5 * _log2(1.0 + delta) - HALF_RATE_GAP)


def _check_quantization_regime(arrivals: ArrivalModel, b_max: float) -> float:
    delta = arrival_median(arrivals)
    if delta <= 0:
        raise DegenerateMedianError(f"Median of {arrivals.describe()} is {delta}; quantized CFP stores nothing")
    if delta > b_max:
        raise UnsupportedRegimeError(f"Median {delta} exceeds battery size {b_max}; no procedure for this regime")
    return delta


def cfp_general_lower_bound(arrivals: ArrivalModel, b_max: float) -> float:
    """
    Analytic throughput of CFP run on median-quantized arrivals.

    The schedule uses p = 1/2 and quantum delta; epochs happen with the
    effective storage probability, which is at least 1/2.

    Raises:
        DegenerateMedianError: If the median is zero
        UnsupportedRegimeError: If the median exceeds b_max
    """
    delta = _check_quantization_regime(arrivals, b_max)
    p_store = effective_arrival_probability(arrivals, delta)
    return cfp_throughput(p_store, 0.5, delta)


def capacity_bracket(arrivals: ArrivalModel, c_input: float = 0.0) -> CapacityBracket:
    """
    Bracket the capacity between the quantized-CFP bound and T_ub.

    Args:
        arrivals: Energy arrival model
        c_input: Distribution-dependent constant c >= 0, supplied by the caller

    Returns:
        CapacityBracket with lower clamped at 0
    """
    if c_input < 0:
        raise ValueError(f"c_input must be non-negative, got {c_input}")
    if c_input == 0:
        logger.warning("capacity_bracket called with c=0; the lower end is optimistic")

    second_moment = arrival_second_moment(arrivals)
    if second_moment == 0:
        return CapacityBracket(lower=0.0, upper=0.0, c_input=c_input)

    upper = transmitter_upper_bound(arrivals)
    delta = arrival_median(arrivals)
    if delta <= 0:
        return CapacityBracket(lower=0.0, upper=upper, c_input=c_input)

    lower = cfp_general_intermediate_lb(delta) - 0.25 * _log2(second_moment / delta ** 2) - c_input
    return CapacityBracket(lower=min(max(0.0, lower), upper), upper=upper, c_input=c_input)


def rx_upper_bound_general(tx_arrivals: ArrivalModel, rx_arrivals: ArrivalModel,
                           rate_prefactor: float = 1.0) -> float:
    """
    Cauchy-Schwarz upper bound with harvesting at both ends.

    Returns:
        2 sqrt(E[Ert^2]) * prefactor * log2(1 + sqrt(2) sqrt(E[Et^2])); the
        printed form has prefactor 1. For unit Bernoulli(q) receiver arrivals
        this is 2 sqrt(q) log2(...).
    """
    tx_term = _log2(1.0 + math.sqrt(CHANNEL.gain_second_moment * arrival_second_moment(tx_arrivals)))
    return 2.0 * math.sqrt(arrival_second_moment(rx_arrivals)) * rate_prefactor * tx_term


def rx_simple_lower_bound(p: float, q: float, b_max: float, rate_prefactor: float = 0.5) -> float:
    """
    Throughput of CFP at the transmitter with an always-on-when-charged receiver.

    Args:
        p: Transmitter Bernoulli arrival probability
        q: Receiver Bernoulli arrival probability
        b_max: Transmitter battery size
        rate_prefactor: Rate scale; 1/2 as printed

    Returns:
        q times the CFP throughput
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"q must lie in [0, 1], got {q}")
    if q == 0.0:
        return 0.0
    return q * cfp_lower_bound_bernoulli(p, b_max) * (rate_prefactor / 0.5)


def unit_battery_rx_upper_bound(p: float, q: float, rate_prefactor: float = 1.0) -> Tuple[float, float]:
    """
    Upper bound for unit batteries at both ends and binary transmit power.

    Args:
        p: Transmitter arrival probability
        q: Receiver arrival probability

    Returns:
        (t_ub, gamma_star) with gamma_star = -ln(min(p, q)) and
        t_ub = min(p, q) * integral over h > gamma_star of log2(1 + h) e^-h
    """
    if not (0.0 < p <= 1.0 and 0.0 < q <= 1.0):
        raise ValueError(f"p and q must lie in (0, 1], got p={p}, q={q}")
    m = min(p, q)
    gamma_star = -math.log(m) if m < 1.0 else 0.0
    t_ub = m * rate_prefactor * fading_log_tail(gamma_star, 'bits')
    return t_ub, gamma_star


def ctp_lower_bound_guarantee(t_ub_rx: float) -> float:
    """Guaranteed floor for the common threshold policy: half the unit-battery upper bound."""
    if t_ub_rx < 0:
        raise ValueError(f"t_ub_rx must be non-negative, got {t_ub_rx}")
    return t_ub_rx / 2.0


def transmitter_bounds(arrivals: ArrivalModel, b_max: float) -> BoundsReport:
    """
    Collect every transmitter-only bound that applies to the arrival model.

    Bernoulli arrivals use the exact CFP value and the recursion gap, with
    arrivals larger than the battery clipped to it. Other models use median
    quantization.

    Raises:
        DegenerateMedianError: Non-Bernoulli arrivals with zero median
        UnsupportedRegimeError: Median larger than b_max
    """
    if b_max <= 0:
        raise ValueError(f"b_max must be positive, got {b_max}")

    if isinstance(arrivals, BernoulliArrivals):
        effective = BernoulliArrivals(p=arrivals.p, energy=min(arrivals.energy, b_max))
        t_ub = transmitter_upper_bound(effective)
        if arrivals.p == 0.0:
            return BoundsReport(arrivals=arrivals.describe(), b_max=b_max, path='bernoulli', t_ub=t_ub, t_lb=0.0)
        t_lb = cfp_lower_bound_bernoulli(arrivals.p, effective.energy)
        if arrivals.p == 1.0:
            return BoundsReport(arrivals=arrivals.describe(), b_max=b_max, path='bernoulli', t_ub=t_ub, t_lb=t_lb)

        k = solve_gap_constant(arrivals.p)
        gap = bernoulli_gap_bound(arrivals.p)
        limit = bernoulli_gap_limit(arrivals.p)
        branch = 'b_max_below_k' if effective.energy < k else 'b_max_above_k'
        if branch == 'b_max_above_k' and limit > gap:
            logger.warning(f"Gap bound {gap:.4f} at p={arrivals.p} is below the large-battery limit {limit:.4f}")
        return BoundsReport(arrivals=arrivals.describe(), b_max=b_max, path='bernoulli', t_ub=t_ub, t_lb=t_lb,
                            gap_bound=gap, k=k, branch=branch, gap_limit=limit)

    t_ub = transmitter_upper_bound(arrivals)
    if arrival_second_moment(arrivals) == 0:
        return BoundsReport(arrivals=arrivals.describe(), b_max=b_max, path='median_quantized', t_ub=0.0, t_lb=0.0)

    delta = _check_quantization_regime(arrivals, b_max)
    p_store = effective_arrival_probability(arrivals, delta)
    return BoundsReport(arrivals=arrivals.describe(), b_max=b_max, path='median_quantized', t_ub=t_ub,
                        t_lb=cfp_throughput(p_store, 0.5, delta), gap_bound=general_gap_bound(arrivals),
                        delta=delta, storage_probability=p_store,
                        t_lb_intermediate=cfp_general_intermediate_lb(delta))


def receiver_bounds(p: float, q: float, b_max: float = 1.0,
                    tx_arrivals: Optional[ArrivalModel] = None) -> RxBoundsReport:
    """
    Bounds with receiver harvesting: the unit-battery pair plus the general forms.

    Args:
        p: Transmitter Bernoulli arrival probability
        q: Receiver Bernoulli arrival probability (unit energy)
        b_max: Transmitter battery size for the general forms
        tx_arrivals: Transmitter arrivals for the Cauchy-Schwarz form; Bernoulli(p, b_max) by default
    """
    t_ub_rx, gamma_star = unit_battery_rx_upper_bound(p, q)
    tx = tx_arrivals if tx_arrivals is not None else BernoulliArrivals(p=p, energy=b_max)
    rx = BernoulliArrivals(p=q, energy=1.0)
    simple = rx_simple_lower_bound(p, q, b_max) if 0.0 < p <= 1.0 else 0.0
    return RxBoundsReport(p=p, q=q, b_max=b_max, t_ub_rx=t_ub_rx, t_lb_rx=ctp_lower_bound_guarantee(t_ub_rx),
                          gamma_star=gamma_star, t_ub_rx_cauchy_schwarz=rx_upper_bound_general(tx, rx),
                          t_lb_rx_simple=simple)

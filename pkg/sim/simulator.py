"""
Slotted-time Monte Carlo engine for the transmitter-only and two-sided systems.

Each replication owns four independent random streams (channel, transmitter
arrivals, receiver arrivals, policy coins). Within a replication the slot loop
is strictly sequential; replications run in-process or on a process pool and
are merged in replication order, so equal configurations give identical
results regardless of the worker count.
"""
import concurrent.futures
import math
import os
from dataclasses import asdict, dataclass, field
from itertools import repeat
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config.config import DEFAULT_REPS, DEFAULT_SEED, DEFAULT_SLOTS, DEFAULT_WORKERS, WARMUP_FRACTION
from model.arrivals import ArrivalModel, BernoulliArrivals, parse_arrivals
from model.battery import BatteryState
from model.streams import (CHANNEL_STREAM, POLICY_STREAM, RX_ARRIVAL_STREAM, TX_ARRIVAL_STREAM,
                           ChannelModel, RngStream)
from policies.policies import (CTP_GATE_MODES, CTP_LATCH_ONCE, CTP_RELATCH_AFTER_TX, CfpPolicy, CfpState, CtpState,
                               CtpTransmitter, GreedyPolicy, ReceivePolicy, SimpleReceiver, ThresholdReceiver,
                               TransmitPolicy, cfp_bmax_ge_E_adapter, cfp_general_wrap, ctp_threshold)
from sim.statistics import estimate_fkg_terms, fkg_standard_error, replication_summary
from util.errors import ConfigError, InsufficientDataError, NeutralityViolation
from util.utils import logger

MODES = ('tx_only', 'tx_rx')
POLICIES = ('cfp', 'greedy', 'ctp')
RECEIVERS = ('auto', 'simple', 'threshold')
RATE_PREFACTORS = {'half': 0.5, 'one': 1.0}
TRACE_COLUMNS = ['slot', 'h', 'spend', 'battery_tx', 'battery_rx', 'rate']
TRACE_TAIL = 5


@dataclass(frozen=True)
class SimConfig:
    """
    Everything that determines a simulation run.

    rate_prefactor 'auto' uses 1/2 for the transmitter-only rate and for CFP
    with a receiver, and 1 for the common threshold policy. warmup_slots None
    means the configured fraction of n_slots.
    """

    n_slots: int = DEFAULT_SLOTS
    n_replications: int = DEFAULT_REPS
    seed: int = DEFAULT_SEED
    mode: str = 'tx_only'
    policy: str = 'cfp'
    receiver: str = 'auto'
    arrivals: str = 'bernoulli:p=0.5,e=10'
    rx_arrivals: str = 'bernoulli:p=0.5,e=1'
    b_max: float = 10.0
    rx_b_max: float = 1.0
    rate_prefactor: str = 'auto'
    ctp_gate: str = CTP_LATCH_ONCE
    rx_on_cost: float = 1.0
    rx_gamma: Optional[float] = None
    warmup_slots: Optional[int] = None
    workers: int = DEFAULT_WORKERS
    keep_trace: bool = False
    fkg_lag: int = 1

    def __post_init__(self):
        if self.n_slots < 1:
            raise ConfigError(f"n_slots must be at least 1, got {self.n_slots}")
        if self.n_replications < 1:
            raise ConfigError(f"n_replications must be at least 1, got {self.n_replications}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.policy not in POLICIES:
            raise ConfigError(f"policy must be one of {POLICIES}, got {self.policy!r}")
        if self.receiver not in RECEIVERS:
            raise ConfigError(f"receiver must be one of {RECEIVERS}, got {self.receiver!r}")
        if self.rate_prefactor not in ('auto', *RATE_PREFACTORS):
            raise ConfigError(f"rate_prefactor must be auto, half or one, got {self.rate_prefactor!r}")
        if self.ctp_gate not in CTP_GATE_MODES:
            raise ConfigError(f"ctp_gate must be one of {CTP_GATE_MODES}, got {self.ctp_gate!r}")
        if not self.b_max > 0 or not self.rx_b_max > 0:
            raise ConfigError(f"Battery sizes must be positive, got b_max={self.b_max}, rx_b_max={self.rx_b_max}")
        if not 0 < self.rx_on_cost <= self.rx_b_max:
            raise ConfigError(f"rx_on_cost must lie in (0, rx_b_max], got {self.rx_on_cost}")
        if not 0 <= self.warmup < self.n_slots:
            raise ConfigError(f"warmup_slots must lie in [0, n_slots), got {self.warmup}")
        if self.workers < 0:
            raise ConfigError(f"workers must be non-negative, got {self.workers}")
        if self.fkg_lag < 0:
            raise ConfigError(f"fkg_lag must be non-negative, got {self.fkg_lag}")
        # Fail early on malformed arrival strings
        tx = parse_arrivals(self.arrivals)
        rx = parse_arrivals(self.rx_arrivals)
        if self.policy == 'ctp':
            if self.mode != 'tx_rx':
                raise ConfigError("The common threshold policy needs mode tx_rx")
            if not (isinstance(tx, BernoulliArrivals) and isinstance(rx, BernoulliArrivals)):
                raise ConfigError("The common threshold policy needs Bernoulli arrivals at both ends")
            if self.b_max != 1.0 or self.rx_b_max != 1.0:
                raise ConfigError(f"The common threshold policy needs unit batteries, got "
                                  f"b_max={self.b_max}, rx_b_max={self.rx_b_max}")

    @property
    def warmup(self) -> int:
        if self.warmup_slots is not None:
            return self.warmup_slots
        return int(WARMUP_FRACTION * self.n_slots)

    @property
    def n_workers(self) -> int:
        """Worker processes actually used; workers=0 means one per CPU."""
        return self.workers or os.cpu_count() or 1

    @property
    def prefactor(self) -> float:
        if self.rate_prefactor != 'auto':
            return RATE_PREFACTORS[self.rate_prefactor]
        return 1.0 if self.policy == 'ctp' else 0.5

    def tx_arrival_model(self) -> ArrivalModel:
        return parse_arrivals(self.arrivals)

    def rx_arrival_model(self) -> ArrivalModel:
        return parse_arrivals(self.rx_arrivals)

    def threshold(self) -> float:
        """Receiver threshold: rx_gamma if given, else -ln(min(p, q)) from the Bernoulli parameters."""
        if self.rx_gamma is not None:
            return self.rx_gamma
        tx = self.tx_arrival_model()
        rx = self.rx_arrival_model()
        p = tx.p if isinstance(tx, BernoulliArrivals) else 1.0
        q = rx.p if isinstance(rx, BernoulliArrivals) else 1.0
        return ctp_threshold(p, q)

    def to_dict(self) -> Dict[str, Any]:
        snapshot = asdict(self)
        snapshot['warmup_slots'] = self.warmup
        snapshot['prefactor'] = self.prefactor
        return snapshot


@dataclass
class ThroughputEstimate:
    """
    Time-averaged throughput over the post-warmup slots of every replication.

    mean and std_err are in bits per slot; std_err comes from the spread of
    replication means. extras carries epoch statistics, the joint-on fraction
    and the FKG terms of the first replication when they apply.
    """

    mean: float
    std_err: float
    n_effective: int
    extras: Dict[str, Any] = field(default_factory=dict)
    trace: Optional[pd.DataFrame] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.std_err < 0:
            raise ValueError(f"std_err must be non-negative, got {self.std_err}")
        joint = self.extras.get('joint_on_fraction')
        if joint is not None and not 0.0 <= joint <= 1.0:
            raise ValueError(f"joint_on_fraction must lie in [0, 1], got {joint}")

    def to_dict(self) -> Dict[str, Any]:
        return {'mean': self.mean, 'std_err': self.std_err, 'n_effective': self.n_effective,
                'extras': dict(self.extras)}


@dataclass
class ReplicationResult:
    """Sufficient statistics of one replication, merged by _merge."""

    replication: int
    mean: float
    epoch_count: int
    inter_epoch_sum: int
    inter_epoch_count: int
    joint_on_count: int = 0
    above_threshold_count: int = 0
    spend: Optional[np.ndarray] = None
    trace: Optional[pd.DataFrame] = None


def build_transmit_policy(cfg: SimConfig, replication: int) -> TransmitPolicy:
    """
    Fresh transmitter policy for one replication.

    Raises:
        DegenerateMedianError: CFP on non-Bernoulli arrivals with zero median
        UnsupportedRegimeError: CFP on non-Bernoulli arrivals whose median exceeds b_max
    """
    arrivals = cfg.tx_arrival_model()
    if cfg.policy == 'greedy':
        return GreedyPolicy()
    if cfg.policy == 'ctp':
        rx = cfg.rx_arrival_model()
        state = CtpState(gamma_star=cfg.threshold(), coin_prob=rx.p, gate_mode=cfg.ctp_gate)
        return CtpTransmitter(state, RngStream(cfg.seed, POLICY_STREAM, replication), unit=cfg.b_max)

    if arrivals.max_energy == 0:
        # No epoch ever happens; the battery stays empty
        return CfpPolicy(CfpState(j=0, effective_b_max=0.0, p_eff=1.0))
    if isinstance(arrivals, BernoulliArrivals):
        return CfpPolicy(CfpState(j=0, effective_b_max=cfp_bmax_ge_E_adapter(arrivals.energy, cfg.b_max),
                                  p_eff=arrivals.p))
    quantizer, state = cfp_general_wrap(arrivals, cfg.b_max)
    return CfpPolicy(state, quantizer)


def build_receive_policy(cfg: SimConfig) -> Optional[ReceivePolicy]:
    """Receiver rule for tx_rx mode; None in tx_only mode."""
    if cfg.mode == 'tx_only':
        return None
    kind = cfg.receiver
    if kind == 'auto':
        kind = 'threshold' if cfg.policy == 'ctp' else 'simple'
    if kind == 'simple':
        return SimpleReceiver(on_cost=cfg.rx_on_cost)
    return ThresholdReceiver(gamma=cfg.threshold(), on_cost=cfg.rx_on_cost)


def _inter_epoch_gaps(epochs: np.ndarray) -> Tuple[int, int]:
    slots = np.flatnonzero(epochs)
    if slots.size < 2:
        return 0, 0
    return int(slots[-1] - slots[0]), int(slots.size - 1)


def _policy_slots(policy: TransmitPolicy, receiver: Optional[ReceivePolicy], h_list: List[float],
                  tx_stored: List[float], rx_stored: Optional[List[float]], cfg: SimConfig, keep_levels: bool,
                  replication: int):
    n = len(h_list)
    two_sided = rx_stored is not None
    tx = BatteryState(level=0.0, capacity=cfg.b_max)
    rx = BatteryState(level=0.0, capacity=cfg.rx_b_max)
    decide = policy.decide
    advance = policy.advance
    tx_step = tx.step
    rx_step = rx.step
    rx_decide = receiver.decide if two_sided else None
    on_cost = cfg.rx_on_cost
    spends = [0.0] * n
    ons = [True] * n
    tx_levels: List[float] = []
    rx_levels: List[float] = []

    for t in range(n):
        h_t = h_list[t]
        if keep_levels:
            tx_levels.append(tx.level)
            rx_levels.append(rx.level if two_sided else math.nan)
        spend = decide(h_t, tx)
        harvest = tx_stored[t]
        try:
            tx_step(spend, harvest, t, 'tx')
            if two_sided:
                on = rx_decide(h_t, rx)
                rx_step(on_cost if on else 0.0, rx_stored[t], t, 'rx')
                ons[t] = on
        except NeutralityViolation as e:
            tail = [(s, spends[s]) for s in range(max(0, t - TRACE_TAIL), t)]
            logger.error(f"Replication {replication}: {str(e)}")
            raise NeutralityViolation(slot=e.slot, level=e.level, spend=e.spend, node=e.node, trace_tail=tail)
        advance(harvest > 0)
        spends[t] = spend
    return spends, ons, tx_levels, rx_levels


def _ctp_slots(policy: CtpTransmitter, receiver: ThresholdReceiver, h_list: List[float], tx_stored: List[float],
               rx_stored: List[float], cfg: SimConfig, keep_levels: bool):
    """
    Slot loop of the common threshold policy with every decision inlined.

    Mirrors ctp_tx_decide and threshold_receiver_decide step for step and draws
    the gate coins from the policy stream in the same order, so results equal
    the generic loop exactly.
    """
    n = len(h_list)
    state = policy.state
    coin = policy.rng.uniform
    unit = policy.unit
    gamma_tx = state.gamma_star
    coin_prob = state.coin_prob
    relatch = state.gate_mode == CTP_RELATCH_AFTER_TX
    gate_open = state.gate_open
    gamma_rx = receiver.gamma
    on_cost = receiver.on_cost
    tx_cap = cfg.b_max
    rx_cap = cfg.rx_b_max
    tx_level = 0.0
    rx_level = 0.0
    spends = [0.0] * n
    ons = [False] * n
    tx_levels: List[float] = []
    rx_levels: List[float] = []

    for t in range(n):
        h_t = h_list[t]
        if keep_levels:
            tx_levels.append(tx_level)
            rx_levels.append(rx_level)
        spend = 0.0
        if not gate_open and coin() < coin_prob:
            gate_open = True
        if gate_open and tx_level >= unit and h_t > gamma_tx:
            spend = unit
            if relatch:
                gate_open = False
        tx_level = tx_level - spend + tx_stored[t]
        if tx_level > tx_cap:
            tx_level = tx_cap
        on = rx_level >= on_cost and h_t > gamma_rx
        rx_level = rx_level - (on_cost if on else 0.0) + rx_stored[t]
        if rx_level > rx_cap:
            rx_level = rx_cap
        spends[t] = spend
        ons[t] = on

    state.gate_open = gate_open
    return spends, ons, tx_levels, rx_levels


def simulate_replication(cfg: SimConfig, replication: int) -> ReplicationResult:
    """
    Run one trajectory from empty batteries.

    Per slot both nodes observe h_t and their battery level, decide, spend,
    then harvest; overflow above capacity is lost.

    Raises:
        NeutralityViolation: If a policy asks for more energy than stored
    """
    n = cfg.n_slots
    two_sided = cfg.mode == 'tx_rx'
    policy = build_transmit_policy(cfg, replication)
    receiver = build_receive_policy(cfg)

    h = ChannelModel().sample(RngStream(cfg.seed, CHANNEL_STREAM, replication), n)
    raw = np.asarray(cfg.tx_arrival_model().sample(RngStream(cfg.seed, TX_ARRIVAL_STREAM, replication), n),
                     dtype=float)
    stored = policy.store(raw)
    epochs = stored > 0

    if two_sided:
        rx_stored = np.asarray(cfg.rx_arrival_model().sample(RngStream(cfg.seed, RX_ARRIVAL_STREAM, replication), n),
                               dtype=float).tolist()
    else:
        rx_stored = None

    h_list = h.tolist()
    keep_levels = cfg.keep_trace and replication == 0
    if isinstance(policy, CtpTransmitter) and isinstance(receiver, ThresholdReceiver):
        spends, ons, tx_levels, rx_levels = _ctp_slots(policy, receiver, h_list, stored.tolist(), rx_stored, cfg,
                                                       keep_levels)
    else:
        spends, ons, tx_levels, rx_levels = _policy_slots(policy, receiver, h_list, stored.tolist(), rx_stored, cfg,
                                                          keep_levels, replication)

    spend_arr = np.asarray(spends)
    on_arr = np.asarray(ons, dtype=bool)
    rate = cfg.prefactor * np.log2(1.0 + h * spend_arr)
    if two_sided:
        rate = np.where(on_arr, rate, 0.0)

    w = cfg.warmup
    inter_sum, inter_count = _inter_epoch_gaps(epochs[w:])
    result = ReplicationResult(replication=replication, mean=float(rate[w:].mean()),
                               epoch_count=int(epochs[w:].sum()), inter_epoch_sum=inter_sum,
                               inter_epoch_count=inter_count)
    if two_sided:
        result.joint_on_count = int(np.count_nonzero((spend_arr[w:] > 0) & on_arr[w:]))
        result.above_threshold_count = int(np.count_nonzero(h[w:] > cfg.threshold()))
    if replication == 0:
        result.spend = spend_arr[w:]
        if keep_levels:
            result.trace = pd.DataFrame({
                'slot': np.arange(w, n), 'h': h[w:], 'spend': spend_arr[w:],
                'battery_tx': np.asarray(tx_levels[w:]), 'battery_rx': np.asarray(rx_levels[w:]),
                'rate': rate[w:],
            }, columns=TRACE_COLUMNS)
    logger.debug(f"Replication {replication}: mean {result.mean:.6f} bits/slot, {result.epoch_count} epochs")
    return result


def _run_replications(cfg: SimConfig) -> List[ReplicationResult]:
    indices = range(cfg.n_replications)
    workers = min(cfg.n_workers, cfg.n_replications)
    if workers == 1:
        return [simulate_replication(cfg, r) for r in indices]
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(simulate_replication, repeat(cfg), indices))


def _merge(cfg: SimConfig, results: List[ReplicationResult]) -> ThroughputEstimate:
    results = sorted(results, key=lambda r: r.replication)
    mean, std_err = replication_summary([r.mean for r in results])
    post = cfg.n_slots - cfg.warmup
    n_effective = post * len(results)

    inter_count = sum(r.inter_epoch_count for r in results)
    extras: Dict[str, Any] = {
        'epoch_count': sum(r.epoch_count for r in results),
        'mean_inter_epoch_time': (sum(r.inter_epoch_sum for r in results) / inter_count) if inter_count else None,
        'total_slots': cfg.n_slots * len(results),
        'neutrality_violations': 0,
    }
    if cfg.mode == 'tx_rx':
        extras['joint_on_fraction'] = sum(r.joint_on_count for r in results) / n_effective
        fractions = [r.above_threshold_count / post for r in results]
        above_mean, above_err = replication_summary(fractions)
        extras['above_threshold_fraction'] = above_mean
        extras['above_threshold_stderr'] = above_err
        extras['gamma'] = cfg.threshold()

    first = results[0]
    if cfg.fkg_lag > 0 and first.spend is not None:
        try:
            lhs, rhs = estimate_fkg_terms(first.spend, cfg.fkg_lag)
            extras['fkg_lag'] = cfg.fkg_lag
            extras['fkg_lhs'] = lhs
            extras['fkg_rhs'] = rhs
            extras['fkg_sigma'] = fkg_standard_error(first.spend, cfg.fkg_lag)
        except InsufficientDataError as e:
            logger.debug(f"Skipping FKG terms: {str(e)}")

    return ThroughputEstimate(mean=mean, std_err=std_err, n_effective=n_effective, extras=extras,
                              trace=first.trace)


def run_tx_only(cfg: SimConfig) -> ThroughputEstimate:
    """
    Estimate the transmitter-only throughput of the configured policy.

    Raises:
        ConfigError: If cfg is not in tx_only mode
        NeutralityViolation: If any policy decision overdraws the battery
    """
    if cfg.mode != 'tx_only':
        raise ConfigError(f"run_tx_only needs mode tx_only, got {cfg.mode!r}")
    logger.info(f"Simulating {cfg.policy} on {cfg.arrivals}, b_max={cfg.b_max}: "
                f"{cfg.n_replications} x {cfg.n_slots} slots, seed {cfg.seed}")
    estimate = _merge(cfg, _run_replications(cfg))
    logger.info(f"Throughput {estimate.mean:.6f} +/- {estimate.std_err:.6f} bits/slot")
    return estimate


def run_tx_rx(cfg: SimConfig) -> ThroughputEstimate:
    """
    Estimate the throughput when the receiver also harvests; rate accrues only
    in slots where the transmitter spends and the receiver is on.

    Raises:
        ConfigError: If cfg is not in tx_rx mode
        NeutralityViolation: If either node overdraws its battery
    """
    if cfg.mode != 'tx_rx':
        raise ConfigError(f"run_tx_rx needs mode tx_rx, got {cfg.mode!r}")
    logger.info(f"Simulating {cfg.policy} with receiver arrivals {cfg.rx_arrivals}: "
                f"{cfg.n_replications} x {cfg.n_slots} slots, seed {cfg.seed}")
    estimate = _merge(cfg, _run_replications(cfg))
    logger.info(f"Throughput {estimate.mean:.6f} +/- {estimate.std_err:.6f} bits/slot, "
                f"joint on {estimate.extras['joint_on_fraction']:.4f}")
    return estimate


def run_simulation(cfg: SimConfig) -> ThroughputEstimate:
    """Dispatch on cfg.mode."""
    return run_tx_only(cfg) if cfg.mode == 'tx_only' else run_tx_rx(cfg)

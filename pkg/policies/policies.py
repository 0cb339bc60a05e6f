"""
Per-slot decision rules for the transmitter and the receiver.

A transmit policy is driven by the simulator in three steps each slot:
store() quantizes the raw arrivals (vectorised, memoryless), decide() picks
the spend from the observed gain and battery level, and advance() updates the
internal state once the slot's arrival is known. Policy objects are bound to a
single replication and never shared.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from model.arrivals import (ArrivalModel, arrival_median, effective_arrival_probability,
                            quantization_uses_ties)
from model.battery import BatteryState
from model.streams import RngStream
from util.errors import DegenerateMedianError, UnsupportedRegimeError

# Open question: how the CTP transmitter gate behaves after it first opens
CTP_LATCH_ONCE = 'latch_once'
CTP_RELATCH_AFTER_TX = 'relatch_after_tx'
CTP_GATE_MODES = (CTP_LATCH_ONCE, CTP_RELATCH_AFTER_TX)


@dataclass
class CfpState:
    """
    State of the constant fraction policy.

    j counts slots since the last epoch; the next spend is
    p_eff (1 - p_eff)^j effective_b_max.
    """

    j: int = 0
    effective_b_max: float = 0.0
    p_eff: float = 0.5

    def __post_init__(self):
        if self.j < 0:
            raise ValueError(f"j must be non-negative, got {self.j}")
        if not 0.0 < self.p_eff <= 1.0:
            raise ValueError(f"p_eff must lie in (0, 1], got {self.p_eff}")
        if self.effective_b_max < 0:
            raise ValueError(f"effective_b_max must be non-negative, got {self.effective_b_max}")

    def scheduled_spend(self) -> float:
        return self.p_eff * (1.0 - self.p_eff) ** self.j * self.effective_b_max


@dataclass
class CtpState:
    """Transmitter side of the common threshold policy."""

    gamma_star: float
    coin_prob: float
    gate_open: bool = False
    gate_mode: str = CTP_LATCH_ONCE

    def __post_init__(self):
        if self.gate_mode not in CTP_GATE_MODES:
            raise ValueError(f"gate_mode must be one of {CTP_GATE_MODES}, got {self.gate_mode!r}")
        if not 0.0 <= self.coin_prob <= 1.0:
            raise ValueError(f"coin_prob must lie in [0, 1], got {self.coin_prob}")


@dataclass(frozen=True)
class MedianQuantizer:
    """Stores delta when an arrival clears the median, nothing otherwise."""

    delta: float
    include_ties: bool
    storage_probability: float

    def quantize(self, arrivals: np.ndarray) -> np.ndarray:
        hits = arrivals >= self.delta if self.include_ties else arrivals > self.delta
        return np.where(hits, self.delta, 0.0)


def cfp_decide(state: CfpState, battery: BatteryState) -> float:
    """Spend the scheduled fraction, never more than the battery holds. Ignores the channel."""
    return min(battery.level, state.scheduled_spend())


def cfp_bmax_ge_E_adapter(E: float, b_max: float) -> float:
    """Battery size CFP should assume: the arrival size E when the real battery is larger."""
    return min(E, b_max)


def cfp_general_wrap(arrivals: ArrivalModel, b_max: float) -> Tuple[MedianQuantizer, CfpState]:
    """
    Reduce arbitrary i.i.d. arrivals to Bernoulli(1/2) quanta of size delta = median.

    Args:
        arrivals: Arrival model
        b_max: Real battery size

    Returns:
        The quantizer and a CFP state with p_eff = 1/2 and effective_b_max = delta

    Raises:
        DegenerateMedianError: If delta is zero
        UnsupportedRegimeError: If delta exceeds b_max
    """
    delta = arrival_median(arrivals)
    if delta <= 0:
        raise DegenerateMedianError(f"Median of {arrivals.describe()} is {delta}; nothing would be stored")
    if delta > b_max:
        raise UnsupportedRegimeError(f"Median {delta} exceeds battery size {b_max}")
    quantizer = MedianQuantizer(delta=delta, include_ties=quantization_uses_ties(arrivals, delta),
                                storage_probability=effective_arrival_probability(arrivals, delta))
    return quantizer, CfpState(j=0, effective_b_max=delta, p_eff=0.5)


def threshold_receiver_decide(battery: BatteryState, h: float, gamma: float, on_cost: float = 1.0) -> bool:
    """Receiver is on iff it holds the on-cost and the gain is strictly above gamma."""
    return battery.level >= on_cost and h > gamma


def ctp_tx_decide(state: CtpState, battery: BatteryState, h: float, rng: RngStream,
                  unit: float = 1.0) -> float:
    """
    Transmitter rule of the common threshold policy (binary power, unit battery).

    While the gate is closed a Bernoulli(coin_prob) coin is flipped; heads opens
    it. With the gate open, transmit one unit iff the battery is full and
    h > gamma_star. In relatch mode the gate closes again after a transmission.
    """
    if not state.gate_open:
        if rng.uniform() < state.coin_prob:
            state.gate_open = True
        else:
            return 0.0
    if battery.level >= unit and h > state.gamma_star:
        if state.gate_mode == CTP_RELATCH_AFTER_TX:
            state.gate_open = False
        return unit
    return 0.0


class TransmitPolicy(ABC):
    """Transmitter decision rule bound to one replication."""

    name = 'policy'

    def store(self, arrivals: np.ndarray) -> np.ndarray:
        """Energy actually put into the battery for each raw arrival."""
        return arrivals

    @abstractmethod
    def decide(self, h: float, battery: BatteryState) -> float:
        """Spend for this slot."""

    def advance(self, epoch: bool) -> None:
        """Update internal state after the slot; epoch is True when energy was stored."""


class CfpPolicy(TransmitPolicy):
    """Constant fraction policy, optionally on median-quantized arrivals."""

    name = 'cfp'

    def __init__(self, state: CfpState, quantizer: Optional[MedianQuantizer] = None):
        self.state = state
        self.quantizer = quantizer
        self._decay = 1.0 - state.p_eff
        self._scheduled = state.scheduled_spend()

    def store(self, arrivals: np.ndarray) -> np.ndarray:
        if self.quantizer is None:
            return arrivals
        return self.quantizer.quantize(arrivals)

    def decide(self, h: float, battery: BatteryState) -> float:
        level = battery.level
        return level if level < self._scheduled else self._scheduled

    def advance(self, epoch: bool) -> None:
        if epoch:
            self.state.j = 0
            self._scheduled = self.state.p_eff * self.state.effective_b_max
        else:
            self.state.j += 1
            self._scheduled *= self._decay


class GreedyPolicy(TransmitPolicy):
    """Baseline: spend the whole battery every slot."""

    name = 'greedy'

    def decide(self, h: float, battery: BatteryState) -> float:
        return battery.level


class CtpTransmitter(TransmitPolicy):
    """Transmitter half of the common threshold policy."""

    name = 'ctp'

    def __init__(self, state: CtpState, rng: RngStream, unit: float = 1.0):
        self.state = state
        self.rng = rng
        self.unit = unit

    def decide(self, h: float, battery: BatteryState) -> float:
        return ctp_tx_decide(self.state, battery, h, self.rng, self.unit)


class ReceivePolicy(ABC):
    """Receiver on/off rule; being on costs on_cost energy."""

    name = 'receiver'

    def __init__(self, on_cost: float = 1.0):
        self.on_cost = on_cost

    @abstractmethod
    def decide(self, h: float, battery: BatteryState) -> bool:
        """Whether to stay on this slot."""


class SimpleReceiver(ReceivePolicy):
    """On whenever it holds enough energy."""

    name = 'simple'

    def decide(self, h: float, battery: BatteryState) -> bool:
        return battery.level >= self.on_cost


class ThresholdReceiver(ReceivePolicy):
    """On when charged and the gain is strictly above gamma."""

    name = 'threshold'

    def __init__(self, gamma: float, on_cost: float = 1.0):
        super().__init__(on_cost)
        self.gamma = gamma

    def decide(self, h: float, battery: BatteryState) -> bool:
        return threshold_receiver_decide(battery, h, self.gamma, self.on_cost)


def ctp_threshold(p: float, q: float) -> float:
    """Common threshold gamma* = -ln(min(p, q)); infinite when either side never harvests."""
    m = min(p, q)
    if not 0.0 <= m <= 1.0:
        raise ValueError(f"min(p, q) must lie in [0, 1], got {m}")
    if m == 0.0:
        return math.inf
    return -math.log(m) if m < 1.0 else 0.0

"""
Seeded random streams and the Rayleigh fading channel.

Every consumer of randomness (channel, transmitter arrivals, receiver arrivals,
policy coins) owns its own stream, derived from (seed, replication, stream_id)
through numpy's SeedSequence so replications never share a generator.
"""
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

# Stream layout of one replication
CHANNEL_STREAM = 0
TX_ARRIVAL_STREAM = 1
RX_ARRIVAL_STREAM = 2
POLICY_STREAM = 3


@dataclass
class RngStream:
    """
    Reproducible random stream identified by (seed, stream_id, replication).

    Args:
        seed: 64-bit master seed
        stream_id: Consumer within a replication (see the *_STREAM constants)
        replication: Replication index
    """

    seed: int
    stream_id: int
    replication: int = 0
    generator: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.replication, self.stream_id))
        self.generator = np.random.default_rng(sequence)

    def uniform(self, size: Optional[int] = None) -> Union[float, np.ndarray]:
        return self.generator.random(size)

    def bernoulli(self, prob: float, size: Optional[int] = None) -> Union[bool, np.ndarray]:
        return self.uniform(size) < prob


@dataclass(frozen=True)
class ChannelModel:
    """Fading power gain h_t, i.i.d. Exp(1) per slot (Rayleigh amplitude)."""

    kind: str = 'rayleigh'

    def __post_init__(self):
        if self.kind != 'rayleigh':
            raise ValueError(f"Only the Rayleigh (Exp(1) power) channel is supported, got {self.kind!r}")

    @property
    def gain_second_moment(self) -> float:
        return 2.0

    def exceedance(self, threshold: float) -> float:
        """P(h > threshold)."""
        return float(np.exp(-threshold)) if threshold > 0 else 1.0

    def sample(self, rng: RngStream, size: Optional[int] = None) -> Union[float, np.ndarray]:
        return rng.generator.exponential(1.0, size)

"""
I.i.d. per-slot energy arrival models with closed-form moments and quantiles.

Arrival models are immutable and can be shared between replications.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from model.streams import RngStream
from util.errors import ConfigError

# Slack for probabilities that should sum to 1 or hit 0.5 exactly (1/3 + 1/3 + 1/3)
PROB_SLACK = 1e-12


class ArrivalModel(ABC):
    """Distribution of the energy harvested in one slot."""

    @abstractmethod
    def sample(self, rng: RngStream, size: Optional[int] = None) -> Union[float, np.ndarray]:
        """Draw i.i.d. arrivals."""

    @abstractmethod
    def mean(self) -> float:
        """E[X]."""

    @abstractmethod
    def second_moment(self) -> float:
        """E[X^2]."""

    @abstractmethod
    def cdf(self, x: float) -> float:
        """P(X <= x)."""

    @abstractmethod
    def prob_at_least(self, x: float) -> float:
        """P(X >= x)."""

    @abstractmethod
    def median(self) -> float:
        """
        Smallest d with F(d) >= 1/2. When that is 0 and F(0) is exactly 1/2,
        the next atom is returned instead, so Bernoulli(1/2, E) has median E.
        """

    @abstractmethod
    def describe(self) -> str:
        """Spec string that parse_arrivals turns back into this model."""

    def prob_above(self, x: float) -> float:
        """P(X > x)."""
        return 1.0 - self.cdf(x)

    @property
    def max_energy(self) -> float:
        return float('inf')


@dataclass(frozen=True)
class BernoulliArrivals(ArrivalModel):
    """E_t = energy with probability p, else 0."""

    p: float
    energy: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Bernoulli p must lie in [0, 1], got {self.p}")
        if not self.energy > 0:
            raise ValueError(f"Bernoulli energy must be positive, got {self.energy}")

    def sample(self, rng: RngStream, size: Optional[int] = None) -> Union[float, np.ndarray]:
        hits = rng.bernoulli(self.p, size)
        if size is None:
            return self.energy if hits else 0.0
        return np.where(hits, self.energy, 0.0)

    def mean(self) -> float:
        return self.p * self.energy

    def second_moment(self) -> float:
        return self.p * self.energy ** 2

    def cdf(self, x: float) -> float:
        if x < 0:
            return 0.0
        return 1.0 if x >= self.energy else 1.0 - self.p

    def prob_at_least(self, x: float) -> float:
        if x <= 0:
            return 1.0
        return self.p if x <= self.energy else 0.0

    def median(self) -> float:
        return self.energy if self.p >= 0.5 - PROB_SLACK else 0.0

    def describe(self) -> str:
        return f"bernoulli:p={self.p:g},e={self.energy:g}"

    @property
    def max_energy(self) -> float:
        return self.energy if self.p > 0 else 0.0


@dataclass(frozen=True)
class UniformArrivals(ArrivalModel):
    """E_t ~ Uniform(lo, hi)."""

    lo: float
    hi: float

    def __post_init__(self):
        if not 0.0 <= self.lo < self.hi:
            raise ValueError(f"Uniform arrivals need 0 <= lo < hi, got lo={self.lo}, hi={self.hi}")

    def sample(self, rng: RngStream, size: Optional[int] = None) -> Union[float, np.ndarray]:
        return rng.generator.uniform(self.lo, self.hi, size)

    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def second_moment(self) -> float:
        return (self.lo ** 2 + self.lo * self.hi + self.hi ** 2) / 3.0

    def cdf(self, x: float) -> float:
        return float(np.clip((x - self.lo) / (self.hi - self.lo), 0.0, 1.0))

    def prob_at_least(self, x: float) -> float:
        return 1.0 - self.cdf(x)

    def median(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def describe(self) -> str:
        return f"uniform:{self.lo:g},{self.hi:g}"

    @property
    def max_energy(self) -> float:
        return self.hi


@dataclass(frozen=True)
class DiscreteArrivals(ArrivalModel):
    """E_t takes values[i] with probability probs[i]."""

    values: Tuple[float, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        probs = tuple(float(q) for q in self.probs)
        if not values or len(values) != len(probs):
            raise ValueError("Discrete arrivals need equally long, non-empty values and probs")
        if any(v < 0 for v in values):
            raise ValueError(f"Arrival energies must be non-negative, got {values}")
        if any(not 0.0 <= q <= 1.0 for q in probs):
            raise ValueError(f"Probabilities must lie in [0, 1], got {probs}")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError(f"Probabilities must sum to 1, got {sum(probs)}")
        order = np.argsort(values, kind='stable')
        object.__setattr__(self, 'values', tuple(values[i] for i in order))
        object.__setattr__(self, 'probs', tuple(probs[i] for i in order))

    def sample(self, rng: RngStream, size: Optional[int] = None) -> Union[float, np.ndarray]:
        probs = np.asarray(self.probs)
        draws = rng.generator.choice(np.asarray(self.values), size=size, p=probs / probs.sum())
        return float(draws) if size is None else draws

    def mean(self) -> float:
        return float(np.dot(self.values, self.probs))

    def second_moment(self) -> float:
        return float(np.dot(np.square(self.values), self.probs))

    def cdf(self, x: float) -> float:
        return float(min(1.0, sum(q for v, q in zip(self.values, self.probs) if v <= x)))

    def prob_at_least(self, x: float) -> float:
        return float(min(1.0, sum(q for v, q in zip(self.values, self.probs) if v >= x)))

    def median(self) -> float:
        cumulative = 0.0
        for i, (v, q) in enumerate(zip(self.values, self.probs)):
            cumulative += q
            if cumulative >= 0.5 - PROB_SLACK:
                # A zero atom holding exactly half the mass ties with the next atom
                if v == 0.0 and cumulative <= 0.5 + PROB_SLACK:
                    for w, r in zip(self.values[i + 1:], self.probs[i + 1:]):
                        if r > 0:
                            return w
                return v
        return self.values[-1]

    def describe(self) -> str:
        values = '|'.join(f"{v:g}" for v in self.values)
        probs = '|'.join(f"{q:g}" for q in self.probs)
        return f"discrete:values={values},probs={probs}"

    @property
    def max_energy(self) -> float:
        return max(v for v, q in zip(self.values, self.probs) if q > 0)


def constant_arrivals(energy: float) -> DiscreteArrivals:
    """Deterministic arrivals of a fixed size every slot."""
    return DiscreteArrivals(values=(energy,), probs=(1.0,))


def sample_arrival(model: ArrivalModel, rng: RngStream) -> float:
    """Draw one arrival."""
    return float(model.sample(rng))


def arrival_second_moment(model: ArrivalModel) -> float:
    """Exact E[E_t^2]."""
    return model.second_moment()


def arrival_median(model: ArrivalModel) -> float:
    """Median quantum used to reduce arbitrary arrivals to Bernoulli(1/2)."""
    return model.median()


def effective_arrival_probability(model: ArrivalModel, delta: float) -> float:
    """
    Probability that an arrival is stored as one quantum of size delta.

    An arrival counts when X > delta; when an atom sits at delta and that
    leaves less than one half, X >= delta counts instead, so the result is
    never below 1/2 for delta = median.
    """
    above = model.prob_above(delta)
    if above >= 0.5 - PROB_SLACK:
        return above
    return model.prob_at_least(delta)


def quantization_uses_ties(model: ArrivalModel, delta: float) -> bool:
    """True when arrivals equal to delta are stored (see effective_arrival_probability)."""
    return model.prob_above(delta) < 0.5 - PROB_SLACK


def _parse_kv(body: str, spec: str) -> dict:
    fields = {}
    for part in body.split(','):
        if '=' not in part:
            raise ConfigError(f"Expected key=value in arrival spec {spec!r}, got {part!r}")
        key, value = part.split('=', 1)
        fields[key.strip().lower()] = value.strip()
    return fields


def parse_arrivals(spec: str) -> ArrivalModel:
    """
    Build an arrival model from its spec string.

    Accepted forms: 'bernoulli:p=0.5,e=10', 'uniform:0,10',
    'discrete:values=1|2|3,probs=0.2|0.3|0.5', 'constant:5'.

    Raises:
        ConfigError: If the string cannot be parsed or describes an invalid model
    """
    if ':' not in spec:
        raise ConfigError(f"Arrival spec {spec!r} must look like kind:parameters")
    kind, body = spec.split(':', 1)
    kind = kind.strip().lower()
    try:
        if kind == 'bernoulli':
            fields = _parse_kv(body, spec)
            return BernoulliArrivals(p=float(fields['p']), energy=float(fields['e']))
        if kind == 'uniform':
            lo, hi = (float(v) for v in body.split(','))
            return UniformArrivals(lo=lo, hi=hi)
        if kind == 'discrete':
            fields = _parse_kv(body, spec)
            values = tuple(float(v) for v in fields['values'].split('|'))
            probs = tuple(float(q) for q in fields['probs'].split('|'))
            return DiscreteArrivals(values=values, probs=probs)
        if kind == 'constant':
            return constant_arrivals(float(body))
    except ConfigError:
        raise
    except (KeyError, ValueError) as e:
        raise ConfigError(f"Invalid arrival spec {spec!r}: {str(e)}")
    raise ConfigError(f"Unknown arrival kind {kind!r} in {spec!r}")

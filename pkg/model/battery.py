from dataclasses import dataclass, replace

from util.errors import NeutralityViolation


@dataclass(slots=True)
class BatteryState:
    """
    Stored energy of one node, clamped to its capacity.

    Per slot the policy observes the level, spends, then the harvest is added
    and anything above capacity is lost: B_t = min(B_max, B_{t-1} - P(t-1) + E_{t-1}).
    The textbook recursion carries an extra factor 1{P_h(t-1) >= B_{t-1}}, which
    would zero out every feasible spend; it is read as a typo and left out.
    """

    level: float
    capacity: float

    def __post_init__(self):
        if not self.capacity >= 0:
            raise ValueError(f"Battery capacity must be non-negative, got {self.capacity}")
        if not 0.0 <= self.level <= self.capacity:
            raise ValueError(f"Battery level {self.level} outside [0, {self.capacity}]")

    def step(self, spend: float, harvest: float, slot: int = -1, node: str = 'tx') -> float:
        """
        Apply one slot in place.

        Args:
            spend: Energy used in this slot, at most the current level
            harvest: Energy arriving at the end of the slot
            slot: Slot index, only used in the error message
            node: Node label, only used in the error message

        Returns:
            Energy lost to overflow

        Raises:
            NeutralityViolation: If spend exceeds the level
        """
        if spend > self.level or spend < 0:
            raise NeutralityViolation(slot=slot, level=self.level, spend=spend, node=node)
        raw = self.level - spend + harvest
        if raw > self.capacity:
            self.level = self.capacity
            return raw - self.capacity
        self.level = raw
        return 0.0


def battery_step(b: BatteryState, spend: float, harvest: float) -> BatteryState:
    """Return the battery after one slot, leaving b untouched."""
    after = replace(b)
    after.step(spend, harvest)
    return after

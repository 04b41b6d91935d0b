from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True, slots=True)
class Fragment:
    packet_id: str
    index: int
    count: int
    units: int
    """Payload units carried by this fragment."""


def fragment_packet(packet_id: str, payload_units: int, fragment_size: int) -> list[Fragment]:
    """
    Split a payload into `ceil(payload_units / fragment_size)` fragments in order.

    Every fragment carries `fragment_size` units except possibly a smaller last one.

    Raises:
        ValueError: If either size is below one unit.
    """
    if payload_units < 1 or fragment_size < 1:
        raise ValueError(
            f"Cannot fragment {payload_units} units into fragments of {fragment_size}"
        )
    count = -(-payload_units // fragment_size)
    return [
        Fragment(
            packet_id,
            index,
            count,
            min(fragment_size, payload_units - index * fragment_size),
        )
        for index in range(count)
    ]


@dataclass(slots=True)
class Reassembly:
    """Fragments of one packet received so far at the sink."""

    count: int
    received: set[int] = field(default_factory=set[int])

    def add(self, index: int) -> bool:
        """Record a fragment; returns False for a duplicate."""
        if not 0 <= index < self.count:
            raise ValueError(f"Fragment index {index} out of range for {self.count} fragments")
        if index in self.received:
            return False
        self.received.add(index)
        return True

    @property
    def complete(self) -> bool:
        return len(self.received) == self.count

    @property
    def missing(self) -> tuple[int, ...]:
        return tuple(i for i in range(self.count) if i not in self.received)

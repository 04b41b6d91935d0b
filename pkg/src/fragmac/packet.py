from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum

from fragmac.sim.engine import SimTime


class Priority(StrEnum):
    NORMAL = "normal"
    URGENT = "urgent"


@dataclass(frozen=True, slots=True)
class Packet:
    """An application payload waiting for delivery to the sink."""

    packet_id: str
    source: int
    priority: Priority
    payload_units: int
    t_gen: SimTime
    """Generation time."""

    @property
    def urgent(self) -> bool:
        return self.priority is Priority.URGENT

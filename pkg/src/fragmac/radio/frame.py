from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum

from fragmac.packet import Packet, Priority
from fragmac.sim.engine import SimTime


class FrameKind(StrEnum):
    RTS = "RTS"
    CTS = "CTS"
    DATA = "DATA"
    ACK = "ACK"
    GTS_REQUEST = "GTS_REQUEST"


@dataclass(frozen=True, slots=True)
class Airtime:
    """Frame duration model: a fixed per-frame overhead plus a per-payload-unit cost."""

    overhead: SimTime
    per_unit: SimTime

    def __call__(self, payload_units: int = 0) -> SimTime:
        return self.overhead + payload_units * self.per_unit


@dataclass(frozen=True, slots=True, kw_only=True)
class Frame:
    """An on-air unit. Fields after `airtime` are protocol metadata."""

    kind: FrameKind
    sender: int
    receiver: int | None
    """None means broadcast."""
    channel: int = 0
    payload_units: int = 0
    airtime: SimTime

    priority: Priority = Priority.NORMAL
    packet: Packet | None = None
    index: int = 0
    """Fragment index within the packet."""
    count: int = 1
    """Fragment count of the packet."""
    last: bool = False
    """Last DATA frame of a burst; the receiver answers it with an ACK."""
    nav: SimTime = 0
    """Reservation announced to overhearing nodes, counted from the frame end."""
    frag_size: int | None = None
    """Fragment size granted with a CTS."""
    missing: tuple[int, ...] | None = None
    """Fragment indices the sink still lacks; None when the packet is unknown to it."""
    requests: tuple[Packet, ...] = ()
    """Packets announced by a GTS request."""

    @property
    def packet_id(self) -> str | None:
        return self.packet.packet_id if self.packet is not None else None

    @property
    def urgent(self) -> bool:
        return self.priority is Priority.URGENT

from __future__ import annotations

from dataclasses import dataclass, field

from fragmac.constant import TICKS_PER_SECOND
from fragmac.exception import ContractViolation
from fragmac.packet import Packet, Priority
from fragmac.sim.engine import SimTime
from fragmac.utils.logging import logger


@dataclass(slots=True)
class ClassMetrics:
    delay_samples: list[SimTime] = field(default_factory=list[SimTime])
    """Generation-to-reassembly delays in ticks."""
    delivered_units: int = 0
    generated_units: int = 0
    generated_count: int = 0
    delivered_count: int = 0
    dropped_count: int = 0
    in_flight: dict[str, Packet] = field(default_factory=dict[str, Packet])
    """Generated packets neither delivered nor dropped yet."""


class MetricsRecord:
    """Per-class accumulators of one run."""

    def __init__(self) -> None:
        self.classes: dict[Priority, ClassMetrics] = {p: ClassMetrics() for p in Priority}
        self._delivered: set[str] = set()

    def __getitem__(self, priority: Priority) -> ClassMetrics:
        return self.classes[priority]

    def record_generated(self, packet: Packet) -> None:
        m = self.classes[packet.priority]
        if packet.packet_id in m.in_flight or packet.packet_id in self._delivered:
            raise ContractViolation(f"Packet {packet.packet_id} generated twice")
        m.generated_count += 1
        m.generated_units += packet.payload_units
        m.in_flight[packet.packet_id] = packet

    def record_delivery(self, packet: Packet, t_rx: SimTime) -> None:
        """
        Record a fully reassembled packet.

        Raises:
            ContractViolation: On a second completion of one packet, or a non-positive delay.
        """
        m = self.classes[packet.priority]
        if packet.packet_id in self._delivered:
            logger.error("Duplicate completion of {packet_id}", packet_id=packet.packet_id)
            raise ContractViolation(f"Packet {packet.packet_id} completed twice")
        delay = t_rx - packet.t_gen
        if delay <= 0:
            raise ContractViolation(f"Packet {packet.packet_id} delivered with delay {delay}")
        if m.in_flight.pop(packet.packet_id, None) is None:
            raise ContractViolation(f"Packet {packet.packet_id} delivered but never generated")
        self._delivered.add(packet.packet_id)
        m.delay_samples.append(delay)
        m.delivered_units += packet.payload_units
        m.delivered_count += 1

    def record_drop(self, packet: Packet) -> None:
        """
        Count a packet given up by its sender.

        A packet the sink already completed stays delivered.
        """
        if packet.packet_id in self._delivered:
            logger.debug(
                "Sender gave up on {packet_id} after it was delivered", packet_id=packet.packet_id
            )
            return
        m = self.classes[packet.priority]
        if m.in_flight.pop(packet.packet_id, None) is None:
            raise ContractViolation(f"Packet {packet.packet_id} dropped but not in flight")
        m.dropped_count += 1

    def is_delivered(self, packet_id: str) -> bool:
        return packet_id in self._delivered

    def in_flight_count(self, priority: Priority) -> int:
        return len(self.classes[priority].in_flight)

    def conserved(self, priority: Priority) -> bool:
        m = self.classes[priority]
        return m.generated_count == m.delivered_count + m.dropped_count + len(m.in_flight)


def avg_delay(metrics: MetricsRecord, priority: Priority) -> float | None:
    """Mean delay in seconds, or None when nothing was delivered."""
    samples = metrics[priority].delay_samples
    if not samples:
        return None
    return sum(samples) / len(samples) / TICKS_PER_SECOND


def throughput(metrics: MetricsRecord, priority: Priority, horizon: float) -> float:
    """Delivered payload units per second over a horizon given in seconds."""
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    return metrics[priority].delivered_units / horizon


def normalized_throughput(metrics: MetricsRecord, priority: Priority) -> float | None:
    """Delivered over generated payload units, or None when nothing was generated."""
    m = metrics[priority]
    if m.generated_units == 0:
        return None
    return m.delivered_units / m.generated_units

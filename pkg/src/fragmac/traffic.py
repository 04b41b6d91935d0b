from __future__ import annotations

from dataclasses import dataclass

from fragmac.config import ArrivalProcess, TrafficConfig
from fragmac.constant import TICKS_PER_SECOND
from fragmac.packet import Packet, Priority
from fragmac.sim.engine import Action, Event, EventKind, SimTime, Simulator
from fragmac.sim.rng import Purpose, RngStream


@dataclass(frozen=True, slots=True)
class TrafficProfile:
    """Two-class traffic of one source node."""

    node: int
    normal_rate: float
    """Packets per second."""
    urgent_rate: float
    normal_payload: int
    urgent_payload: int
    arrival: ArrivalProcess = ArrivalProcess.POISSON

    def __post_init__(self) -> None:
        if self.normal_rate < 0 or self.urgent_rate < 0:
            raise ValueError("Traffic rates must be non-negative")
        if self.normal_payload < 1 or self.urgent_payload < 1:
            raise ValueError("Payloads must be at least one unit")

    def rate(self, priority: Priority) -> float:
        return self.urgent_rate if priority is Priority.URGENT else self.normal_rate

    def payload(self, priority: Priority) -> int:
        return self.urgent_payload if priority is Priority.URGENT else self.normal_payload


def traffic_profile(traffic: TrafficConfig, node: int) -> TrafficProfile:
    override = traffic.overrides.get(node)

    def pick[T](name: str, default: T) -> T:
        value = getattr(override, name) if override is not None else None
        return default if value is None else value

    return TrafficProfile(
        node=node,
        normal_rate=pick("normal_rate", traffic.normal_rate),
        urgent_rate=pick("urgent_rate", traffic.urgent_rate),
        normal_payload=pick("normal_payload", traffic.normal_payload),
        urgent_payload=pick("urgent_payload", traffic.urgent_payload),
        arrival=pick("arrival", traffic.arrival),
    )


def arrival_times(
    rate: float, horizon: SimTime, process: ArrivalProcess, stream: RngStream
) -> list[SimTime]:
    """
    Arrival instants in `[0, horizon)`.

    Poisson arrivals have exponential inter-arrival times with mean 1/rate; periodic
    arrivals are evenly spaced after a random phase within the first period.
    """
    if rate <= 0:
        return []
    times: list[SimTime] = []
    match process:
        case ArrivalProcess.POISSON:
            mean = 1.0 / rate
            t = stream.exponential(mean)
            while (tick := round(t * TICKS_PER_SECOND)) < horizon:
                times.append(tick)
                t += stream.exponential(mean)
        case ArrivalProcess.PERIODIC:
            period = round(TICKS_PER_SECOND / rate)
            tick = int(stream.uniform() * period)
            while tick < horizon:
                times.append(tick)
                tick += period
    return times


_PURPOSES = {Priority.NORMAL: Purpose.TRAFFIC_NORMAL, Priority.URGENT: Purpose.TRAFFIC_URGENT}
_TAGS = {Priority.NORMAL: "N", Priority.URGENT: "U"}


def generate_arrivals(
    profile: TrafficProfile, horizon: SimTime, sim: Simulator, on_arrival: Action | None = None
) -> list[Event]:
    """
    Build the `PacketArrival` events of one node up to `horizon`, ordered by time.

    Each class draws from its own stream keyed by the node only, so every protocol run
    with the same seed sees the same arrivals.
    """
    events: list[Event] = []
    for priority in (Priority.URGENT, Priority.NORMAL):
        stream = sim.rng(profile.node, _PURPOSES[priority])
        times = arrival_times(profile.rate(priority), horizon, profile.arrival, stream)
        for k, t in enumerate(times):
            packet = Packet(
                packet_id=f"{profile.node}:{_TAGS[priority]}{k}",
                source=profile.node,
                priority=priority,
                payload_units=profile.payload(priority),
                t_gen=t,
            )
            events.append(Event(t, EventKind.PACKET_ARRIVAL, profile.node, on_arrival, packet))
    events.sort(key=lambda e: e.time)
    return events

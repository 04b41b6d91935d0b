from __future__ import annotations

import sys
from dataclasses import dataclass

from fragmac.config import ProtocolName, Scenario, seconds_to_ticks
from fragmac.constant import SINK_ID
from fragmac.mac.dyfrag import DyFragSink, FragController
from fragmac.mac.frog import FrogSink, FrogSource
from fragmac.mac.idsme import IdsmeCoordinator, IdsmeSource
from fragmac.metrics import MetricsRecord
from fragmac.packet import Packet, Priority
from fragmac.radio.medium import Medium
from fragmac.share import get_share_dir
from fragmac.sim.engine import Event, EventKind, RunTrace, SimTime, Simulator
from fragmac.traffic import generate_arrivals, traffic_profile
from fragmac.utils.logging import logger

type Source = FrogSource | IdsmeSource
type Sink = FrogSink | IdsmeCoordinator


def enable_logging(debug: bool = False, verbose: bool = False) -> None:
    logger.remove()  # Remove default stderr handler
    logger.enable("fragmac")
    logger.add(
        get_share_dir() / "logs" / "fragmac.log",
        level="TRACE" if debug else "INFO",
        rotation="06:00",
        retention="10 days",
    )
    if verbose:
        logger.add(sys.stderr, level="INFO")


@dataclass(frozen=True, slots=True)
class RunResult:
    scenario: Scenario
    metrics: MetricsRecord
    trace: RunTrace


class Simulation:
    """
    One run of a scenario. Owns its simulator, medium, nodes and metrics.

    Traffic is either generated from the scenario with `schedule_traffic` or scripted with
    `inject`; both go through the same arrival path.
    """

    def __init__(
        self,
        scenario: Scenario,
        *,
        record_events: bool = True,
        keep_log: bool = False,
    ):
        self.scenario = scenario
        self.sim = Simulator(scenario.seed, record_events=record_events)
        self.metrics = MetricsRecord()
        self.medium = Medium(
            self.sim,
            scenario.placements(),
            tx_range=scenario.radio.tx_range,
            p_edge=scenario.radio.p_edge,
            num_channels=scenario.num_channels,
            keep_log=keep_log,
        )
        self.controller: FragController | None = None
        self.sink: Sink
        self.sources: dict[int, Source] = {}
        self._build()

    def _build(self) -> None:
        s = self.scenario
        sim, medium, timing, metrics = self.sim, self.medium, s.timing, self.metrics
        nodes = range(1, s.sources + 1)
        match s.protocol:
            case ProtocolName.FROG:
                self.sink = FrogSink(
                    SINK_ID, sim, medium, timing, metrics, fragment_size=s.frog.fragment_size
                )
                for n in nodes:
                    self.sources[n] = FrogSource(
                        n, sim, medium, timing, metrics, fragment_size=s.frog.fragment_size
                    )
            case ProtocolName.DYFRAG:
                self.controller = FragController(
                    sim,
                    f_min=s.dyfrag.f_min,
                    f_max=s.f_max,
                    t_assess=seconds_to_ticks(s.dyfrag.t_assess),
                )
                self.sink = DyFragSink(
                    SINK_ID, sim, medium, timing, metrics, controller=self.controller
                )
                for n in nodes:
                    self.sources[n] = FrogSource(
                        n, sim, medium, timing, metrics, fragment_size=s.f_max
                    )
                self.controller.start()
            case ProtocolName.IDSME:
                coordinator = IdsmeCoordinator(
                    SINK_ID, sim, medium, timing, metrics, config=s.idsme
                )
                for n in nodes:
                    source = IdsmeSource(n, sim, medium, timing, metrics, config=s.idsme)
                    coordinator.register(source)
                    self.sources[n] = source
                coordinator.start()
                self.sink = coordinator

    @property
    def horizon(self) -> SimTime:
        return self.scenario.horizon_ticks

    def schedule_traffic(self) -> int:
        """Schedule the generated arrivals of every source; returns their number."""
        count = 0
        for node in self.sources:
            profile = traffic_profile(self.scenario.traffic, node)
            for event in generate_arrivals(profile, self.horizon, self.sim, self._on_arrival):
                self.sim.schedule(event)
                count += 1
        logger.debug("Scheduled {count} arrivals", count=count)
        return count

    def inject(
        self,
        source: int,
        priority: Priority,
        at: SimTime,
        *,
        payload_units: int | None = None,
        packet_id: str | None = None,
    ) -> Packet:
        """Schedule one scripted arrival."""
        traffic = self.scenario.traffic
        if payload_units is None:
            urgent = priority is Priority.URGENT
            payload_units = traffic.urgent_payload if urgent else traffic.normal_payload
        packet = Packet(
            packet_id=packet_id or f"{source}:{priority}@{at}",
            source=source,
            priority=priority,
            payload_units=payload_units,
            t_gen=at,
        )
        self.sim.at(at, EventKind.PACKET_ARRIVAL, source, self._on_arrival, packet)
        return packet

    def _on_arrival(self, event: Event) -> None:
        packet: Packet = event.payload
        self.metrics.record_generated(packet)
        self.sources[packet.source].enqueue(packet)

    def run(self, until: SimTime | None = None) -> RunResult:
        trace = self.sim.run_until(self.horizon if until is None else until)
        return RunResult(self.scenario, self.metrics, trace)


def simulate(scenario: Scenario, *, record_events: bool = False) -> RunResult:
    """Run a scenario with its generated traffic up to the horizon."""
    simulation = Simulation(scenario, record_events=record_events)
    arrivals = simulation.schedule_traffic()
    result = simulation.run()
    logger.info(
        "{protocol} run with {sources} sources, seed {seed}: {arrivals} arrivals, "
        "{events} events, digest {digest}",
        protocol=scenario.protocol,
        sources=scenario.sources,
        seed=scenario.seed,
        arrivals=arrivals,
        events=result.trace.count,
        digest=result.trace.digest,
    )
    return result

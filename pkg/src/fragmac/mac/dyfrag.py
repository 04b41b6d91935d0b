from __future__ import annotations

from dataclasses import dataclass
from enum import StrEnum

from fragmac.config import TimingConfig
from fragmac.constant import SINK_ID
from fragmac.mac.frog import FrogSink
from fragmac.metrics import MetricsRecord
from fragmac.packet import Packet
from fragmac.radio.medium import Medium
from fragmac.sim.engine import EventHandle, EventKind, SimTime, Simulator
from fragmac.utils.logging import logger


class SizeChange(StrEnum):
    URGENT = "urgent"
    QUIET_CYCLE = "quiet_cycle"
    BUSY_CYCLE = "busy_cycle"
    """A cycle that saw urgent traffic ended; the size is kept."""


@dataclass(frozen=True, slots=True)
class SizeRecord:
    time: SimTime
    reason: SizeChange
    size: int


class FragController:
    """
    Dynamic fragment size driven by assessment cycles.

    The size halves on every observed urgent packet and doubles at the end of a cycle
    without urgent traffic, staying on the ladder `f_min * 2**k` within `[f_min, f_max]`.
    Each urgent observation restarts the cycle.
    """

    def __init__(
        self,
        sim: Simulator,
        *,
        f_min: int,
        f_max: int,
        t_assess: SimTime,
        node: int = SINK_ID,
    ):
        if f_min < 1 or f_max < f_min or t_assess <= 0:
            raise ValueError(f"Invalid controller bounds: [{f_min}, {f_max}], T_A={t_assess}")
        self._sim = sim
        self.f_min = f_min
        self.f_max = f_max
        self.t_assess = t_assess
        self.node = node
        self.current = f_max
        self.urgent_seen = False
        self.history: list[SizeRecord] = []
        self._cycle: EventHandle | None = None

    def start(self) -> None:
        self._restart_cycle()

    def current_fragment_size(self) -> int:
        return self.current

    def on_urgent_arrival(self) -> None:
        self.current = max(self.current // 2, self.f_min)
        self.urgent_seen = True
        self._log(SizeChange.URGENT)
        self._restart_cycle()

    def on_cycle_end(self) -> None:
        if self.urgent_seen:
            self._log(SizeChange.BUSY_CYCLE)
        else:
            self.current = min(self.current * 2, self.f_max)
            self._log(SizeChange.QUIET_CYCLE)
        self.urgent_seen = False
        self._restart_cycle()

    def _restart_cycle(self) -> None:
        self._sim.cancel(self._cycle)
        self._cycle = self._sim.after(
            self.t_assess,
            EventKind.ASSESSMENT_CYCLE_END,
            self.node,
            lambda _: self.on_cycle_end(),
        )

    def _log(self, reason: SizeChange) -> None:
        self.history.append(SizeRecord(self._sim.now, reason, self.current))
        logger.trace("Fragment size {size} after {reason}", size=self.current, reason=reason)


class DyFragSink(FrogSink):
    """FROG-MAC sink that grants with the controller's current fragment size."""

    def __init__(
        self,
        node: int,
        sim: Simulator,
        medium: Medium,
        timing: TimingConfig,
        metrics: MetricsRecord,
        *,
        controller: FragController,
    ):
        super().__init__(node, sim, medium, timing, metrics, fragment_size=controller.f_max)
        self.controller = controller
        self._urgent_counted: set[str] = set()

    def fragment_size(self) -> int:
        return self.controller.current_fragment_size()

    def _on_urgent_seen(self, packet: Packet) -> None:
        if packet.packet_id in self._urgent_counted:
            return
        self._urgent_counted.add(packet.packet_id)
        self.controller.on_urgent_arrival()

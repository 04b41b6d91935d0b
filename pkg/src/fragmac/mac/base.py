from __future__ import annotations

from abc import ABC, abstractmethod
from collections.abc import Callable
from typing import Any

from fragmac.config import TimingConfig
from fragmac.metrics import MetricsRecord
from fragmac.radio.frame import Frame, FrameKind
from fragmac.radio.medium import Medium, Verdict
from fragmac.sim.engine import EventHandle, EventKind, SimTime, Simulator
from fragmac.sim.rng import Purpose
from fragmac.utils.logging import logger


class MacNode(ABC):
    """The MAC entity of one node, attached to the shared medium on construction."""

    def __init__(
        self,
        node: int,
        sim: Simulator,
        medium: Medium,
        timing: TimingConfig,
        metrics: MetricsRecord,
    ):
        self.node = node
        self._sim = sim
        self._medium = medium
        self._timing = timing
        self._airtime = timing.airtime
        self._metrics = metrics
        self._rng = sim.rng(node, Purpose.MAC)
        medium.attach(node, self)

    @abstractmethod
    def on_tx_end(self, frame: Frame) -> None: ...

    @abstractmethod
    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None: ...

    def _frame(
        self,
        kind: FrameKind,
        receiver: int | None,
        *,
        channel: int = 0,
        payload_units: int = 0,
        **meta: Any,
    ) -> Frame:
        return Frame(
            kind=kind,
            sender=self.node,
            receiver=receiver,
            channel=channel,
            payload_units=payload_units,
            airtime=self._airtime(payload_units),
            **meta,
        )

    def _check_transmit(self, frame: Frame) -> None:
        """Raise `ContractViolation` if this node must not send `frame` now."""

    def _transmit(self, frame: Frame) -> None:
        self._check_transmit(frame)
        self._medium.transmit(frame)

    def _timer(self, delay: SimTime, callback: Callable[[], None]) -> EventHandle:
        return self._sim.after(delay, EventKind.TIMER_EXPIRY, self.node, lambda _: callback())

    def _send_after(self, delay: SimTime, frame: Frame) -> EventHandle:
        """Put `frame` on the air after `delay`, typically a turnaround."""

        def start(_: object) -> None:
            if self._medium.is_transmitting(self.node, frame.channel):
                logger.debug(
                    "Node {node} still on air, {kind} skipped", node=self.node, kind=frame.kind
                )
                return
            self._transmit(frame)

        return self._sim.after(delay, EventKind.FRAME_TX_START, self.node, start)

from __future__ import annotations

import hashlib
import heapq
import struct
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any

from fragmac.exception import ContractViolation
from fragmac.sim.rng import Purpose, RngStream
from fragmac.utils.logging import logger

type SimTime = int
"""Virtual time in ticks (1 tick = 1 µs)."""


class EventKind(StrEnum):
    PACKET_ARRIVAL = "PacketArrival"
    FRAME_TX_START = "FrameTxStart"
    FRAME_TX_END = "FrameTxEnd"
    FRAME_RX_END = "FrameRxEnd"
    TIMER_EXPIRY = "TimerExpiry"
    ASSESSMENT_CYCLE_END = "AssessmentCycleEnd"
    SUPERFRAME_BOUNDARY = "SuperframeBoundary"


_KIND_CODES = {kind: code for code, kind in enumerate(EventKind)}

type Action = Callable[[Event], None]


@dataclass(slots=True, eq=False)
class Event:
    """A timestamped occurrence. `seq` is assigned by the simulator when scheduled."""

    time: SimTime
    kind: EventKind
    target: int
    """Node the event belongs to."""
    action: Action | None = None
    payload: Any = None
    seq: int = -1
    fired: bool = False
    cancelled: bool = False


@dataclass(frozen=True, slots=True)
class EventHandle:
    event: Event

    @property
    def pending(self) -> bool:
        return not (self.event.fired or self.event.cancelled)


@dataclass(frozen=True, slots=True)
class TraceRecord:
    time: SimTime
    seq: int
    kind: EventKind
    target: int


@dataclass(slots=True)
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list[TraceRecord])
    """Processed events in order. Empty when event retention is disabled."""
    count: int = 0
    digest: str = ""
    """16 hex digits of a 64-bit hash over (time, seq, kind, target) of every processed event."""


class Simulator:
    """Single-threaded discrete-event engine with a virtual clock and seeded random streams."""

    def __init__(self, master_seed: int, *, record_events: bool = True):
        self.master_seed = master_seed
        self._now: SimTime = 0
        self._seq = 0
        self._queue: list[tuple[SimTime, int, Event]] = []
        self._streams: dict[tuple[int, Purpose], RngStream] = {}
        self._record_events = record_events
        self._records: list[TraceRecord] = []
        self._count = 0
        self._hasher = hashlib.blake2b(digest_size=8)

    @property
    def now(self) -> SimTime:
        return self._now

    def rng(self, node: int, purpose: Purpose) -> RngStream:
        """Get the random stream for `(node, purpose)`, creating it on first use."""
        key = (node, purpose)
        stream = self._streams.get(key)
        if stream is None:
            stream = self._streams[key] = RngStream(self.master_seed, node, purpose)
        return stream

    def schedule(self, event: Event) -> EventHandle:
        """
        Queue an event.

        Raises:
            ContractViolation: When the event lies in the past.
        """
        if event.time < self._now:
            logger.error(
                "Scheduling {kind} for node {target} at {time} before clock {now}",
                kind=event.kind,
                target=event.target,
                time=event.time,
                now=self._now,
            )
            raise ContractViolation(
                f"cannot schedule {event.kind} at t={event.time} when clock is {self._now}"
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._queue, (event.time, event.seq, event))
        return EventHandle(event)

    def at(
        self,
        time: SimTime,
        kind: EventKind,
        target: int,
        action: Action | None = None,
        payload: Any = None,
    ) -> EventHandle:
        return self.schedule(Event(time, kind, target, action, payload))

    def after(
        self,
        delay: SimTime,
        kind: EventKind,
        target: int,
        action: Action | None = None,
        payload: Any = None,
    ) -> EventHandle:
        return self.schedule(Event(self._now + delay, kind, target, action, payload))

    def cancel(self, handle: EventHandle | None) -> bool:
        """Make a pending event inert. Returns False if it already fired or was cancelled."""
        if handle is None or not handle.pending:
            return False
        handle.event.cancelled = True
        return True

    def run_until(self, t_end: SimTime) -> RunTrace:
        """Process every event with `time <= t_end` in (time, seq) order, then set the clock."""
        if t_end < self._now:
            raise ContractViolation(f"cannot run until t={t_end} when clock is {self._now}")
        queue = self._queue
        while queue and queue[0][0] <= t_end:
            _, _, event = heapq.heappop(queue)
            if event.cancelled:
                continue
            self._now = event.time
            event.fired = True
            self._record(event)
            if event.action is not None:
                event.action(event)
        self._now = t_end
        return self.trace

    @property
    def trace(self) -> RunTrace:
        return RunTrace(
            records=list(self._records),
            count=self._count,
            digest=self._hasher.hexdigest(),
        )

    def _record(self, event: Event) -> None:
        self._count += 1
        self._hasher.update(
            struct.pack("<qqBq", event.time, event.seq, _KIND_CODES[event.kind], event.target)
        )
        if self._record_events:
            self._records.append(TraceRecord(event.time, event.seq, event.kind, event.target))

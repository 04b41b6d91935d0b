from __future__ import annotations

from collections import deque
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

from fragmac.config import IdsmeConfig, TimingConfig
from fragmac.constant import SINK_ID
from fragmac.exception import ConfigError
from fragmac.mac.base import MacNode
from fragmac.metrics import MetricsRecord
from fragmac.packet import Packet, Priority
from fragmac.radio.frame import Frame, FrameKind
from fragmac.radio.medium import Medium, Verdict
from fragmac.sim.engine import EventHandle, EventKind, SimTime, Simulator
from fragmac.sim.rng import RngStream
from fragmac.utils.logging import logger

type Cell = tuple[int, int]
"""(CFP slot index, channel)."""


@dataclass(frozen=True, slots=True)
class GtsEntry:
    owner: int
    priority: Priority
    packet_id: str


@dataclass(slots=True)
class Superframe:
    """
    The slot grid: `cap_slots` of contention followed by `cfp_slots` of guaranteed slots.

    GTS cells are addressed by CFP slot index (0 is the first CFP slot) and channel.
    """

    cap_slots: int
    cfp_slots: int
    slot_duration: SimTime
    num_channels: int
    cap_min: int
    cap_max: int
    cap_initial: int
    """The configured CAP length that adaptation relaxes back to."""
    gts_table: dict[Cell, GtsEntry] = field(default_factory=dict[Cell, GtsEntry])

    @property
    def total_slots(self) -> int:
        return self.cap_slots + self.cfp_slots

    @property
    def length(self) -> SimTime:
        return self.total_slots * self.slot_duration

    @property
    def cap_duration(self) -> SimTime:
        return self.cap_slots * self.slot_duration

    @property
    def grantable_cells(self) -> int:
        return self.cfp_slots * self.num_channels

    def cfp_offset(self, slot: int) -> SimTime:
        """Start of a CFP slot relative to the superframe start."""
        return (self.cap_slots + slot) * self.slot_duration

    def clear_gts(self) -> None:
        self.gts_table.clear()


def build_superframe(config: IdsmeConfig) -> Superframe:
    """
    Raises:
        ConfigError: If a slot or channel count is below one, or the initial CAP is
            outside its bounds.
    """
    if config.cap_slots < 1 or config.cfp_slots < 1 or config.channels < 1:
        raise ConfigError(
            f"Invalid superframe: cap={config.cap_slots}, cfp={config.cfp_slots}, "
            f"channels={config.channels}"
        )
    if not 1 <= config.cap_min <= config.cap_slots <= config.cap_max:
        raise ConfigError(
            f"CAP {config.cap_slots} outside bounds [{config.cap_min}, {config.cap_max}]"
        )
    return Superframe(
        cap_slots=config.cap_slots,
        cfp_slots=config.cfp_slots,
        slot_duration=config.slot_us,
        num_channels=config.channels,
        cap_min=config.cap_min,
        cap_max=config.cap_max,
        cap_initial=config.cap_slots,
    )


@dataclass(frozen=True, slots=True)
class GtsRequest:
    node: int
    priority: Priority
    pending_units: int
    packet: Packet

    def __post_init__(self) -> None:
        if self.pending_units <= 0:
            raise ValueError("A GTS request must carry pending payload")


@dataclass(frozen=True, slots=True)
class GtsGrant:
    node: int
    priority: Priority
    packet: Packet
    slot: int
    channel: int
    length: int
    """Consecutive slots on `channel` starting at `slot`."""

    @property
    def cell(self) -> Cell:
        return self.slot, self.channel


@dataclass(slots=True)
class Allocation:
    grants: list[GtsGrant] = field(default_factory=list[GtsGrant])
    deferred: list[GtsRequest] = field(default_factory=list[GtsRequest])

    @property
    def urgent_deferred(self) -> bool:
        return any(r.priority is Priority.URGENT for r in self.deferred)


def allocate_gts(
    requests: Sequence[GtsRequest],
    sf: Superframe,
    slots_needed: Callable[[GtsRequest], int],
) -> Allocation:
    """
    Place requests into free GTS cells, urgent first, then normal, each in request order.

    Cells are searched slot by slot, lowest channel first. Normal grants only start after
    every urgent grant made here. A node never gets two grants overlapping in time.
    Requests that do not fit are returned as deferred.
    """
    allocation = Allocation()
    owner_slots: dict[int, set[int]] = {}
    for (slot, _), entry in sf.gts_table.items():
        owner_slots.setdefault(entry.owner, set()).add(slot)

    order = {id(r): i for i, r in enumerate(requests)}
    last_urgent: Cell | None = None
    for priority in (Priority.URGENT, Priority.NORMAL):
        after = last_urgent if priority is Priority.NORMAL else None
        for request in (r for r in requests if r.priority is priority):
            n = slots_needed(request)
            taken = owner_slots.setdefault(request.node, set())
            cell = _find_cells(sf, n, taken, after)
            if cell is None:
                allocation.deferred.append(request)
                continue
            slot, channel = cell
            for s in range(slot, slot + n):
                entry = GtsEntry(request.node, priority, request.packet.packet_id)
                sf.gts_table[s, channel] = entry
                taken.add(s)
            allocation.grants.append(
                GtsGrant(request.node, priority, request.packet, slot, channel, n)
            )
            if priority is Priority.URGENT and (last_urgent is None or cell > last_urgent):
                last_urgent = cell
    allocation.deferred.sort(key=lambda r: order[id(r)])
    return allocation


def _find_cells(sf: Superframe, n: int, taken: set[int], after: Cell | None) -> Cell | None:
    for slot in range(sf.cfp_slots - n + 1):
        span = range(slot, slot + n)
        if any(s in taken for s in span):
            continue
        for channel in range(sf.num_channels):
            if after is not None and (slot, channel) <= after:
                continue
            if all((s, channel) not in sf.gts_table for s in span):
                return slot, channel
    return None


def adapt_cap(sf: Superframe, *, urgent_deferred: bool, collisions: int) -> int:
    """
    Move one slot between CAP and CFP and return the new CAP length.

    Deferred urgent requests shrink the CAP; otherwise two or more collision events in the
    last CAP grow it. A superframe with neither moves the CAP one slot back towards
    `cap_initial`. The CAP stays within `[cap_min, cap_max]` and the superframe length is
    kept.
    """
    total = sf.total_slots
    cap = sf.cap_slots
    if urgent_deferred:
        cap = max(cap - 1, sf.cap_min)
    elif collisions >= 2:
        cap = min(cap + 1, sf.cap_max)
    elif cap != sf.cap_initial:
        cap += 1 if cap < sf.cap_initial else -1
    if cap != sf.cap_slots:
        logger.debug("CAP {old} -> {new} slots", old=sf.cap_slots, new=cap)
    sf.cap_slots, sf.cfp_slots = cap, total - cap
    for cell in [c for c in sf.gts_table if c[0] >= sf.cfp_slots]:
        del sf.gts_table[cell]
    return cap


def draw_cap_backoff(stream: RngStream, priority: Priority, config: IdsmeConfig) -> int:
    """Backoff in units, drawn from the contention window of the class."""
    cw = config.cw_urgent if priority is Priority.URGENT else config.cw_normal
    return stream.integers(cw)


class IdsmeSource(MacNode):
    """
    Source side of the i-DSME baseline.

    Ungranted packets are announced to the coordinator with a GTS request sent by slotted
    CSMA in the CAP. Small urgent packets go out directly as CAP data when they fit. Granted
    packets are sent whole in their GTS and are never interrupted.
    """

    def __init__(
        self,
        node: int,
        sim: Simulator,
        medium: Medium,
        timing: TimingConfig,
        metrics: MetricsRecord,
        *,
        config: IdsmeConfig,
    ):
        super().__init__(node, sim, medium, timing, metrics)
        self._config = config
        self._urgent: deque[Packet] = deque()
        self._normal: deque[Packet] = deque()
        self._requested: dict[str, Packet] = {}
        """Announced packets waiting for or holding a GTS."""
        self._cap_start: SimTime = 0
        self._cap_end: SimTime = 0
        self.contending = False
        self._waiting_cap = False
        self._skip_caps = 0
        self._backoff_left = 0
        self.retries = 0
        self._pending: EventHandle | None = None
        self._awaiting: Frame | None = None
        self._cca_start: SimTime = 0
        self._cfp_waits: dict[str, EventHandle] = {}

    @property
    def unrequested(self) -> list[Packet]:
        return [*self._urgent, *self._normal]

    def enqueue(self, packet: Packet) -> None:
        (self._urgent if packet.urgent else self._normal).append(packet)
        if not self.contending:
            self.cap_contend()

    def on_superframe(self, start: SimTime, sf: Superframe, grants: Iterable[GtsGrant]) -> None:
        """Learn the new superframe layout and this node's grants at a boundary."""
        self._cap_start = start
        self._cap_end = start + sf.cap_duration
        for grant in grants:
            self._schedule_gts(start + sf.cfp_offset(grant.slot), grant)
        if self._skip_caps:
            self._skip_caps -= 1
            return
        if self._waiting_cap:
            self._waiting_cap = False
            self._countdown()

    # CAP

    def cap_contend(self) -> None:
        """Contend in the CAP with the contention window of the most urgent waiting packet."""
        if not (self._urgent or self._normal):
            self.contending = False
            return
        self.contending = True
        priority = Priority.URGENT if self._urgent else Priority.NORMAL
        self._backoff_left = draw_cap_backoff(self._rng, priority, self._config)
        if not self._waiting_cap:
            self._countdown()

    def _countdown(self) -> None:
        now = self._sim.now
        unit = self._timing.backoff_unit_us
        if not self._cap_start <= now < self._cap_end:
            self._waiting_cap = True
            return
        offset = now - self._cap_start
        aligned = self._cap_start + -(-offset // unit) * unit
        available = max((self._cap_end - aligned) // unit, 0)
        if self._backoff_left >= available:
            # the countdown freezes outside the CAP
            self._backoff_left -= available
            self._waiting_cap = True
            return
        self._arm(aligned + self._backoff_left * unit - now, self._cca_begin)

    def _cca_begin(self) -> None:
        self._cca_start = self._sim.now
        self._arm(self._timing.cca_us, self._cca_end)

    def _cca_end(self) -> None:
        frame = self._cap_frame()
        if frame is None:
            self._backoff_left = 0
            self._waiting_cap = True
            return
        if self._medium.sensed_busy(self.node, 0, since=self._cca_start):
            self._cap_failure("channel busy")
            return
        self._awaiting = frame
        self._transmit(frame)

    def _cap_frame(self) -> Frame | None:
        """The CAP frame to send now, or None when nothing fits the rest of the CAP."""
        remaining = self._cap_end - self._sim.now
        reply = self._timing.turnaround_us + self._airtime()
        if self._urgent:
            head = self._urgent[0]
            if self._airtime(head.payload_units) + reply <= remaining:
                return self._frame(
                    FrameKind.DATA,
                    SINK_ID,
                    payload_units=head.payload_units,
                    priority=Priority.URGENT,
                    packet=head,
                    last=True,
                )
        packets = tuple(self.unrequested)
        request = self._frame(
            FrameKind.GTS_REQUEST,
            SINK_ID,
            payload_units=len(packets),
            priority=Priority.URGENT if self._urgent else Priority.NORMAL,
            requests=packets,
        )
        if request.airtime + reply <= remaining:
            return request
        return None

    def _cap_failure(self, reason: str) -> None:
        self._awaiting = None
        self.retries += 1
        if self.retries > self._config.max_cap_retries:
            logger.debug(
                "Node {node} defers its CAP traffic a superframe: {reason}",
                node=self.node,
                reason=reason,
            )
            self.retries = 0
            self._skip_caps = 1
            self._waiting_cap = True
            self.cap_contend()
            return
        self.cap_contend()

    def _on_cap_ack(self, ack: Frame) -> None:
        sent = self._awaiting
        if sent is None:
            return
        self._disarm()
        self._awaiting = None
        self.retries = 0
        if sent.kind is FrameKind.DATA:
            self._forget({sent.packet_id})
        else:
            self._forget({p.packet_id for p in sent.requests})
            self._requested.update((p.packet_id, p) for p in sent.requests)
        self.cap_contend()

    def _forget(self, packet_ids: set[str | None]) -> None:
        self._urgent = deque(p for p in self._urgent if p.packet_id not in packet_ids)
        self._normal = deque(p for p in self._normal if p.packet_id not in packet_ids)

    # CFP

    def _schedule_gts(self, start: SimTime, grant: GtsGrant) -> None:
        pid = grant.packet.packet_id
        held = pid in self._requested or any(p.packet_id == pid for p in self.unrequested)
        if not held:
            return
        self._forget({pid})
        self._requested[pid] = grant.packet
        frame = self._frame(
            FrameKind.DATA,
            SINK_ID,
            channel=grant.channel,
            payload_units=grant.packet.payload_units,
            priority=grant.priority,
            packet=grant.packet,
            last=True,
        )
        self._sim.at(start, EventKind.FRAME_TX_START, self.node, lambda _: self._transmit(frame))

    def _cfp_failed(self, packet: Packet) -> None:
        self._cfp_waits.pop(packet.packet_id, None)
        if self._requested.pop(packet.packet_id, None) is None:
            return
        logger.trace(
            "Node {node} re-requests {packet_id}", node=self.node, packet_id=packet.packet_id
        )
        (self._urgent if packet.urgent else self._normal).appendleft(packet)
        if not self.contending:
            self.cap_contend()

    # radio callbacks

    def on_tx_end(self, frame: Frame) -> None:
        if frame is self._awaiting:
            self._arm(self._timing.ack_wait_us, lambda: self._cap_failure("no ACK"))
        elif frame.kind is FrameKind.DATA and frame.packet is not None:
            packet = frame.packet
            self._cfp_waits[packet.packet_id] = self._timer(
                self._timing.ack_wait_us, lambda: self._cfp_failed(packet)
            )

    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None:
        if verdict is not Verdict.DELIVERED or frame.receiver != self.node:
            return
        if frame.kind is not FrameKind.ACK:
            return
        sent = self._awaiting
        if (
            sent is not None
            and frame.channel == 0
            and frame.packet_id == sent.packet_id
            and frame.requests == sent.requests
        ):
            self._on_cap_ack(frame)
            return
        pid = frame.packet_id
        if pid is not None and (wait := self._cfp_waits.pop(pid, None)) is not None:
            self._sim.cancel(wait)
            self._requested.pop(pid, None)

    def _arm(self, delay: SimTime, callback: Callable[[], None]) -> None:
        self._disarm()
        self._pending = self._timer(delay, callback)

    def _disarm(self) -> None:
        self._sim.cancel(self._pending)
        self._pending = None


class IdsmeCoordinator(MacNode):
    """
    The sink as superframe coordinator.

    At every boundary it adapts the CAP, allocates the requests collected so far and
    announces the grants to the sources directly.
    """

    def __init__(
        self,
        node: int,
        sim: Simulator,
        medium: Medium,
        timing: TimingConfig,
        metrics: MetricsRecord,
        *,
        config: IdsmeConfig,
    ):
        super().__init__(node, sim, medium, timing, metrics)
        self.superframe = build_superframe(config)
        self._sources: dict[int, IdsmeSource] = {}
        self._requests: list[GtsRequest] = []
        self._requested: set[str] = set()
        self._completed: set[str] = set()
        self._sf_start: SimTime = 0
        self._boundaries = 0
        self._cap_collisions = 0
        self._collision_until: SimTime = 0
        self._urgent_deferred = False
        self.cap_history: list[int] = []
        self.grant_history: list[list[GtsGrant]] = []

    @property
    def cap_collisions(self) -> int:
        """Collision events seen on channel 0 in the current CAP so far."""
        return self._cap_collisions

    def register(self, source: IdsmeSource) -> None:
        self._sources[source.node] = source

    def start(self) -> None:
        self._sim.at(0, EventKind.SUPERFRAME_BOUNDARY, self.node, self._on_boundary)

    def slots_needed(self, request: GtsRequest) -> int:
        """Consecutive slots covering the DATA frame, a turnaround and the ACK."""
        busy = self._airtime(request.pending_units) + self._timing.turnaround_us + self._airtime()
        return -(-busy // self.superframe.slot_duration)

    def _on_boundary(self, _: object) -> None:
        sf = self.superframe
        now = self._sim.now
        if self._boundaries:
            adapt_cap(
                sf, urgent_deferred=self._urgent_deferred, collisions=self._cap_collisions
            )
        self._boundaries += 1
        sf.clear_gts()
        requests = [r for r in self._requests if r.packet.packet_id not in self._completed]
        allocation = allocate_gts(requests, sf, self.slots_needed)
        self._requests = allocation.deferred
        self._requested = {r.packet.packet_id for r in allocation.deferred}
        self._urgent_deferred = allocation.urgent_deferred
        self._cap_collisions = 0
        self._sf_start = now
        self.cap_history.append(sf.cap_slots)
        self.grant_history.append(allocation.grants)
        logger.trace(
            "Superframe at {now}: cap={cap}, {granted} grants, {deferred} deferred",
            now=now,
            cap=sf.cap_slots,
            granted=len(allocation.grants),
            deferred=len(allocation.deferred),
        )

        by_node: dict[int, list[GtsGrant]] = {}
        for grant in allocation.grants:
            by_node.setdefault(grant.node, []).append(grant)
        for node, source in self._sources.items():
            source.on_superframe(now, sf, by_node.get(node, []))
        self._sim.at(now + sf.length, EventKind.SUPERFRAME_BOUNDARY, self.node, self._on_boundary)

    def on_tx_end(self, frame: Frame) -> None:
        pass

    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None:
        if verdict is Verdict.LOST_COLLISION:
            now = self._sim.now
            cap_end = self._sf_start + self.superframe.cap_duration
            if frame.channel == 0 and now <= cap_end:
                # frames lost to the same overlap count once
                if now - frame.airtime >= self._collision_until:
                    self._cap_collisions += 1
                self._collision_until = max(self._collision_until, now)
            return
        if verdict is not Verdict.DELIVERED or frame.receiver != self.node:
            return
        match frame.kind:
            case FrameKind.GTS_REQUEST:
                for packet in frame.requests:
                    pid = packet.packet_id
                    if pid in self._completed or pid in self._requested:
                        continue
                    self._requested.add(pid)
                    self._requests.append(
                        GtsRequest(packet.source, packet.priority, packet.payload_units, packet)
                    )
                self._acknowledge(frame, requests=frame.requests)
            case FrameKind.DATA if frame.packet is not None:
                packet = frame.packet
                if packet.packet_id not in self._completed:
                    self._completed.add(packet.packet_id)
                    self._metrics.record_delivery(packet, self._sim.now)
                self._acknowledge(frame, packet=packet)
            case _:
                pass

    def _acknowledge(
        self, frame: Frame, *, packet: Packet | None = None, requests: tuple[Packet, ...] = ()
    ) -> None:
        ack = self._frame(
            FrameKind.ACK,
            frame.sender,
            channel=frame.channel,
            priority=frame.priority,
            packet=packet,
            requests=requests,
        )
        self._send_after(self._timing.turnaround_us, ack)

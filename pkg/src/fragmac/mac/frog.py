from __future__ import annotations

from collections import deque
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import StrEnum

from fragmac.config import TimingConfig
from fragmac.constant import SINK_ID
from fragmac.exception import ContractViolation
from fragmac.mac.base import MacNode
from fragmac.mac.fragment import Fragment, Reassembly, fragment_packet
from fragmac.metrics import MetricsRecord
from fragmac.packet import Packet
from fragmac.radio.frame import Frame, FrameKind
from fragmac.radio.medium import Medium, Verdict
from fragmac.sim.engine import EventHandle, SimTime, Simulator
from fragmac.utils.logging import logger


class MacPhase(StrEnum):
    IDLE = "IDLE"
    BACKOFF = "BACKOFF"
    """Backoff, urgent deferral or CCA in progress."""
    AWAIT_CTS = "AWAIT_CTS"
    SENDING_FRAGMENTS = "SENDING_FRAGMENTS"
    PAUSED_FOR_URGENT = "PAUSED_FOR_URGENT"
    AWAIT_ACK = "AWAIT_ACK"


@dataclass(slots=True, eq=False)
class Transfer:
    """A packet on its way out, with its retry state and fragment plan."""

    packet: Packet
    be: int
    """Backoff exponent."""
    retries: int = 0
    first_access: bool = True
    granted: bool = False
    """The sink admitted this transfer and it has not timed out since."""
    plan: list[Fragment] = field(default_factory=list[Fragment])
    """Fixed by the first CTS; later grants never resize it."""
    pending: list[int] = field(default_factory=list[int])
    """Fragment indices of the current burst."""
    cursor: int = 0

    @property
    def next_fragment_index(self) -> int:
        if self.cursor < len(self.pending):
            return self.pending[self.cursor]
        return len(self.plan)


@dataclass(slots=True)
class MacState:
    node: int
    phase: MacPhase = MacPhase.IDLE
    urgent: deque[Packet] = field(default_factory=deque[Packet])
    normal: deque[Packet] = field(default_factory=deque[Packet])
    current: Transfer | None = None
    suspended: Transfer | None = None
    """A normal transfer set aside for this node's own urgent traffic."""
    nav_until: SimTime = 0
    """Virtual carrier sense: the medium counts as reserved until then."""
    stream_until: SimTime = 0
    """Overheard fragment stream of another node: its next pause is expected before then."""
    paused_for: int | None = None
    """The urgent node whose exchange this node is waiting out."""


class FrogSource(MacNode):
    """
    Source side of FROG-MAC.

    CSMA/CA with RTS/CTS, normal packets sent as fragments separated by pauses, and
    suspension of the fragment stream whenever an urgent exchange of another node is
    granted inside a pause. Urgent packets go out as a single DATA frame.
    """

    def __init__(
        self,
        node: int,
        sim: Simulator,
        medium: Medium,
        timing: TimingConfig,
        metrics: MetricsRecord,
        *,
        fragment_size: int,
    ):
        super().__init__(node, sim, medium, timing, metrics)
        self.fragment_size = fragment_size
        """Used when a CTS carries no fragment size."""
        self.state = MacState(node)
        self._pending: EventHandle | None = None
        self._cca_start: SimTime = 0
        self._on_air: Frame | None = None

    def enqueue(self, packet: Packet) -> None:
        state = self.state
        (state.urgent if packet.urgent else state.normal).append(packet)
        logger.trace(
            "Node {node} queued {packet_id} in {phase}",
            node=self.node,
            packet_id=packet.packet_id,
            phase=state.phase,
        )
        if state.current is None:
            self._start_next()
        elif packet.urgent:
            self._on_urgent_queued()

    # channel access

    def csma_attempt(self) -> None:
        """
        Start channel access for the current transfer.

        A first attempt waits for the medium and the NAV to clear. Urgent packets then take
        the next pause of a known fragment stream after a short jitter; otherwise, and on
        every retry, the attempt is a random backoff followed by CCA and RTS.
        """
        t = self._current
        self.state.phase = MacPhase.BACKOFF
        if t.first_access:
            self._defer(waited=False)
        else:
            self._backoff()

    def _backoff(self) -> None:
        slots = self._rng.integers(2 ** self._current.be)
        self._arm(slots * self._timing.backoff_unit_us, self._cca_begin)

    def _defer(self, *, waited: bool) -> None:
        now = self._sim.now
        timing = self._timing
        until = max(self._medium.busy_until(self.node, 0), self.state.nav_until)
        if until > now:
            self._arm(until - now, lambda: self._defer(waited=True))
            return
        if self._current.packet.urgent and self.stream_known:
            jitter = self._rng.integers(timing.urgent_jitter_slots)
            self._arm(jitter * timing.urgent_jitter_us, self._cca_begin)
        elif waited and not self._current.packet.urgent:
            # every urgent jitter slot starts ahead of a deferred normal backoff
            self._arm(timing.urgent_jitter_slots * timing.urgent_jitter_us, self._backoff)
        else:
            self._backoff()

    @property
    def stream_known(self) -> bool:
        """A fragment stream is under way, so its next pause is open to urgent traffic."""
        suspended = self.state.suspended
        return self.state.stream_until > self._sim.now or (
            suspended is not None and suspended.granted
        )

    def _cca_begin(self) -> None:
        self._cca_start = self._sim.now
        self._arm(self._timing.cca_us, self._cca_end)

    def _cca_end(self) -> None:
        t = self._current
        busy = (
            self._medium.sensed_busy(self.node, 0, since=self._cca_start)
            or self.state.nav_until > self._cca_start
        )
        if not busy:
            self._transmit(
                self._frame(FrameKind.RTS, SINK_ID, priority=t.packet.priority, packet=t.packet)
            )
            return
        if t.packet.urgent and t.first_access:
            self._defer(waited=True)
            return
        self._retry("channel busy")

    def _retry(self, reason: str) -> None:
        t = self._current
        t.retries += 1
        t.be = min(t.be + 1, self._timing.max_be)
        t.first_access = False
        t.granted = False
        logger.trace(
            "Node {node} retry {retries} for {packet_id}: {reason}",
            node=self.node,
            retries=t.retries,
            packet_id=t.packet.packet_id,
            reason=reason,
        )
        if t.retries > self._timing.max_retries:
            self._drop(reason)
        elif not t.packet.urgent and self.state.urgent:
            self._preempt()
        else:
            self.csma_attempt()

    # handshake and fragments

    def on_cts_received(self, cts: Frame) -> None:
        t = self._current
        if not t.plan:
            size = cts.frag_size or self.fragment_size
            if t.packet.urgent:
                size = t.packet.payload_units
            t.plan = fragment_packet(t.packet.packet_id, t.packet.payload_units, size)
        pending = list(cts.missing) if cts.missing is not None else [f.index for f in t.plan]
        if not pending:
            self._complete()
            return
        t.pending, t.cursor, t.granted = pending, 0, True
        self.state.phase = MacPhase.SENDING_FRAGMENTS
        self._arm(self._timing.turnaround_us, self._fragment_point)

    def _fragment_point(self) -> None:
        t = self._current
        if not t.packet.urgent and self.state.urgent:
            self._preempt()
            return
        now = self._sim.now
        if self._medium.carrier_sense(self.node, 0) or self.state.nav_until > now:
            until = max(self._medium.busy_until(self.node, 0), self.state.nav_until)
            self._arm(until - now + self._timing.turnaround_us, self._fragment_point)
            return
        fragment = t.plan[t.pending[t.cursor]]
        self._transmit(
            self._frame(
                FrameKind.DATA,
                SINK_ID,
                payload_units=fragment.units,
                priority=t.packet.priority,
                packet=t.packet,
                index=fragment.index,
                count=fragment.count,
                last=t.cursor == len(t.pending) - 1,
            )
        )

    def _on_ack(self, ack: Frame) -> None:
        t = self._current
        missing = ack.missing or ()
        if not missing:
            self._complete()
            return
        t.retries += 1
        if t.retries > self._timing.max_retries:
            self._drop("fragments lost")
            return
        t.pending, t.cursor = list(missing), 0
        self.state.phase = MacPhase.SENDING_FRAGMENTS
        self._arm(self._timing.pause_us, self._fragment_point)

    # preemption

    def on_overheard_cts(self, cts: Frame) -> None:
        """Wait out an urgent exchange granted to another node while this node holds a stream."""
        state = self.state
        t = state.current
        if cts.receiver == self.node or not cts.urgent or t is None or t.packet.urgent:
            return
        if state.phase not in (MacPhase.SENDING_FRAGMENTS, MacPhase.PAUSED_FOR_URGENT):
            return
        logger.debug(
            "Node {node} pauses {packet_id} at fragment {index} for urgent node {urgent}",
            node=self.node,
            packet_id=t.packet.packet_id,
            index=t.next_fragment_index,
            urgent=cts.receiver,
        )
        state.phase = MacPhase.PAUSED_FOR_URGENT
        state.paused_for = cts.receiver
        self._arm(cts.nav + self._timing.guard_margin_us, self._resume)

    def _resume(self) -> None:
        t = self._current
        self.state.paused_for = None
        if t.cursor >= len(t.pending):
            # the last fragment went out as the pause began
            self.state.phase = MacPhase.AWAIT_ACK
            self._arm(self._timing.ack_wait_us, lambda: self._retry("no ACK"))
            return
        self.state.phase = MacPhase.SENDING_FRAGMENTS
        self._fragment_point()

    def _on_urgent_queued(self) -> None:
        state = self.state
        t = state.current
        if t is None or t.packet.urgent:
            return
        if state.phase is MacPhase.BACKOFF or (
            state.phase is MacPhase.SENDING_FRAGMENTS and self._on_air is None
        ):
            self._preempt()

    def _preempt(self) -> None:
        state = self.state
        t = self._current
        self._disarm()
        logger.debug(
            "Node {node} sets {packet_id} aside for its own urgent traffic",
            node=self.node,
            packet_id=t.packet.packet_id,
        )
        state.suspended = t
        state.current = None
        state.phase = MacPhase.IDLE
        self._start_next()

    # bookkeeping

    def _start_next(self) -> None:
        state = self.state
        if state.urgent:
            state.current = Transfer(state.urgent.popleft(), be=self._timing.min_be)
        elif state.suspended is not None:
            t = state.current = state.suspended
            state.suspended = None
            if t.granted:
                state.phase = MacPhase.SENDING_FRAGMENTS
                self._arm(self._timing.pause_us, self._fragment_point)
                return
        elif state.normal:
            state.current = Transfer(state.normal.popleft(), be=self._timing.min_be)
        else:
            state.phase = MacPhase.IDLE
            return
        self.csma_attempt()

    def _complete(self) -> None:
        logger.trace(
            "Node {node} finished {packet_id}",
            node=self.node,
            packet_id=self._current.packet.packet_id,
        )
        self.state.current = None
        self.state.phase = MacPhase.IDLE
        self._start_next()

    def _drop(self, reason: str) -> None:
        t = self._current
        logger.debug(
            "Node {node} drops {packet_id}: {reason}",
            node=self.node,
            packet_id=t.packet.packet_id,
            reason=reason,
        )
        self._metrics.record_drop(t.packet)
        self.state.current = None
        self.state.phase = MacPhase.IDLE
        self._start_next()

    @property
    def _current(self) -> Transfer:
        t = self.state.current
        if t is None:
            raise ContractViolation(f"Node {self.node} has no transfer in {self.state.phase}")
        return t

    def _arm(self, delay: SimTime, callback: Callable[[], None]) -> None:
        self._disarm()
        self._pending = self._timer(delay, callback)

    def _disarm(self) -> None:
        self._sim.cancel(self._pending)
        self._pending = None

    # radio callbacks

    def _check_transmit(self, frame: Frame) -> None:
        state = self.state
        if state.phase is MacPhase.PAUSED_FOR_URGENT:
            logger.error("Node {node} transmitted while paused", node=self.node)
            raise ContractViolation(f"Node {self.node} transmitted {frame.kind} while paused")
        if frame.kind is FrameKind.DATA and not frame.urgent and state.urgent:
            logger.error("Node {node} sent normal data ahead of urgent", node=self.node)
            raise ContractViolation(f"Node {self.node} sent normal DATA with urgent queued")

    def _transmit(self, frame: Frame) -> None:
        super()._transmit(frame)
        self._on_air = frame

    def on_tx_end(self, frame: Frame) -> None:
        self._on_air = None
        t = self.state.current
        if t is None or frame.packet_id != t.packet.packet_id:
            return
        match frame.kind:
            case FrameKind.RTS:
                self.state.phase = MacPhase.AWAIT_CTS
                self._arm(self._timing.cts_wait_us, lambda: self._retry("no CTS"))
            case FrameKind.DATA:
                t.cursor += 1
                if self.state.phase is MacPhase.PAUSED_FOR_URGENT:
                    return
                if frame.last:
                    self.state.phase = MacPhase.AWAIT_ACK
                    self._arm(self._timing.ack_wait_us, lambda: self._retry("no ACK"))
                elif not t.packet.urgent and self.state.urgent:
                    self._preempt()
                else:
                    self._arm(self._timing.pause_us, self._fragment_point)
            case _:
                pass

    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None:
        if verdict is not Verdict.DELIVERED:
            return
        if frame.receiver != self.node:
            self._on_overheard(frame)
            return
        state = self.state
        t = state.current
        if t is None or frame.packet_id != t.packet.packet_id:
            return
        if frame.kind is FrameKind.CTS and state.phase is MacPhase.AWAIT_CTS:
            self._disarm()
            self.on_cts_received(frame)
        elif frame.kind is FrameKind.ACK and state.phase is MacPhase.AWAIT_ACK:
            self._disarm()
            self._on_ack(frame)

    def _on_overheard(self, frame: Frame) -> None:
        state = self.state
        timing = self._timing
        match frame.kind:
            case FrameKind.RTS:
                nav = timing.turnaround_us + self._airtime()
            case FrameKind.CTS:
                nav = frame.nav
            case FrameKind.DATA if frame.last or frame.urgent:
                nav = timing.turnaround_us + self._airtime()
            case _:
                nav = 0
        state.nav_until = max(state.nav_until, self._sim.now + nav)
        self._track_stream(frame, nav)

        if frame.kind is FrameKind.CTS and frame.urgent:
            self.on_overheard_cts(frame)
        elif (
            frame.kind is FrameKind.ACK
            and state.phase is MacPhase.PAUSED_FOR_URGENT
            and frame.receiver == state.paused_for
        ):
            self._arm(timing.pause_us, self._resume)

    def _track_stream(self, frame: Frame, nav: SimTime) -> None:
        """Follow the fragment streams of other nodes from the frames overheard."""
        state = self.state
        now = self._sim.now
        next_pause = self._timing.pause_us + self._timing.turnaround_us
        if frame.urgent:
            # an urgent exchange inside a pause holds the stream, it does not end it
            if state.stream_until > now:
                state.stream_until = max(state.stream_until, now + nav + next_pause)
            return
        match frame.kind:
            case FrameKind.CTS if frame.packet is not None and frame.frag_size:
                burst = (
                    len(frame.missing)
                    if frame.missing
                    else -(-frame.packet.payload_units // frame.frag_size)
                )
                if burst > 1:
                    state.stream_until = now + nav + next_pause
            case FrameKind.DATA if not frame.last:
                state.stream_until = now + next_pause
            case FrameKind.ACK if frame.missing:
                state.stream_until = now + next_pause
            case FrameKind.DATA | FrameKind.ACK:
                state.stream_until = now
            case _:
                pass


@dataclass(slots=True, eq=False)
class _Stream:
    sender: int
    packet_id: str
    watchdog: EventHandle | None = None


@dataclass(frozen=True, slots=True)
class _UrgentGrant:
    sender: int
    packet_id: str
    expires: SimTime


class FrogSink(MacNode):
    """
    Sink side of FROG-MAC: grants the channel, reassembles fragments and acknowledges bursts.

    At most one normal stream is admitted at a time. An urgent RTS is granted even in the
    middle of a normal stream, which is what lets urgent traffic cut in during a pause.
    """

    def __init__(
        self,
        node: int,
        sim: Simulator,
        medium: Medium,
        timing: TimingConfig,
        metrics: MetricsRecord,
        *,
        fragment_size: int,
    ):
        super().__init__(node, sim, medium, timing, metrics)
        self._fragment_size = fragment_size
        self._stream: _Stream | None = None
        self._urgent: _UrgentGrant | None = None
        self._reassembly: dict[str, Reassembly] = {}
        self._completed: set[str] = set()
        self._responding_until: SimTime = -1

    def fragment_size(self) -> int:
        """Fragment size announced with the next normal grant."""
        return self._fragment_size

    @property
    def stream_sender(self) -> int | None:
        return self._stream.sender if self._stream is not None else None

    def sink_arbitrate(self, rts: Frame) -> Frame | None:
        """Decide on an RTS; returns the CTS to send, or None to stay silent."""
        now = self._sim.now
        packet = rts.packet
        if packet is None or now < self._responding_until:
            return None
        timing = self._timing
        urgent = self._urgent if self._urgent is not None and self._urgent.expires > now else None

        if rts.urgent:
            self._on_urgent_seen(packet)
            if urgent is not None and urgent.packet_id != packet.packet_id:
                logger.trace("Sink busy with urgent {packet_id}", packet_id=urgent.packet_id)
                return None
            nav = (
                timing.turnaround_us
                + self._airtime(packet.payload_units)
                + timing.turnaround_us
                + self._airtime()
            )
            expires = now + timing.turnaround_us + self._airtime() + nav
            self._urgent = _UrgentGrant(rts.sender, packet.packet_id, expires)
            frag_size = None
        else:
            if urgent is not None:
                return None
            stream = self._stream
            if stream is not None and stream.packet_id != packet.packet_id:
                logger.trace(
                    "Sink ignores RTS of {sender}, stream of {active} active",
                    sender=rts.sender,
                    active=stream.sender,
                )
                return None
            frag_size = self.fragment_size()
            nav = timing.turnaround_us + self._airtime(min(frag_size, packet.payload_units))
            if self._missing(packet.packet_id) != ():
                self._open_stream(rts.sender, packet.packet_id)

        return self._frame(
            FrameKind.CTS,
            rts.sender,
            priority=rts.priority,
            packet=packet,
            nav=nav,
            frag_size=frag_size,
            missing=self._missing(packet.packet_id),
        )

    def on_tx_end(self, frame: Frame) -> None:
        pass

    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None:
        if verdict is not Verdict.DELIVERED or frame.receiver != self.node:
            return
        match frame.kind:
            case FrameKind.RTS:
                if (cts := self.sink_arbitrate(frame)) is not None:
                    self._respond(cts)
            case FrameKind.DATA:
                self._on_data(frame)
            case _:
                pass

    def _on_data(self, frame: Frame) -> None:
        packet = frame.packet
        if packet is None:
            return
        pid = packet.packet_id
        if pid not in self._completed:
            r = self._reassembly.setdefault(pid, Reassembly(frame.count))
            if not r.add(frame.index):
                logger.trace(
                    "Duplicate fragment {index} of {packet_id}", index=frame.index, packet_id=pid
                )
            if r.complete:
                del self._reassembly[pid]
                self._completed.add(pid)
                self._metrics.record_delivery(packet, self._sim.now)
                if packet.urgent:
                    self._on_urgent_seen(packet)

        stream = self._stream
        if stream is not None and stream.packet_id == pid:
            self._touch_stream(stream)
        if not (frame.last or frame.urgent):
            return
        missing = self._missing(pid) or ()
        ack = self._frame(
            FrameKind.ACK, frame.sender, priority=frame.priority, packet=packet, missing=missing
        )
        self._respond(ack)
        if missing:
            return
        if stream is not None and stream.packet_id == pid:
            self._close_stream(stream)
        if self._urgent is not None and self._urgent.packet_id == pid:
            self._urgent = None
            # the suspended stream was silent for the whole urgent exchange
            if self._stream is not None:
                self._touch_stream(self._stream)

    def _on_urgent_seen(self, packet: Packet) -> None:
        """Called on every urgent RTS and urgent delivery."""

    def _missing(self, packet_id: str) -> tuple[int, ...] | None:
        if packet_id in self._completed:
            return ()
        r = self._reassembly.get(packet_id)
        return r.missing if r is not None else None

    def _respond(self, frame: Frame) -> None:
        turnaround = self._timing.turnaround_us
        self._responding_until = self._sim.now + turnaround + frame.airtime
        self._send_after(turnaround, frame)

    def _open_stream(self, sender: int, packet_id: str) -> None:
        stream = self._stream
        if stream is None or stream.packet_id != packet_id:
            stream = self._stream = _Stream(sender, packet_id)
            logger.trace(
                "Sink admits {packet_id} from {sender}", packet_id=packet_id, sender=sender
            )
        self._touch_stream(stream)

    def _touch_stream(self, stream: _Stream) -> None:
        self._sim.cancel(stream.watchdog)
        stream.watchdog = self._timer(
            self._timing.stream_timeout_us, lambda: self._expire_stream(stream)
        )

    def _expire_stream(self, stream: _Stream) -> None:
        if self._stream is stream:
            logger.debug(
                "Sink releases idle stream {packet_id} of {sender}",
                packet_id=stream.packet_id,
                sender=stream.sender,
            )
            self._stream = None

    def _close_stream(self, stream: _Stream) -> None:
        self._sim.cancel(stream.watchdog)
        if self._stream is stream:
            self._stream = None

from __future__ import annotations

import math
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Protocol

from fragmac.constant import SINK_ID
from fragmac.exception import ConfigError, ContractViolation
from fragmac.radio.frame import Frame
from fragmac.sim.engine import Event, EventKind, SimTime, Simulator
from fragmac.sim.rng import Purpose
from fragmac.utils.logging import logger

_LOOKBACK: SimTime = 100_000
"""How long finished transmissions stay visible to `sensed_busy`."""


class Verdict(StrEnum):
    DELIVERED = "DELIVERED"
    LOST_COLLISION = "LOST_COLLISION"
    LOST_CHANNEL = "LOST_CHANNEL"


@dataclass(frozen=True, slots=True)
class NodePlacement:
    node: int
    x: float
    y: float


@dataclass(slots=True, eq=False)
class OngoingTx:
    frame: Frame
    t_start: SimTime
    t_end: SimTime
    collided_at: set[int] = field(default_factory=set[int])
    """Receivers at which another overlapping transmission corrupted this one."""


@dataclass(frozen=True, slots=True)
class Reception:
    """A pending reception; its verdict is resolved when the frame ends."""

    tx: OngoingTx
    receiver: int


class Radio(Protocol):
    def on_tx_end(self, frame: Frame) -> None: ...

    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None: ...


def reception_probability(d: float, tx_range: float, p_edge: float) -> float:
    """Success probability falling quadratically from 1 at d=0 to `p_edge` at d=R, 0 beyond."""
    if d > tx_range:
        return 0.0
    return 1.0 - (1.0 - p_edge) * (d / tx_range) ** 2


def circular_topology(sources: int, tx_range: float) -> list[NodePlacement]:
    """Sink at the origin, sources evenly spaced on a circle of radius R/2."""
    radius = 0.5 * tx_range
    placements = [NodePlacement(SINK_ID, 0.0, 0.0)]
    for i in range(sources):
        angle = 2 * math.pi * i / sources
        placements.append(NodePlacement(i + 1, radius * math.cos(angle), radius * math.sin(angle)))
    return placements


class Medium:
    """
    Unit-disk radio medium with distance-dependent loss.

    Any temporal overlap of two frames on one channel at a receiver that hears both
    corrupts both there. A node transmitting on a channel cannot receive on it.
    """

    def __init__(
        self,
        sim: Simulator,
        placements: Sequence[NodePlacement],
        *,
        tx_range: float,
        p_edge: float,
        num_channels: int = 1,
        keep_log: bool = False,
    ):
        self._sim = sim
        self.tx_range = tx_range
        self.p_edge = p_edge
        self.num_channels = num_channels
        self._positions: dict[int, tuple[float, float]] = {}
        for p in placements:
            if p.node in self._positions:
                raise ConfigError(f"Node {p.node} placed twice")
            self._positions[p.node] = (p.x, p.y)
        self._neighbors: dict[int, frozenset[int]] = {
            a: frozenset(b for b in self._positions if b != a and self._distance(a, b) <= tx_range)
            for a in self._positions
        }
        self._radios: dict[int, Radio] = {}
        self._active: list[list[OngoingTx]] = [[] for _ in range(num_channels)]
        self._transmitting: dict[tuple[int, int], OngoingTx] = {}
        """One transceiver per (node, channel)."""
        self.log: list[OngoingTx] | None = [] if keep_log else None

    @property
    def nodes(self) -> Iterable[int]:
        return self._positions.keys()

    def attach(self, node: int, radio: Radio) -> None:
        self._check_node(node)
        self._radios[node] = radio

    def distance(self, a: int, b: int) -> float:
        self._check_node(a)
        self._check_node(b)
        return self._distance(a, b)

    def in_range(self, a: int, b: int) -> bool:
        """
        Raises:
            ConfigError: If either node is not placed.
        """
        return self.distance(a, b) <= self.tx_range

    def neighbors(self, node: int) -> frozenset[int]:
        self._check_node(node)
        return self._neighbors[node]

    def is_transmitting(self, node: int, channel: int | None = None) -> bool:
        channels = range(self.num_channels) if channel is None else (channel,)
        return any(self._on_air(node, ch) for ch in channels)

    def _on_air(self, node: int, channel: int) -> bool:
        tx = self._transmitting.get((node, channel))
        return tx is not None and tx.t_end > self._sim.now

    def transmit(self, frame: Frame) -> list[Reception]:
        """
        Put a frame on the air at the current clock.

        Every in-range node gets a `FrameRxEnd` at the frame end; the sender gets a
        `FrameTxEnd`. Verdicts are resolved when the receptions end.
        """
        now = self._sim.now
        sender = frame.sender
        self._check_node(sender)
        if not 0 <= frame.channel < self.num_channels:
            raise ContractViolation(f"Frame on channel {frame.channel} of {self.num_channels}")
        if self._on_air(sender, frame.channel):
            logger.error(
                "Node {node} started a second transmission on ch{ch}", node=sender, ch=frame.channel
            )
            raise ContractViolation(f"Node {sender} is already transmitting")

        tx = OngoingTx(frame, now, now + frame.airtime)
        active = self._active[frame.channel]
        active[:] = [o for o in active if o.t_end + _LOOKBACK > now]
        for other in active:
            if other.t_end <= now:
                continue
            # each frame is corrupted wherever the other one is heard, including its sender
            other.collided_at.update(self._neighbors[sender])
            other.collided_at.add(sender)
            tx.collided_at.update(self._neighbors[other.frame.sender])
            tx.collided_at.add(other.frame.sender)
        active.append(tx)
        self._transmitting[sender, frame.channel] = tx
        if self.log is not None:
            self.log.append(tx)
        logger.trace(
            "{kind} {sender}->{receiver} ch{ch} [{start}, {end})",
            kind=frame.kind,
            sender=sender,
            receiver=frame.receiver,
            ch=frame.channel,
            start=tx.t_start,
            end=tx.t_end,
        )

        receptions: list[Reception] = []
        for receiver in sorted(self._neighbors[sender]):
            reception = Reception(tx, receiver)
            self._sim.at(tx.t_end, EventKind.FRAME_RX_END, receiver, self._on_rx_end, reception)
            receptions.append(reception)
        self._sim.at(tx.t_end, EventKind.FRAME_TX_END, sender, self._on_tx_end, tx)
        return receptions

    def resolve(self, reception: Reception) -> Verdict:
        """Decide the outcome of a finished reception; draws once from the receiver's stream."""
        tx, receiver = reception.tx, reception.receiver
        if receiver in tx.collided_at:
            return Verdict.LOST_COLLISION
        d = self._distance(tx.frame.sender, receiver)
        p = reception_probability(d, self.tx_range, self.p_edge)
        if self._sim.rng(receiver, Purpose.RADIO).uniform() < p:
            return Verdict.DELIVERED
        return Verdict.LOST_CHANNEL

    def carrier_sense(self, node: int, channel: int) -> bool:
        """True iff an in-range sender is on the air on `channel` right now."""
        now = self._sim.now
        return self._any_heard(node, channel, lambda tx: tx.t_start <= now < tx.t_end)

    def sensed_busy(self, node: int, channel: int, since: SimTime) -> bool:
        """True iff an in-range transmission on `channel` overlapped `[since, now]`."""
        now = self._sim.now
        return self._any_heard(node, channel, lambda tx: tx.t_start <= now and tx.t_end > since)

    def busy_until(self, node: int, channel: int) -> SimTime:
        """End of the latest in-range transmission still on the air, or now when idle."""
        now = self._sim.now
        until = now
        heard = self._neighbors[node]
        for tx in self._active[channel]:
            sender = tx.frame.sender
            if tx.t_start <= now < tx.t_end and (sender == node or sender in heard):
                until = max(until, tx.t_end)
        return until

    def _any_heard(
        self, node: int, channel: int, predicate: Callable[[OngoingTx], bool]
    ) -> bool:
        heard = self._neighbors[node]
        for tx in self._active[channel]:
            sender = tx.frame.sender
            if (sender == node or sender in heard) and predicate(tx):
                return True
        return False

    def _on_rx_end(self, event: Event) -> None:
        reception: Reception = event.payload
        radio = self._radios.get(reception.receiver)
        if radio is None:
            return
        radio.on_rx_end(reception.tx.frame, self.resolve(reception))

    def _on_tx_end(self, event: Event) -> None:
        tx: OngoingTx = event.payload
        sender = tx.frame.sender
        if self._transmitting.get((sender, tx.frame.channel)) is tx:
            del self._transmitting[sender, tx.frame.channel]
        radio = self._radios.get(sender)
        if radio is not None:
            radio.on_tx_end(tx.frame)

    def _distance(self, a: int, b: int) -> float:
        (xa, ya), (xb, yb) = self._positions[a], self._positions[b]
        return math.hypot(xa - xb, ya - yb)

    def _check_node(self, node: int) -> None:
        if node not in self._positions:
            raise ConfigError(f"Unknown node id: {node}")

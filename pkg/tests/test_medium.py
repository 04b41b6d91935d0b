from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fragmac.exception import ConfigError, ContractViolation
from fragmac.radio.frame import Frame, FrameKind
from fragmac.radio.medium import (
    Medium,
    NodePlacement,
    Verdict,
    circular_topology,
    reception_probability,
)
from fragmac.sim.engine import EventKind, Simulator

R = 100.0


class Recorder:
    def __init__(self) -> None:
        self.received: list[tuple[FrameKind, int, Verdict]] = []
        self.sent: list[FrameKind] = []

    def on_tx_end(self, frame: Frame) -> None:
        self.sent.append(frame.kind)

    def on_rx_end(self, frame: Frame, verdict: Verdict) -> None:
        self.received.append((frame.kind, frame.sender, verdict))


def _frame(sender: int, *, kind: FrameKind = FrameKind.DATA, channel: int = 0) -> Frame:
    return Frame(kind=kind, sender=sender, receiver=0, channel=channel, airtime=1000)


def _medium(sim: Simulator, positions: dict[int, tuple[float, float]], **kwargs) -> Medium:
    placements = [NodePlacement(n, x, y) for n, (x, y) in positions.items()]
    kwargs.setdefault("p_edge", 1.0)
    return Medium(sim, placements, tx_range=R, **kwargs)


def test_reception_probability():
    assert reception_probability(0, R, 0.9) == 1.0
    assert reception_probability(R / 2, R, 0.9) == pytest.approx(0.975)
    assert reception_probability(R, R, 0.9) == pytest.approx(0.9)
    assert reception_probability(R + 0.01, R, 0.9) == 0.0


@given(
    d=st.floats(min_value=0, max_value=R),
    p_edge=st.floats(min_value=0, max_value=1),
)
def test_reception_probability_bounds(d: float, p_edge: float):
    p = reception_probability(d, R, p_edge)
    assert p_edge - 1e-12 <= p <= 1.0


def test_circular_topology():
    placements = circular_topology(4, R)
    assert placements[0] == NodePlacement(0, 0.0, 0.0)
    sim = Simulator(master_seed=1)
    medium = Medium(sim, placements, tx_range=R, p_edge=0.9)
    for n in range(1, 5):
        assert medium.distance(0, n) == pytest.approx(R / 2)
        assert medium.in_range(0, n)
    assert medium.distance(1, 3) == pytest.approx(R)


def test_unknown_and_duplicate_nodes(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (10, 0)})
    with pytest.raises(ConfigError):
        medium.in_range(0, 9)
    with pytest.raises(ConfigError):
        Medium(sim, [NodePlacement(1, 0, 0), NodePlacement(1, 5, 5)], tx_range=R, p_edge=1)


@given(
    ax=st.floats(-200, 200),
    ay=st.floats(-200, 200),
    bx=st.floats(-200, 200),
    by=st.floats(-200, 200),
)
def test_reachability_is_symmetric(ax: float, ay: float, bx: float, by: float):
    medium = _medium(Simulator(master_seed=1), {0: (ax, ay), 1: (bx, by)})
    assert medium.in_range(0, 1) == medium.in_range(1, 0)
    assert (1 in medium.neighbors(0)) == (0 in medium.neighbors(1))


def test_out_of_range_node_gets_no_event(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (50, 0), 2: (250, 0)})
    far = Recorder()
    medium.attach(2, far)
    receptions = medium.transmit(_frame(1))
    sim.run_until(10_000)
    assert [r.receiver for r in receptions] == [0]
    assert far.received == []


def test_overlap_collides_at_common_receiver(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0), 2: (-30, 0)})
    sink = Recorder()
    medium.attach(0, sink)
    medium.transmit(_frame(1))
    sim.at(500, EventKind.FRAME_TX_START, 2, lambda _: medium.transmit(_frame(2)))
    sim.run_until(10_000)
    assert sink.received == [
        (FrameKind.DATA, 1, Verdict.LOST_COLLISION),
        (FrameKind.DATA, 2, Verdict.LOST_COLLISION),
    ]


def test_back_to_back_frames_do_not_collide(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0), 2: (-30, 0)})
    sink = Recorder()
    medium.attach(0, sink)
    medium.transmit(_frame(1))
    sim.at(1000, EventKind.FRAME_TX_START, 2, lambda _: medium.transmit(_frame(2)))
    sim.run_until(10_000)
    assert [verdict for *_, verdict in sink.received] == [Verdict.DELIVERED, Verdict.DELIVERED]


def test_other_channels_do_not_collide(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0), 2: (-30, 0)}, num_channels=2)
    sink = Recorder()
    medium.attach(0, sink)
    medium.transmit(_frame(1, channel=0))
    medium.transmit(_frame(2, channel=1))
    sim.run_until(10_000)
    assert [verdict for *_, verdict in sink.received] == [Verdict.DELIVERED, Verdict.DELIVERED]


def test_hidden_terminals_collide_only_where_both_are_heard(sim: Simulator):
    # 1 and 2 cannot hear each other; 3 hears only 1
    medium = _medium(sim, {0: (0, 0), 1: (-60, 0), 2: (60, 0), 3: (-140, 0)})
    sink, near = Recorder(), Recorder()
    medium.attach(0, sink)
    medium.attach(3, near)
    medium.transmit(_frame(1))
    medium.transmit(_frame(2))
    assert medium.carrier_sense(0, 0)
    assert 1 not in medium.neighbors(2)
    sim.run_until(10_000)
    assert {verdict for *_, verdict in sink.received} == {Verdict.LOST_COLLISION}
    assert near.received == [(FrameKind.DATA, 1, Verdict.DELIVERED)]


def test_half_duplex(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0)})
    sink = Recorder()
    medium.attach(0, sink)
    medium.transmit(_frame(1))
    medium.transmit(_frame(0, kind=FrameKind.ACK))
    sim.run_until(10_000)
    assert sink.received == [(FrameKind.DATA, 1, Verdict.LOST_COLLISION)]


def test_second_transmission_on_one_channel_is_fatal(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0)}, num_channels=2)
    medium.transmit(_frame(1))
    medium.transmit(_frame(1, channel=1))
    assert medium.is_transmitting(1)
    assert medium.is_transmitting(1, channel=1)
    with pytest.raises(ContractViolation):
        medium.transmit(_frame(1))


def test_carrier_sense_and_busy_until(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0)})
    observed: dict[str, object] = {}

    def sense(_: object) -> None:
        observed["busy"] = medium.carrier_sense(0, 0)
        observed["until"] = medium.busy_until(0, 0)

    def after(_: object) -> None:
        observed["idle"] = not medium.carrier_sense(0, 0)
        observed["window"] = medium.sensed_busy(0, 0, since=900)

    sim.at(100, EventKind.FRAME_TX_START, 1, lambda _: medium.transmit(_frame(1)))
    sim.at(600, EventKind.TIMER_EXPIRY, 0, sense)
    sim.at(1200, EventKind.TIMER_EXPIRY, 0, after)
    sim.run_until(2000)
    assert observed == {"busy": True, "until": 1100, "idle": True, "window": True}


def test_sender_gets_tx_end(sim: Simulator):
    medium = _medium(sim, {0: (0, 0), 1: (30, 0)})
    sender = Recorder()
    medium.attach(1, sender)
    medium.transmit(_frame(1, kind=FrameKind.RTS))
    sim.run_until(10_000)
    assert sender.sent == [FrameKind.RTS]
    assert not medium.is_transmitting(1)


@pytest.mark.parametrize("distance", [0.0, R / 2, R])
def test_delivery_ratio_matches_reception_probability(distance: float):
    sim = Simulator(master_seed=17)
    medium = _medium(sim, {0: (0, 0), 1: (distance, 0)}, p_edge=0.9)
    sink = Recorder()
    medium.attach(0, sink)
    frames = 10_000
    for k in range(frames):
        sim.at(k * 2000, EventKind.FRAME_TX_START, 1, lambda _: medium.transmit(_frame(1)))
    sim.run_until(frames * 2000)

    delivered = sum(1 for *_, verdict in sink.received if verdict is Verdict.DELIVERED)
    assert len(sink.received) == frames
    assert delivered / frames == pytest.approx(
        reception_probability(distance, R, 0.9), abs=0.02
    )

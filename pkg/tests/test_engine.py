from __future__ import annotations

import pytest
from inline_snapshot import snapshot

from fragmac.exception import ContractViolation
from fragmac.sim.engine import Event, EventKind, Simulator, TraceRecord
from fragmac.sim.rng import Purpose


def test_events_fire_in_time_then_seq_order(sim: Simulator):
    fired: list[str] = []
    sim.at(5, EventKind.TIMER_EXPIRY, 1, lambda _: fired.append("t5-first"))
    sim.at(3, EventKind.TIMER_EXPIRY, 1, lambda _: fired.append("t3"))
    sim.at(5, EventKind.TIMER_EXPIRY, 2, lambda _: fired.append("t5-second"))

    sim.run_until(10)

    assert fired == ["t3", "t5-first", "t5-second"]
    assert sim.now == 10


def test_same_time_event_runs_before_clock_advances(sim: Simulator):
    fired: list[int] = []

    def at_three(_: Event) -> None:
        fired.append(sim.now)
        sim.at(3, EventKind.TIMER_EXPIRY, 1, lambda _: fired.append(sim.now))

    sim.at(3, EventKind.TIMER_EXPIRY, 1, at_three)
    sim.at(4, EventKind.TIMER_EXPIRY, 1, lambda _: fired.append(sim.now))
    sim.run_until(10)

    assert fired == [3, 3, 4]


def test_schedule_into_the_past_is_fatal(sim: Simulator):
    sim.run_until(3)
    with pytest.raises(ContractViolation):
        sim.at(2, EventKind.TIMER_EXPIRY, 1)


def test_run_until_before_clock_is_fatal(sim: Simulator):
    sim.run_until(50)
    with pytest.raises(ContractViolation):
        sim.run_until(10)


def test_cancel():
    sim = Simulator(master_seed=7)
    fired: list[str] = []
    pending = sim.after(10, EventKind.TIMER_EXPIRY, 1, lambda _: fired.append("pending"))
    done = sim.after(1, EventKind.TIMER_EXPIRY, 1, lambda _: fired.append("done"))
    sim.run_until(5)

    assert sim.cancel(pending) is True
    assert sim.cancel(pending) is False
    assert sim.cancel(done) is False
    assert sim.cancel(None) is False

    sim.run_until(20)
    assert fired == ["done"]


def test_empty_queue_run():
    sim = Simulator(master_seed=1)
    trace = sim.run_until(100)
    assert sim.now == 100
    assert trace.records == []
    assert trace.count == 0


def test_trace_records_processed_events_only(sim: Simulator):
    handle = sim.at(10, EventKind.TIMER_EXPIRY, 3)
    sim.at(10, EventKind.PACKET_ARRIVAL, 1)
    sim.at(20, EventKind.SUPERFRAME_BOUNDARY, 0)
    sim.cancel(handle)

    trace = sim.run_until(100)

    assert trace.records == snapshot(
        [
            TraceRecord(time=10, seq=1, kind=EventKind.PACKET_ARRIVAL, target=1),
            TraceRecord(time=20, seq=2, kind=EventKind.SUPERFRAME_BOUNDARY, target=0),
        ]
    )
    assert trace.count == 2
    assert len(trace.digest) == 16


def _chain(sim: Simulator) -> None:
    stream = sim.rng(1, Purpose.MAC)

    def hop(_: Event) -> None:
        if sim.now < 10_000:
            sim.after(1 + stream.integers(100), EventKind.TIMER_EXPIRY, 1, hop)

    sim.at(0, EventKind.TIMER_EXPIRY, 1, hop)


def test_equal_seeds_give_equal_digests():
    runs = []
    for _ in range(2):
        sim = Simulator(master_seed=42)
        _chain(sim)
        runs.append(sim.run_until(20_000))
    assert runs[0].digest == runs[1].digest
    assert runs[0].records == runs[1].records


def test_different_seeds_give_different_digests():
    digests = set()
    for seed in (1, 2):
        sim = Simulator(master_seed=seed)
        _chain(sim)
        digests.add(sim.run_until(20_000).digest)
    assert len(digests) == 2


def test_digest_does_not_depend_on_event_retention():
    with_records = Simulator(master_seed=5, record_events=True)
    without_records = Simulator(master_seed=5, record_events=False)
    for sim in (with_records, without_records):
        _chain(sim)
    a = with_records.run_until(20_000)
    b = without_records.run_until(20_000)
    assert b.records == []
    assert (a.count, a.digest) == (b.count, b.digest)


def test_clock_never_decreases():
    sim = Simulator(master_seed=3)
    _chain(sim)
    times = [r.time for r in sim.run_until(20_000).records]
    assert times == sorted(times)

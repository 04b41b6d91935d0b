from __future__ import annotations

import json
from pathlib import Path

import pytest
from inline_snapshot import snapshot

from fragmac.sim.engine import EventKind, Simulator, TraceRecord
from fragmac.sim.trace import (
    deserialize_trace_record,
    dump_trace,
    load_trace,
    serialize_trace_record,
)


def test_serialize_trace_record():
    record = TraceRecord(time=1216, seq=9, kind=EventKind.FRAME_TX_START, target=1)
    assert serialize_trace_record(record) == snapshot(
        {"time": 1216, "seq": 9, "kind": "FrameTxStart", "target": 1}
    )


def test_deserialize_unknown_kind():
    with pytest.raises(ValueError):
        deserialize_trace_record({"time": 0, "seq": 0, "kind": "Teleport", "target": 1})


def test_dump_and_load_trace(tmp_path: Path):
    sim = Simulator(master_seed=3)
    sim.at(10, EventKind.PACKET_ARRIVAL, 1)
    sim.at(10, EventKind.TIMER_EXPIRY, 2)
    sim.at(30, EventKind.SUPERFRAME_BOUNDARY, 0)
    trace = sim.run_until(50)

    path = tmp_path / "trace.jsonl"
    dump_trace(trace, path)

    lines = path.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 4
    assert json.loads(lines[-1]) == {"_digest": trace.digest, "_count": 3}
    assert load_trace(path) == trace

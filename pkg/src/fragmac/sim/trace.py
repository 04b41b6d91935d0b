from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from pydantic import TypeAdapter

from fragmac.sim.engine import RunTrace, TraceRecord
from fragmac.utils.logging import logger

_record_adapter = TypeAdapter(TraceRecord)


def serialize_trace_record(record: TraceRecord) -> dict[str, Any]:
    """Convert a `TraceRecord` into a jsonifiable dict."""
    return _record_adapter.dump_python(record, mode="json")


def deserialize_trace_record(data: dict[str, Any]) -> TraceRecord:
    """
    Convert a jsonifiable dict into a `TraceRecord`.

    Raises:
        ValueError: If the record is malformed or the event kind is unknown.
    """
    return _record_adapter.validate_python(data)


def dump_trace(trace: RunTrace, path: Path) -> None:
    """Write one JSON object per processed event, followed by a summary line."""
    logger.debug("Writing {count} trace records to {path}", count=len(trace.records), path=path)
    with open(path, "w", encoding="utf-8") as f:
        for record in trace.records:
            f.write(json.dumps(serialize_trace_record(record)) + "\n")
        f.write(json.dumps({"_digest": trace.digest, "_count": trace.count}) + "\n")


def load_trace(path: Path) -> RunTrace:
    trace = RunTrace()
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            data = json.loads(line)
            if "_digest" in data:
                trace.digest = data["_digest"]
                trace.count = data["_count"]
                continue
            trace.records.append(deserialize_trace_record(data))
    return trace

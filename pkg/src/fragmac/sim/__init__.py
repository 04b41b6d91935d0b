from fragmac.sim.engine import (
    Event,
    EventHandle,
    EventKind,
    RunTrace,
    SimTime,
    Simulator,
    TraceRecord,
)
from fragmac.sim.rng import Purpose, RngStream, rng_uniform

__all__ = [
    "Event",
    "EventHandle",
    "EventKind",
    "Purpose",
    "RngStream",
    "RunTrace",
    "SimTime",
    "Simulator",
    "TraceRecord",
    "rng_uniform",
]

from __future__ import annotations

import importlib.metadata

VERSION = importlib.metadata.version("fragmac")

TICKS_PER_SECOND = 1_000_000
"""One tick is one microsecond of virtual time."""

SINK_ID = 0
"""Node id of the sink; sources are numbered from 1."""

"""Test configuration and fixtures."""

from __future__ import annotations

from collections.abc import Callable
from pathlib import Path
from typing import Any

import pytest

from fragmac.config import ProtocolName, Scenario
from fragmac.sim.engine import Simulator

type ScenarioFactory = Callable[..., Scenario]

HAND_TRACE_POSITIONS = {0: (0.0, 0.0), 1: (10.0, 0.0), 2: (0.0, 10.0), 3: (-10.0, 0.0)}
"""Sink at the origin and up to three sources close to it, all in range of each other."""


@pytest.fixture
def sim() -> Simulator:
    return Simulator(master_seed=1)


@pytest.fixture
def loss_free_scenario() -> ScenarioFactory:
    """
    Build a scenario without channel loss, random backoff or generated traffic.

    Packets are injected by the test. Keyword arguments override top-level settings;
    `timing`, `frog`, `dyfrag` and `idsme` dicts are merged into the defaults.
    """

    def make(
        protocol: ProtocolName = ProtocolName.FROG,
        sources: int = 2,
        **overrides: Any,
    ) -> Scenario:
        timing = {"min_be": 0, "max_be": 0, "urgent_jitter_slots": 1}
        timing.update(overrides.pop("timing", {}))
        data: dict[str, Any] = {
            "protocol": protocol,
            "sources": sources,
            "horizon": 0.1,
            "radio": {
                "p_edge": 1.0,
                "positions": {n: HAND_TRACE_POSITIONS[n] for n in range(sources + 1)},
            },
            "traffic": {"normal_rate": 0, "urgent_rate": 0},
            "timing": timing,
        }
        data.update(overrides)
        return Scenario.model_validate(data)

    return make


@pytest.fixture
def isolated_share_dir(monkeypatch: pytest.MonkeyPatch, tmp_path: Path) -> Path:
    """Keep log files written by the CLI inside a temporary directory."""

    share_dir = tmp_path / "share"
    share_dir.mkdir()

    def _get_share_dir() -> Path:
        return share_dir

    monkeypatch.setattr("fragmac.app.get_share_dir", _get_share_dir)
    return share_dir

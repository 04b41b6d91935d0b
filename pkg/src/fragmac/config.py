from __future__ import annotations

from enum import StrEnum
from pathlib import Path
from typing import Any, Self

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from fragmac.constant import SINK_ID, TICKS_PER_SECOND
from fragmac.exception import ConfigError
from fragmac.radio.frame import Airtime
from fragmac.radio.medium import NodePlacement, circular_topology
from fragmac.sim.engine import SimTime
from fragmac.utils.logging import logger


class ProtocolName(StrEnum):
    FROG = "frog"
    DYFRAG = "dyfrag"
    IDSME = "idsme"


class ArrivalProcess(StrEnum):
    POISSON = "poisson"
    PERIODIC = "periodic"


def seconds_to_ticks(seconds: float) -> SimTime:
    return round(seconds * TICKS_PER_SECOND)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", use_attribute_docstrings=True)


class RadioConfig(_Section):
    """Radio medium configuration."""

    tx_range: float = Field(default=100.0, gt=0)
    """Unit-disk range R in meters."""
    p_edge: float = Field(default=0.9, ge=0, le=1)
    """Reception probability at distance R."""
    positions: dict[int, tuple[float, float]] | None = None
    """Explicit (x, y) per node id, sink included. Default: sources on a circle of radius R/2."""


class TrafficOverride(_Section):
    """Per-node traffic settings; unset fields fall back to the traffic section."""

    normal_rate: float | None = Field(default=None, ge=0)
    urgent_rate: float | None = Field(default=None, ge=0)
    normal_payload: int | None = Field(default=None, ge=1)
    urgent_payload: int | None = Field(default=None, ge=1)
    arrival: ArrivalProcess | None = None


class TrafficConfig(_Section):
    """Traffic generation configuration."""

    normal_rate: float = Field(default=2.0, ge=0)
    """Normal packets per second per source."""
    urgent_rate: float = Field(default=0.5, ge=0)
    """Urgent packets per second per source."""
    normal_payload: int = Field(default=64, ge=1)
    """Normal packet payload in units."""
    urgent_payload: int = Field(default=16, ge=1)
    """Urgent packet payload in units."""
    arrival: ArrivalProcess = ArrivalProcess.POISSON
    overrides: dict[int, TrafficOverride] = Field(default_factory=dict)
    """Per-source overrides keyed by node id."""

    @field_validator("arrival", mode="before")
    @classmethod
    def _lower_arrival(cls, value: Any) -> Any:
        return value.lower() if isinstance(value, str) else value


class TimingConfig(_Section):
    """CSMA/CA, handshake and fragmentation timing, in microseconds."""

    unit_airtime_us: int = Field(default=64, ge=1)
    """Airtime of one payload unit (2 bytes at 250 kb/s)."""
    frame_overhead_us: int = Field(default=352, ge=1)
    """Airtime of a frame without payload; RTS, CTS and ACK are pure overhead."""
    cca_us: int = Field(default=128, ge=1)
    backoff_unit_us: int = Field(default=320, ge=1)
    min_be: int = Field(default=3, ge=0)
    max_be: int = Field(default=5, ge=0)
    max_retries: int = Field(default=4, ge=0)
    turnaround_us: int = Field(default=192, ge=0)
    """Gap between a frame and the response to it."""
    cts_wait_us: int = Field(default=1000, ge=1)
    ack_wait_us: int = Field(default=1000, ge=1)
    pause_us: int = Field(default=640, ge=1)
    """Inter-fragment pause P_gap."""
    urgent_jitter_us: int = Field(default=40, ge=1)
    urgent_jitter_slots: int = Field(default=4, ge=1)
    """Urgent first-access jitter is drawn from range(urgent_jitter_slots) slots."""
    guard_margin_us: int = Field(default=500, ge=0)
    """Extra wait of a paused sender beyond the urgent exchange it overheard."""
    stream_timeout_us: int = Field(default=20_000, ge=1)
    """The sink releases an admitted stream after this much inactivity."""

    @model_validator(mode="after")
    def validate_timing(self) -> Self:
        if self.min_be > self.max_be:
            raise ValueError(f"min_be {self.min_be} exceeds max_be {self.max_be}")
        urgent_access = (
            self.cca_us
            + self.frame_overhead_us
            + (self.urgent_jitter_slots - 1) * self.urgent_jitter_us
        )
        if self.pause_us <= urgent_access:
            raise ValueError(
                f"pause_us {self.pause_us} must exceed CCA + RTS + jitter ({urgent_access})"
            )
        if self.cts_wait_us <= self.turnaround_us + self.frame_overhead_us:
            raise ValueError("cts_wait_us must cover turnaround and a CTS")
        if self.ack_wait_us <= self.turnaround_us + self.frame_overhead_us:
            raise ValueError("ack_wait_us must cover turnaround and an ACK")
        return self

    @property
    def airtime(self) -> Airtime:
        return Airtime(self.frame_overhead_us, self.unit_airtime_us)


class FrogConfig(_Section):
    """FROG-MAC configuration."""

    fragment_size: int = Field(default=16, ge=1)
    """Payload units per fragment of a normal packet."""


class DyFragConfig(_Section):
    """DyFrag-MAC configuration."""

    f_min: int = Field(default=2, ge=1)
    f_max: int | None = Field(default=None, ge=1)
    """Default: the normal payload, i.e. unfragmented."""
    t_assess: float = Field(default=0.02, gt=0)
    """Assessment cycle length in seconds."""

    @model_validator(mode="after")
    def validate_bounds(self) -> Self:
        if self.f_max is not None and self.f_min > self.f_max:
            raise ValueError(f"f_min {self.f_min} exceeds f_max {self.f_max}")
        return self


class IdsmeConfig(_Section):
    """Simplified i-DSME configuration."""

    slot_us: int = Field(default=2000, ge=1)
    cap_slots: int = Field(default=4, ge=1)
    cfp_slots: int = Field(default=8, ge=1)
    cap_min: int = Field(default=2, ge=1)
    cap_max: int = Field(default=6, ge=1)
    channels: int = Field(default=4, ge=1)
    cw_urgent: int = Field(default=8, ge=1)
    """Contention window of urgent traffic, in backoff units."""
    cw_normal: int = Field(default=32, ge=1)
    max_cap_retries: int = Field(default=4, ge=0)

    @model_validator(mode="after")
    def validate_slots(self) -> Self:
        if not self.cap_min <= self.cap_slots <= self.cap_max:
            raise ValueError(
                f"cap_slots {self.cap_slots} outside [{self.cap_min}, {self.cap_max}]"
            )
        if self.cap_max >= self.cap_slots + self.cfp_slots:
            raise ValueError("cap_max must leave at least one CFP slot")
        if self.cw_urgent >= self.cw_normal:
            raise ValueError("cw_urgent must be smaller than cw_normal")
        return self


class Scenario(_Section):
    """A complete, validated simulation scenario."""

    protocol: ProtocolName
    sources: int = Field(default=10, ge=1)
    horizon: float = Field(default=120.0, gt=0)
    """Simulated duration in seconds."""
    seed: int = Field(default=1, ge=0)
    """Master random seed."""
    radio: RadioConfig = Field(default_factory=RadioConfig)
    traffic: TrafficConfig = Field(default_factory=TrafficConfig)
    timing: TimingConfig = Field(default_factory=TimingConfig)
    frog: FrogConfig = Field(default_factory=FrogConfig)
    dyfrag: DyFragConfig = Field(default_factory=DyFragConfig)
    idsme: IdsmeConfig = Field(default_factory=IdsmeConfig)

    @field_validator("protocol", mode="before")
    @classmethod
    def _lower_protocol(cls, value: Any) -> Any:
        return value.lower() if isinstance(value, str) else value

    @model_validator(mode="after")
    def validate_scenario(self) -> Self:
        if self.radio.positions is not None:
            expected = set(range(self.sources + 1))
            if set(self.radio.positions) != expected:
                raise ValueError(
                    f"radio.positions must place exactly nodes 0..{self.sources} "
                    f"(sink {SINK_ID} included)"
                )
        unknown = set(self.traffic.overrides) - set(range(1, self.sources + 1))
        if unknown:
            raise ValueError(f"traffic.overrides for unknown sources: {sorted(unknown)}")
        if self.protocol is ProtocolName.DYFRAG:
            f_min, f_max = self.dyfrag.f_min, self.f_max
            if f_max != self.traffic.normal_payload:
                raise ValueError(
                    f"dyfrag.f_max {f_max} must equal traffic.normal_payload "
                    f"{self.traffic.normal_payload}"
                )
            if f_min > f_max:
                raise ValueError(f"dyfrag.f_min {f_min} exceeds f_max {f_max}")
            ratio, rem = divmod(f_max, f_min)
            if rem or ratio & (ratio - 1):
                raise ValueError(f"dyfrag.f_max {f_max} is not f_min {f_min} times a power of 2")
        return self

    @property
    def f_max(self) -> int:
        return self.dyfrag.f_max or self.traffic.normal_payload

    @property
    def horizon_ticks(self) -> SimTime:
        return seconds_to_ticks(self.horizon)

    @property
    def num_channels(self) -> int:
        return self.idsme.channels if self.protocol is ProtocolName.IDSME else 1

    def placements(self) -> list[NodePlacement]:
        if self.radio.positions is None:
            return circular_topology(self.sources, self.radio.tx_range)
        return [NodePlacement(n, x, y) for n, (x, y) in sorted(self.radio.positions.items())]


def get_default_scenario(protocol: ProtocolName = ProtocolName.FROG) -> Scenario:
    """Get the all-defaults scenario."""
    return Scenario(protocol=protocol)


def load_scenario(path: Path) -> Scenario:
    """
    Load a scenario from a YAML file, filling defaults.

    Raises:
        ConfigError: If the file is missing, is not valid YAML, or fails validation.
            Validation messages carry `file:line` context.
    """
    logger.debug("Loading scenario from file: {file}", file=path)
    if not path.is_file():
        raise ConfigError(f"Scenario file not found: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
        lines = _key_lines(yaml.compose(text))
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in scenario file {path}: {e}") from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario must be a mapping of keys to values")

    try:
        return Scenario.model_validate(data)
    except ValidationError as e:
        messages = [_describe(path, lines, err["loc"], err["msg"]) for err in e.errors()]
        raise ConfigError("Invalid scenario:\n" + "\n".join(messages)) from e


def save_scenario(scenario: Scenario, path: Path) -> None:
    logger.debug("Saving scenario to file: {file}", file=path)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(scenario.model_dump(mode="json", exclude_none=True), f, sort_keys=False)


def _key_lines(node: yaml.Node | None, prefix: tuple[str, ...] = ()) -> dict[tuple[str, ...], int]:
    """Map each key path of a YAML mapping tree to its 1-based line number."""
    lines: dict[tuple[str, ...], int] = {}
    if isinstance(node, yaml.MappingNode):
        for key_node, value_node in node.value:
            path = (*prefix, str(key_node.value))
            lines[path] = key_node.start_mark.line + 1
            lines.update(_key_lines(value_node, path))
    return lines


def _describe(
    path: Path, lines: dict[tuple[str, ...], int], loc: tuple[int | str, ...], msg: str
) -> str:
    keys = tuple(str(part) for part in loc)
    # the innermost key present in the file locates the error
    for end in range(len(keys), 0, -1):
        line = lines.get(keys[:end])
        if line is not None:
            return f"{path}:{line}: {'.'.join(keys)}: {msg}"
    where = ".".join(keys) or "scenario"
    return f"{path}: {where}: {msg}"

from __future__ import annotations

import asyncio
import contextlib
from collections.abc import Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from fragmac.app import RunResult, simulate
from fragmac.config import ProtocolName, Scenario
from fragmac.metrics import avg_delay, normalized_throughput, throughput
from fragmac.packet import Priority
from fragmac.utils.logging import StreamToLogger, logger

NOT_APPLICABLE = "n/a"
"""Fragment-size value of protocols that do not use the fixed fragment size."""


class ResultRow(BaseModel):
    """Per-class outcome of one run. Field order is the CSV column order."""

    model_config = ConfigDict(frozen=True)

    scenario_id: str
    protocol: ProtocolName
    nodes: int
    fragment_size: str
    seed: int
    class_: Priority
    avg_delay_s: float | None = None
    """Mean generation-to-reassembly delay; empty when nothing was delivered."""
    throughput_units_s: float | None = None
    normalized_throughput: float | None = None
    """Delivered over generated payload units."""
    generated_count: int = 0
    delivered_count: int = 0
    dropped_count: int = 0
    in_flight_count: int = 0
    trace_digest: str = ""
    error: str = ""

    @field_validator("avg_delay_s", "throughput_units_s", "normalized_throughput", mode="before")
    @classmethod
    def _empty_is_none(cls, value: Any) -> Any:
        return None if value == "" else value


COLUMNS = [name.rstrip("_") for name in ResultRow.model_fields]
CLASSES = (Priority.NORMAL, Priority.URGENT)


def _row_dict(row: ResultRow) -> dict[str, Any]:
    return {name.rstrip("_"): value for name, value in row.model_dump(mode="json").items()}


def _from_dict(data: dict[str, Any]) -> ResultRow:
    return ResultRow.model_validate({("class_" if k == "class" else k): v for k, v in data.items()})


@dataclass(frozen=True, slots=True)
class SweepCell:
    protocol: ProtocolName
    nodes: int
    fragment_size: int | None
    """None for protocols that ignore the fixed fragment size."""
    seed: int

    @property
    def fragment_label(self) -> str:
        return NOT_APPLICABLE if self.fragment_size is None else str(self.fragment_size)

    def scenario_id(self, fragment_size: int | None = None) -> str:
        size = self.fragment_size if fragment_size is None else fragment_size
        return f"{self.protocol}-n{self.nodes}-f{size if size is not None else NOT_APPLICABLE}"

    def scenario(self, base: Scenario) -> Scenario:
        update: dict[str, Any] = {
            "protocol": self.protocol,
            "sources": self.nodes,
            "seed": self.seed,
        }
        if self.fragment_size is not None:
            update["frog"] = base.frog.model_copy(update={"fragment_size": self.fragment_size})
        # re-validate so protocol-specific rules apply to the combined settings
        return Scenario.model_validate(base.model_copy(update=update).model_dump())


def result_rows(result: RunResult, *, scenario_id: str, fragment_size: str) -> list[ResultRow]:
    s = result.scenario
    m = result.metrics
    rows: list[ResultRow] = []
    for priority in CLASSES:
        record = m[priority]
        rows.append(
            ResultRow(
                scenario_id=scenario_id,
                protocol=s.protocol,
                nodes=s.sources,
                fragment_size=fragment_size,
                seed=s.seed,
                class_=priority,
                avg_delay_s=avg_delay(m, priority),
                throughput_units_s=throughput(m, priority, s.horizon),
                normalized_throughput=normalized_throughput(m, priority),
                generated_count=record.generated_count,
                delivered_count=record.delivered_count,
                dropped_count=record.dropped_count,
                in_flight_count=m.in_flight_count(priority),
                trace_digest=result.trace.digest,
            )
        )
    return rows


def error_rows(cell: SweepCell, scenario_id: str, error: str) -> list[ResultRow]:
    return [
        ResultRow(
            scenario_id=scenario_id,
            protocol=cell.protocol,
            nodes=cell.nodes,
            fragment_size=cell.fragment_label,
            seed=cell.seed,
            class_=priority,
            error=error,
        )
        for priority in CLASSES
    ]


def run_experiment(scenario: Scenario, seeds: Iterable[int]) -> list[ResultRow]:
    """Run `scenario` once per seed and return two rows per run."""
    frog = scenario.protocol is ProtocolName.FROG
    cell = SweepCell(
        scenario.protocol,
        scenario.sources,
        scenario.frog.fragment_size if frog else None,
        scenario.seed,
    )
    rows: list[ResultRow] = []
    for seed in seeds:
        result = simulate(scenario.model_copy(update={"seed": seed}))
        rows += result_rows(
            result, scenario_id=cell.scenario_id(), fragment_size=cell.fragment_label
        )
    return rows


def run_cell(base: Scenario, cell: SweepCell, verify_determinism: bool = False) -> list[ResultRow]:
    """
    Simulate one sweep cell. Failures become error rows instead of propagating.

    With `verify_determinism` the cell runs twice and differing digests or rows are
    reported as an error.
    """
    scenario_id = cell.scenario_id()
    with contextlib.redirect_stderr(StreamToLogger()):
        try:
            scenario = cell.scenario(base)
            rows = result_rows(
                simulate(scenario), scenario_id=scenario_id, fragment_size=cell.fragment_label
            )
            if verify_determinism:
                again = result_rows(
                    simulate(scenario), scenario_id=scenario_id, fragment_size=cell.fragment_label
                )
                if again != rows:
                    logger.error("Cell {cell} is not deterministic", cell=scenario_id)
                    return error_rows(
                        cell,
                        scenario_id,
                        f"nondeterministic: {rows[0].trace_digest} != {again[0].trace_digest}",
                    )
            return rows
        except Exception as e:
            logger.exception("Cell {cell} failed", cell=scenario_id)
            return error_rows(cell, scenario_id, f"{type(e).__name__}: {e}")


def sweep_cells(
    protocols: Sequence[ProtocolName],
    node_counts: Sequence[int],
    fragment_sizes: Sequence[int],
    seeds: Sequence[int],
) -> list[SweepCell]:
    """
    The simulations a sweep needs, sorted by axes.

    Protocols other than FROG ignore the fragment-size axis and are simulated once per
    (nodes, seed).

    Raises:
        ValueError: If an axis is empty.
    """
    for name, axis in (
        ("protocols", protocols),
        ("node counts", node_counts),
        ("fragment sizes", fragment_sizes),
        ("seeds", seeds),
    ):
        if not axis:
            raise ValueError(f"Sweep needs at least one value for {name}")
    cells: set[SweepCell] = set()
    for protocol, nodes, size, seed in product(protocols, node_counts, fragment_sizes, seeds):
        frog = protocol is ProtocolName.FROG
        cells.add(SweepCell(protocol, nodes, size if frog else None, seed))
    return sorted(cells, key=_cell_key)


def _cell_key(cell: SweepCell) -> tuple[int, int, int, int]:
    order = list(ProtocolName)
    return order.index(cell.protocol), cell.nodes, -(cell.fragment_size or 0), cell.seed


async def sweep(
    base: Scenario,
    protocols: Sequence[ProtocolName],
    node_counts: Sequence[int],
    fragment_sizes: Sequence[int],
    seeds: Sequence[int],
    *,
    jobs: int = 1,
    verify_determinism: bool = False,
) -> list[ResultRow]:
    """
    Run the cross product of the axes and return the rows sorted by axes.

    Cells run in a process pool when `jobs > 1`. Rows of protocols that ignore the
    fragment size are repeated for every requested fragment size.
    """
    cells = sweep_cells(protocols, node_counts, fragment_sizes, seeds)
    logger.info("Sweeping {n} cells with {jobs} jobs", n=len(cells), jobs=jobs)
    if jobs > 1:
        loop = asyncio.get_running_loop()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [
                loop.run_in_executor(pool, run_cell, base, cell, verify_determinism)
                for cell in cells
            ]
            results = await asyncio.gather(*futures)
    else:
        results = [run_cell(base, cell, verify_determinism) for cell in cells]

    by_cell = dict(zip(cells, results, strict=True))
    rows: list[ResultRow] = []
    for protocol, nodes, size, seed in product(
        sorted(set(protocols), key=list(ProtocolName).index),
        sorted(set(node_counts)),
        sorted(set(fragment_sizes), reverse=True),
        sorted(set(seeds)),
    ):
        if protocol is ProtocolName.FROG:
            rows += by_cell[SweepCell(protocol, nodes, size, seed)]
        else:
            cell = SweepCell(protocol, nodes, None, seed)
            scenario_id = cell.scenario_id(size)
            rows += [r.model_copy(update={"scenario_id": scenario_id}) for r in by_cell[cell]]
    failed = sum(1 for r in rows if r.error)
    if failed:
        logger.warning("{failed} of {total} rows carry errors", failed=failed, total=len(rows))
    return rows


def write_results(rows: Sequence[ResultRow], path: Path) -> None:
    frame = pd.DataFrame([_row_dict(r) for r in rows], columns=COLUMNS)
    frame.to_csv(path, index=False)
    logger.info("Wrote {n} rows to {path}", n=len(rows), path=path)


def read_results(path: Path) -> list[ResultRow]:
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    if list(frame.columns) != COLUMNS:
        raise ValueError(f"{path} does not have the result columns")
    return [_from_dict(record) for record in frame.to_dict(orient="records")]


def summarize(rows: Sequence[ResultRow]) -> pd.DataFrame:
    """Mean and standard error over seeds per (protocol, nodes, fragment size, class)."""
    frame = pd.DataFrame([_row_dict(r) for r in rows if not r.error], columns=COLUMNS)
    metrics = ["avg_delay_s", "throughput_units_s", "normalized_throughput"]
    frame[metrics] = frame[metrics].astype(float)
    grouped = frame.groupby(
        ["protocol", "nodes", "fragment_size", "class"], sort=False
    )[metrics]
    summary = grouped.agg(["mean", "sem"])
    summary.columns = [f"{metric}_{stat}" for metric, stat in summary.columns]
    summary["seeds"] = grouped.size()
    return summary.reset_index()

from __future__ import annotations

import asyncio
import os
import sys
from pathlib import Path
from typing import Annotated

import typer
from rich.console import Console
from rich.table import Table

from fragmac.config import ProtocolName, Scenario
from fragmac.constant import VERSION

cli = typer.Typer(
    add_completion=False,
    context_settings={"help_option_names": ["-h", "--help"]},
    help="Simulate and compare priority-aware MAC protocols with fragmentation.",
)

console = Console()


def _version_callback(value: bool) -> None:
    if value:
        typer.echo(f"fragmac, version {VERSION}")
        raise typer.Exit()


@cli.callback()
def fragmac(
    version: Annotated[
        bool,
        typer.Option(
            "--version",
            "-V",
            help="Show version and exit.",
            callback=_version_callback,
            is_eager=True,
        ),
    ] = False,
    verbose: Annotated[
        bool,
        typer.Option(
            "--verbose",
            help="Print run summaries to stderr. Default: no.",
        ),
    ] = False,
    debug: Annotated[
        bool,
        typer.Option(
            "--debug",
            help="Log every simulated event. Default: no.",
        ),
    ] = False,
):
    """Simulate and compare priority-aware MAC protocols with fragmentation."""
    del version  # handled in the callback

    from fragmac.app import enable_logging

    enable_logging(debug, verbose)


def parse_int_spec(spec: str) -> list[int]:
    """
    Parse `1,2,5` or `1..10` (inclusive) or a mix such as `1..3,8`.

    Raises:
        ValueError: If the spec is empty or malformed.
    """
    values: list[int] = []
    for part in (p.strip() for p in spec.split(",")):
        if not part:
            continue
        if ".." in part:
            lo, hi = (int(x) for x in part.split("..", 1))
            if lo > hi:
                raise ValueError(f"Empty range: {part}")
            values.extend(range(lo, hi + 1))
        else:
            values.append(int(part))
    if not values:
        raise ValueError("No values given")
    return list(dict.fromkeys(values))


def _int_spec(spec: str, param_hint: str) -> list[int]:
    try:
        return parse_int_spec(spec)
    except ValueError as e:
        raise typer.BadParameter(str(e), param_hint=param_hint) from e


def _load(path: Path | None, protocol: ProtocolName | None) -> Scenario:
    from fragmac.config import get_default_scenario, load_scenario
    from fragmac.exception import ConfigError

    if path is None:
        return get_default_scenario(protocol or ProtocolName.FROG)
    try:
        scenario = load_scenario(path)
        if protocol is not None:
            data = scenario.model_dump()
            data["protocol"] = protocol
            scenario = Scenario.model_validate(data)
    except (ConfigError, ValueError) as e:
        raise typer.BadParameter(str(e), param_hint="SCENARIO") from e
    return scenario


def _fmt(value: float | None, digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}g}"


@cli.command()
def run(
    scenario_file: Annotated[
        Path | None,
        typer.Argument(
            metavar="SCENARIO",
            exists=True,
            file_okay=True,
            dir_okay=False,
            readable=True,
            help="Scenario file. Default: built-in defaults.",
        ),
    ] = None,
    protocol: Annotated[
        ProtocolName | None,
        typer.Option("--protocol", "-p", help="Override the scenario protocol."),
    ] = None,
    seed: Annotated[
        int | None,
        typer.Option("--seed", "-s", min=0, help="Master seed. Default: from the scenario."),
    ] = None,
    trace_out: Annotated[
        Path | None,
        typer.Option(
            "--trace-out",
            dir_okay=False,
            writable=True,
            help="Write every processed event as JSON lines. Default: none.",
        ),
    ] = None,
):
    """Run one simulation and print per-class metrics."""
    from fragmac.app import simulate
    from fragmac.experiment import NOT_APPLICABLE, result_rows
    from fragmac.sim.trace import dump_trace

    scenario = _load(scenario_file, protocol)
    if seed is not None:
        scenario = scenario.model_copy(update={"seed": seed})

    result = simulate(scenario, record_events=trace_out is not None)
    if trace_out is not None:
        dump_trace(result.trace, trace_out)

    frog = scenario.protocol is ProtocolName.FROG
    rows = result_rows(
        result,
        scenario_id=f"{scenario.protocol}-n{scenario.sources}",
        fragment_size=str(scenario.frog.fragment_size) if frog else NOT_APPLICABLE,
    )
    table = Table(
        title=f"{scenario.protocol} · {scenario.sources} sources · seed {scenario.seed}",
        border_style="wheat4",
    )
    table.add_column("Class", style="cyan")
    table.add_column("Avg delay (s)", justify="right")
    table.add_column("Throughput (units/s)", justify="right")
    table.add_column("Normalized", justify="right")
    table.add_column("Generated", justify="right", style="green")
    table.add_column("Delivered", justify="right", style="green")
    table.add_column("Dropped", justify="right", style="red")
    table.add_column("In flight", justify="right", style="yellow")
    for row in rows:
        table.add_row(
            row.class_,
            _fmt(row.avg_delay_s),
            _fmt(row.throughput_units_s),
            _fmt(row.normalized_throughput),
            str(row.generated_count),
            str(row.delivered_count),
            str(row.dropped_count),
            str(row.in_flight_count),
        )
    console.print(table)
    console.print(f"Trace digest: [bold]{result.trace.digest}[/bold] ({result.trace.count} events)")


@cli.command()
def sweep(
    out: Annotated[
        Path,
        typer.Option("--out", "-o", dir_okay=False, writable=True, help="CSV file to write."),
    ],
    scenario_file: Annotated[
        Path | None,
        typer.Option(
            "--scenario",
            exists=True,
            file_okay=True,
            dir_okay=False,
            readable=True,
            help="Base scenario for every cell. Default: built-in defaults.",
        ),
    ] = None,
    protocols: Annotated[
        list[ProtocolName] | None,
        typer.Option(
            "--protocol",
            "-p",
            help="Protocol to include; repeat for several. Default: all.",
        ),
    ] = None,
    nodes: Annotated[
        str,
        typer.Option("--nodes", "-n", help="Source counts, e.g. `1..10` or `2,4,8`."),
    ] = "1..10",
    fragment_sizes: Annotated[
        list[int] | None,
        typer.Option(
            "--fragment-size",
            "-f",
            min=1,
            help="FROG fragment size; repeat for several. Default: 16 and 2.",
        ),
    ] = None,
    seeds: Annotated[
        str,
        typer.Option("--seeds", "-s", help="Seeds, e.g. `1..10`."),
    ] = "1..10",
    jobs: Annotated[
        int,
        typer.Option("--jobs", "-j", min=1, help="Parallel worker processes. Default: CPUs."),
    ] = os.cpu_count() or 1,
    verify_determinism: Annotated[
        bool,
        typer.Option(
            "--verify-determinism",
            help="Run every cell twice and flag differing results. Default: no.",
        ),
    ] = False,
):
    """Run the cross product of protocols, node counts, fragment sizes and seeds."""
    from fragmac.experiment import sweep as run_sweep
    from fragmac.experiment import write_results

    base = _load(scenario_file, None)
    node_counts = _int_spec(nodes, "--nodes")
    seed_list = _int_spec(seeds, "--seeds")
    if any(n < 1 for n in node_counts):
        raise typer.BadParameter("Source counts must be at least 1", param_hint="--nodes")

    rows = asyncio.run(
        run_sweep(
            base,
            protocols or list(ProtocolName),
            node_counts,
            fragment_sizes or [16, 2],
            seed_list,
            jobs=jobs,
            verify_determinism=verify_determinism,
        )
    )
    write_results(rows, out)
    failed = [r for r in rows if r.error]
    console.print(f"Wrote {len(rows)} rows to {out}")
    if failed:
        console.print(f"[red]{len(failed)} rows carry errors, e.g. {failed[0].error}[/red]")
        raise typer.Exit(code=1)


@cli.command()
def summarize(
    results: Annotated[
        Path,
        typer.Argument(
            exists=True, file_okay=True, dir_okay=False, readable=True, help="Sweep CSV file."
        ),
    ],
):
    """Print means and standard errors over seeds for a sweep CSV."""
    from fragmac.experiment import read_results
    from fragmac.experiment import summarize as summarize_rows

    try:
        rows = read_results(results)
    except ValueError as e:
        raise typer.BadParameter(str(e), param_hint="RESULTS") from e
    summary = summarize_rows(rows)

    table = Table(title=str(results), border_style="wheat4")
    for column in ("protocol", "nodes", "fragment", "class", "seeds"):
        table.add_column(column.capitalize(), style="cyan" if column == "protocol" else None)
    for column in ("Delay (s)", "± SE", "Throughput", "± SE", "Normalized", "± SE"):
        table.add_column(column, justify="right")
    for record in summary.to_dict(orient="records"):
        table.add_row(
            str(record["protocol"]),
            str(record["nodes"]),
            str(record["fragment_size"]),
            str(record["class"]),
            str(record["seeds"]),
            *(
                _fmt(_number(record[f"{metric}_{stat}"]))
                for metric in ("avg_delay_s", "throughput_units_s", "normalized_throughput")
                for stat in ("mean", "sem")
            ),
        )
    console.print(table)


def _number(value: object) -> float | None:
    # pandas reports missing aggregates as NaN
    if not isinstance(value, int | float) or value != value:
        return None
    return float(value)


if __name__ == "__main__":
    if "fragmac.cli" not in sys.modules:
        sys.modules["fragmac.cli"] = sys.modules[__name__]

    sys.exit(cli())

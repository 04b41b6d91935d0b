from __future__ import annotations

import json
from pathlib import Path

import pytest
from rich.console import Console
from typer.testing import CliRunner

from fragmac.app import simulate
from fragmac.cli import cli, parse_int_spec
from fragmac.config import load_scenario
from fragmac.constant import VERSION
from fragmac.experiment import read_results

runner = CliRunner()

pytestmark = pytest.mark.usefixtures("isolated_share_dir", "wide_console")


@pytest.fixture
def wide_console(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setattr("fragmac.cli.console", Console(width=200))


@pytest.fixture
def scenario_file(tmp_path: Path) -> Path:
    path = tmp_path / "scenario.yaml"
    path.write_text("protocol: frog\nsources: 2\nhorizon: 0.5\n", encoding="utf-8")
    return path


@pytest.mark.parametrize(
    ("spec", "values"),
    [
        ("3", [3]),
        ("1..4", [1, 2, 3, 4]),
        ("1..3,8", [1, 2, 3, 8]),
        ("2, 2,1", [2, 1]),
    ],
)
def test_parse_int_spec(spec: str, values: list[int]):
    assert parse_int_spec(spec) == values


@pytest.mark.parametrize("spec", ["", " , ", "5..1", "a", "1..b"])
def test_parse_int_spec_rejects(spec: str):
    with pytest.raises(ValueError):
        parse_int_spec(spec)


def test_version():
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert result.output.strip() == f"fragmac, version {VERSION}"


def test_run_prints_metrics_and_digest(scenario_file: Path, tmp_path: Path):
    trace = tmp_path / "trace.jsonl"
    result = runner.invoke(cli, ["run", str(scenario_file), "--trace-out", str(trace)])
    assert result.exit_code == 0, result.output

    expected = simulate(load_scenario(scenario_file))
    assert f"Trace digest: {expected.trace.digest}" in result.output
    assert "normal" in result.output
    assert "urgent" in result.output

    lines = trace.read_text().splitlines()
    assert len(lines) == expected.trace.count + 1
    assert json.loads(lines[-1])["_digest"] == expected.trace.digest


def test_run_overrides_protocol_and_seed(scenario_file: Path):
    result = runner.invoke(cli, ["run", str(scenario_file), "-p", "idsme", "-s", "7"])
    assert result.exit_code == 0, result.output
    assert "idsme · 2 sources · seed 7" in result.output


def test_run_rejects_invalid_scenario(tmp_path: Path):
    path = tmp_path / "bad.yaml"
    path.write_text("protocol: frog\nsources: 0\n", encoding="utf-8")
    result = runner.invoke(cli, ["run", str(path)])
    assert result.exit_code == 2


def test_run_rejects_missing_scenario(tmp_path: Path):
    result = runner.invoke(cli, ["run", str(tmp_path / "missing.yaml")])
    assert result.exit_code == 2


def _sweep_args(scenario_file: Path, out: Path, *extra: str) -> list[str]:
    return ["sweep", "-o", str(out), "--scenario", str(scenario_file), "-j", "1", *extra]


def test_sweep_then_summarize(scenario_file: Path, tmp_path: Path):
    out = tmp_path / "results.csv"
    args = _sweep_args(scenario_file, out, "-p", "frog", "-p", "dyfrag", "-n", "1", "-s", "1..2")
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    # frog at two fragment sizes, dyfrag repeated for both
    assert "Wrote 16 rows" in result.output
    rows = read_results(out)
    assert len(rows) == 16
    assert not any(r.error for r in rows)

    result = runner.invoke(cli, ["summarize", str(out)])
    assert result.exit_code == 0, result.output
    assert "frog" in result.output
    assert "dyfrag" in result.output


@pytest.mark.parametrize(
    "extra", [("-s", ""), ("-n", "0"), ("-n", "3..1"), ("-f", "0"), ("-p", "csma")]
)
def test_sweep_rejects_bad_axes(scenario_file: Path, tmp_path: Path, extra: tuple[str, str]):
    out = tmp_path / "results.csv"
    result = runner.invoke(cli, _sweep_args(scenario_file, out, *extra))
    assert result.exit_code == 2
    assert not out.exists()


def test_sweep_fails_when_cells_fail(
    scenario_file: Path, tmp_path: Path, monkeypatch: pytest.MonkeyPatch
):
    def explode(*args: object, **kwargs: object):
        raise RuntimeError("boom")

    monkeypatch.setattr("fragmac.experiment.simulate", explode)
    out = tmp_path / "results.csv"
    args = _sweep_args(scenario_file, out, "-p", "idsme", "-n", "1", "-s", "1")
    result = runner.invoke(cli, args)
    assert result.exit_code == 1
    assert [r.error for r in read_results(out)] == ["RuntimeError: boom"] * 4


def test_summarize_rejects_foreign_csv(tmp_path: Path):
    path = tmp_path / "other.csv"
    path.write_text("a,b\n1,2\n")
    result = runner.invoke(cli, ["summarize", str(path)])
    assert result.exit_code == 2

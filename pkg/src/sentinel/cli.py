"""Command line entry points: run, replay, compare, serve."""

from __future__ import annotations

import json
import os
import sys
import threading
import time

import click

from . import harness
from .canon import canonical_json
from .journal import CorruptJournal
from .pipeline import Pipeline
from .scenario import ScenarioError, load_scenario, scenario_from_dict


def _emit_report(report: dict, report_path: str | None) -> None:
    if report_path:
        harness.write_report(report, report_path)
        click.echo(f"report written to {report_path}")
    else:
        click.echo(canonical_json(report))


@click.group()
def main() -> None:
    """Sentinel: WSN security operations at desk scale."""


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path())
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--journal", "journal_path", type=click.Path(), default=None)
def run(scenario_path: str, seed: int | None, report_path: str | None, journal_path: str | None) -> None:
    """Run a scenario to completion and write its report and journal."""
    try:
        config = load_scenario(scenario_path, seed)
    except ScenarioError as exc:
        for diag in exc.diagnostics:
            click.echo(f"scenario error: {diag}", err=True)
        sys.exit(2)
    report, _ = harness.run(config=config, journal_path=journal_path, report_path=report_path)
    if not report_path:
        _emit_report(report, None)
    else:
        click.echo(f"report written to {report_path}")
    sys.exit(0)


@main.command()
@click.argument("journal_path", type=click.Path(exists=True))
@click.option("--report", "report_path", type=click.Path(), default=None)
def replay(journal_path: str, report_path: str | None) -> None:
    """Rebuild a run report purely from its journal."""
    try:
        report = harness.replay(journal_path, report_path)
    except CorruptJournal as exc:
        click.echo(f"journal corrupt at seq {exc.seq}: {exc.reason}", err=True)
        sys.exit(3)
    if not report_path:
        _emit_report(report, None)
    sys.exit(0)


@main.command()
@click.argument("report_a", type=click.Path())
@click.argument("report_b", type=click.Path())
def compare(report_a: str, report_b: str) -> None:
    """Field-by-field diff of two reports; exit 0 when equal."""
    try:
        equal, lines = harness.compare(report_a, report_b)
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"cannot compare: {exc}", err=True)
        sys.exit(2)
    for line in lines:
        click.echo(line)
    sys.exit(0 if equal else 1)


DEFAULT_SERVE_SCENARIO = {
    "name": "gateway-default",
    "seed": 1,
    "duration_s": 86400,
    "topology": {"generator": {"n": 10, "area_m": 200, "sink": "sink"}},
}


@main.command()
@click.option("--scenario", "scenario_path", type=click.Path(exists=True), default=None)
@click.option("--port", type=int, default=None, help="Defaults to SENTINEL_PORT or 8080.")
@click.option("--host", default="127.0.0.1")
@click.option("--token", default=None, help="Static bearer token; unset disables auth.")
@click.option("--console", "console_dir", type=click.Path(exists=True), default=None,
              help="Directory with the built operations console; served at /.")
@click.option("--realtime-factor", type=float, default=None, help="Advance N simulated seconds per wall second.")
def serve(scenario_path: str | None, port: int | None, host: str, token: str | None,
          console_dir: str | None, realtime_factor: float | None) -> None:
    """Start the HTTP gateway with a live scenario."""
    import uvicorn

    from .gateway import create_app

    try:
        if scenario_path:
            config = load_scenario(scenario_path)
        else:
            config = scenario_from_dict(DEFAULT_SERVE_SCENARIO)
    except ScenarioError as exc:
        for diag in exc.diagnostics:
            click.echo(f"scenario error: {diag}", err=True)
        sys.exit(2)
    journal_path = harness.data_dir() / f"{config.name}.journal.jsonl"
    pipeline = Pipeline(config, journal_path=journal_path)
    app = create_app(pipeline, token=token, console_dir=console_dir)

    if realtime_factor:
        def pace() -> None:
            step_ms = max(100, int(realtime_factor * 1000))
            while True:
                time.sleep(1.0)
                with pipeline.lock:
                    target = min(pipeline.sim.clock_ms + step_ms, config.duration_ms)
                    if target > pipeline.sim.clock_ms:
                        pipeline.drive(target)

        threading.Thread(target=pace, daemon=True).start()

    port = port if port is not None else int(os.environ.get("SENTINEL_PORT", "8080"))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()

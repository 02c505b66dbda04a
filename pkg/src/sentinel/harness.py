"""Scenario runner: drive a scenario deterministically and report on it.

Reports are canonical JSON, so byte comparison is a valid equality test;
``replay`` rebuilds the identical report purely from the journal.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any

from .canon import canonical_json, sha256_hex
from .pipeline import ATTACK_DETECTION_MAP, Pipeline, ReplayedState, replay_journal
from .scenario import ScenarioConfig, load_scenario
from .sim import PJ_PER_J

DEFAULT_DATA_DIR = "sentinel_data"


def data_dir() -> Path:
    return Path(os.environ.get("SENTINEL_DATA_DIR", DEFAULT_DATA_DIR))


def build_report(
    state: dict[str, Any],
    event_log: list[tuple[str, str, int]],
    attack_starts: list[dict[str, Any]],
    fleet: list[str],
    scenario: str,
    seed: int,
) -> dict[str, Any]:
    """Shared between live runs and journal replays; inputs must already agree."""
    latencies: dict[str, float] = {}
    for atk in attack_starts:
        expected_type = ATTACK_DETECTION_MAP.get(atk["attack_kind"])
        if expected_type is None:
            continue
        start = atk["t_ms"]
        target = atk["target"]
        for etype, source, created in event_log:
            if etype == expected_type and source == target and created >= start:
                latencies[atk["attack_id"]] = (created - start) / 1000.0
                break
    batteries = state["sim"]["batteries_pj"]
    fleet_batteries = [batteries[nid] for nid in fleet if nid in batteries]
    statuses = state["sim"]["statuses"]
    dead_fleet = sum(1 for nid in fleet if statuses.get(nid) == "Dead")
    energy = {
        "min_battery_j": min(fleet_batteries) / PJ_PER_J if fleet_batteries else 0.0,
        "mean_battery_j": (sum(fleet_batteries) / len(fleet_batteries)) / PJ_PER_J if fleet_batteries else 0.0,
        "dead_nodes": dead_fleet,
    }
    return {
        "scenario": scenario,
        "seed": seed,
        "clock_ms": state["clock_ms"],
        "counts": {
            "telemetry": state["telemetry"]["delivered_total"],
            "events": state["events_by_type"],
            "alerts": len(state["alerts"]),
            "incidents": len(state["incidents"]),
        },
        "detection_latency_s": latencies,
        "sla_breaches": state["events_by_type"].get("sla_breach", 0),
        "suppressed_unauthorized": state["suppressed_unauthorized"],
        "energy": energy,
        "final_state_digest": sha256_hex(canonical_json(state)),
    }


def report_from_pipeline(pipeline: Pipeline) -> dict[str, Any]:
    config = pipeline.config
    fleet = [nid for nid, _, _ in sorted(config.placements) if nid != config.sink_id]
    return build_report(
        pipeline.state_view(),
        pipeline.event_log,
        pipeline.attack_starts,
        fleet,
        config.name,
        config.seed,
    )


def report_from_replay(state: ReplayedState) -> dict[str, Any]:
    fleet = sorted(nid for nid in state.meta.get("nodes", []) if nid != state.meta.get("sink_id"))
    return build_report(
        state.state_view(),
        state.event_log,
        state.attack_starts,
        fleet,
        state.meta.get("scenario", "unknown"),
        state.meta.get("seed", 0),
    )


def write_report(report: dict[str, Any], path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(canonical_json(report) + "\n", encoding="utf-8")


def run(
    scenario_path: str | Path | None = None,
    config: ScenarioConfig | None = None,
    seed_override: int | None = None,
    report_path: str | Path | None = None,
    journal_path: str | Path | None = None,
    keep_journal_memory: bool = False,
    ledger_trace: bool = False,
) -> tuple[dict[str, Any], Pipeline]:
    """Run a scenario end to end; returns (report, finished pipeline)."""
    if config is None:
        config = load_scenario(scenario_path, seed_override)
    if journal_path is None:
        journal_path = data_dir() / f"{config.name}.journal.jsonl"
    pipeline = Pipeline(
        config,
        journal_path=journal_path,
        keep_journal_memory=keep_journal_memory,
        ledger_trace=ledger_trace,
    )
    pipeline.drive(config.duration_ms)
    pipeline.finalize()
    pipeline.journal.close()
    report = report_from_pipeline(pipeline)
    if report_path is not None:
        write_report(report, report_path)
    return report, pipeline


def replay(journal_path: str | Path, report_path: str | Path | None = None) -> dict[str, Any]:
    """Reconstruct the run report purely from its journal."""
    state, info = replay_journal(journal_path)
    report = report_from_replay(state)
    if info["truncated"]:
        report["truncated"] = info["truncated_detail"]
    if report_path is not None:
        write_report(report, report_path)
    return report


def diff_reports(a: dict[str, Any], b: dict[str, Any], prefix: str = "") -> list[str]:
    lines: list[str] = []
    keys = sorted(set(a) | set(b))
    for key in keys:
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in a:
            lines.append(f"{path}: missing on left")
        elif key not in b:
            lines.append(f"{path}: missing on right")
        elif isinstance(a[key], dict) and isinstance(b[key], dict):
            lines.extend(diff_reports(a[key], b[key], path))
        elif a[key] != b[key]:
            lines.append(f"{path}: {a[key]!r} != {b[key]!r}")
    return lines


def compare(path_a: str | Path, path_b: str | Path) -> tuple[bool, list[str]]:
    with open(path_a, encoding="utf-8") as fh:
        a = json.load(fh)
    with open(path_b, encoding="utf-8") as fh:
        b = json.load(fh)
    lines = diff_reports(a, b)
    return not lines, lines

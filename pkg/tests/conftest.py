from __future__ import annotations

from pathlib import Path

import pytest

from sentinel.scenario import scenario_from_dict

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "sentinel" / "scenarios"


def line_scenario(**overrides):
    """Three nodes on a line: sink - n1 (50 m) - n2 (120 m), hop counts 1 and 2."""
    raw = {
        "name": "line",
        "seed": 7,
        "duration_s": 120,
        "topology": {"placements": [["sink", 0, 0], ["n1", 50, 0], ["n2", 120, 0]], "sink": "sink"},
        "radio_range_m": 100,
        "emit_period_s": 10,
        "jitter": 0,
    }
    raw.update(overrides)
    return scenario_from_dict(raw)


@pytest.fixture
def scenario_dir() -> Path:
    return SCENARIO_DIR

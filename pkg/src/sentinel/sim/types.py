"""Domain types for the simulation core.

Energy is accounted in integer picojoules so that conservation holds
exactly (no float drift): 1 J == 1e12 pJ, and 1 nW running for 1 ms costs
exactly 1 pJ. Time is integer milliseconds of simulated time.

Telemetry records and state deltas are plain dicts (they go straight into
the journal). A telemetry record carries:
    seq, source_id, sink_arrival_ms, sensor_kind, value, checksum_ok, hop_count
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

PJ_PER_J = 10**12

SENSOR_KINDS = ("temperature", "humidity", "generic")

ATTACK_KINDS = ("flood", "jam", "tamper", "rogue_join", "drain")


class NodeStatus(str, Enum):
    ACTIVE = "Active"
    QUARANTINED = "Quarantined"
    POWERED_OFF = "PoweredOff"
    DEAD = "Dead"
    COMPROMISED = "Compromised"


# Statuses that may forward other nodes' packets toward the sink.
RELAY_CAPABLE = frozenset({NodeStatus.ACTIVE, NodeStatus.COMPROMISED})

# Statuses that still transmit (a quarantined node keeps flooding; the sink
# just refuses its packets).
EMITTING = frozenset({NodeStatus.ACTIVE, NodeStatus.COMPROMISED, NodeStatus.QUARANTINED})


@dataclass
class EnergyModel:
    """Per-packet and idle energy costs. Values in joules/watts."""

    e_tx_j: float = 5e-5
    e_rx_j: float = 3e-5
    idle_w: float = 1e-6
    initial_battery_j: float = 100.0
    sample_period_s: float = 10.0

    def __post_init__(self) -> None:
        for name in ("e_tx_j", "e_rx_j", "idle_w", "initial_battery_j"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.sample_period_s <= 0:
            raise ValueError("sample_period_s must be > 0")
        self.e_tx_pj = round(self.e_tx_j * PJ_PER_J)
        self.e_rx_pj = round(self.e_rx_j * PJ_PER_J)
        # idle power in pJ per ms: 1 W == 1e9 pJ/ms
        self.idle_pj_per_ms = round(self.idle_w * 1e9)
        self.initial_battery_pj = round(self.initial_battery_j * PJ_PER_J)
        self.sample_period_ms = round(self.sample_period_s * 1000)


@dataclass
class NodeState:
    node_id: str
    x: float
    y: float
    battery_pj: int
    status: NodeStatus = NodeStatus.ACTIVE
    parent: str | None = None
    emit_period_ms: int = 10_000
    sensor_kind: str = "temperature"
    is_sink: bool = False
    is_rogue: bool = False
    base_value: float = 25.0
    ramp_start_ms: int | None = None
    ramp_per_s: float = 0.0
    # bookkeeping
    last_idle_ms: int = 0
    idle_multiplier: int = 1
    period_divisor: int = 1
    epoch: int = 0
    tx_count: int = 0
    rx_count: int = 0

    @property
    def battery_j(self) -> float:
        return self.battery_pj / PJ_PER_J

    def current_period_ms(self) -> int:
        return max(1, self.emit_period_ms // self.period_divisor)


@dataclass
class AttackSpec:
    """One scheduled attack. Exactly one kind; params are kind-specific."""

    kind: str
    target: str | None
    start_ms: int
    duration_ms: int
    params: dict[str, Any] = field(default_factory=dict)
    attack_id: str = ""

    def validate(self) -> None:
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.start_ms < 0:
            raise ValueError("start_s must be >= 0")
        if self.duration_ms <= 0:
            raise ValueError("duration_s must be > 0")
        if self.kind == "flood":
            if self.params.get("multiplier", 0) <= 1:
                raise ValueError("flood.multiplier must be > 1")
        elif self.kind == "jam":
            p = self.params.get("drop_prob")
            if p is None or not (0.0 <= p <= 1.0):
                raise ValueError("jam.drop_prob must be in [0, 1]")
        elif self.kind == "rogue_join":
            if not self.params.get("source_id"):
                raise ValueError("rogue_join.source_id required")
        elif self.kind == "tamper":
            if "offset" not in self.params:
                raise ValueError("tamper.offset required")
        elif self.kind == "drain":
            if self.params.get("idle_multiplier", 0) <= 1:
                raise ValueError("drain.idle_multiplier must be > 1")
        if self.kind != "rogue_join" and not self.target:
            raise ValueError(f"{self.kind} attack requires a target")

    @property
    def end_ms(self) -> int:
        return self.start_ms + self.duration_ms


def finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)

"""Scenario files: schema, validation, and simulator construction.

YAML is accepted for authoring; everything is canonicalized to JSON-shaped
dicts internally and JSON is the normative schema. Validation collects
field-path diagnostics instead of stopping at the first problem so a bad
file is fixable in one pass.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .events import DetectorConfig, FloodConfig
from .incidents import AutoIncidentRules, SlaPolicy
from .ingest import FieldMap, TransformMap
from .rng import stream
from .sim import AttackSpec, EnergyModel, NodeState, SimCore

DEFAULT_BASE_VALUE = {"temperature": 25.0, "humidity": 50.0, "generic": 1.0}


class ScenarioError(ValueError):
    def __init__(self, diagnostics: list[str]) -> None:
        self.diagnostics = diagnostics
        super().__init__("; ".join(diagnostics))


@dataclass
class AutoResponseRule:
    on_event: str
    action: str
    target: str = "$source"  # "$source" resolves to the triggering event's source
    delay_s: float = 0.0
    source: str | None = None  # restrict to one source id
    actor: str = "auto-responder"
    params: dict[str, Any] = field(default_factory=dict)


@dataclass
class ScenarioConfig:
    name: str
    seed: int
    duration_ms: int
    placements: list[tuple[str, float, float]]
    sink_id: str
    radio_range_m: float
    energy: EnergyModel
    emit_period_ms: int
    jitter_frac: float
    sensor_kind: str
    detectors: DetectorConfig
    attacks: list[AttackSpec]
    rules: AutoIncidentRules
    sla: SlaPolicy
    auto_response: list[AutoResponseRule]
    environment: list[dict[str, Any]]
    transform_maps: list[TransformMap]
    max_import_rows: int = 10_000
    raw: dict[str, Any] = field(default_factory=dict)

    def build_sim(self, ledger_trace: bool = False) -> SimCore:
        env_by_node = {e["node"]: e for e in self.environment}
        nodes = []
        for nid, x, y in self.placements:
            env = env_by_node.get(nid, {})
            kind = env.get("sensor_kind", self.sensor_kind)
            node = NodeState(
                node_id=nid,
                x=x,
                y=y,
                battery_pj=self.energy.initial_battery_pj,
                emit_period_ms=round(float(env.get("emit_period_s", self.emit_period_ms / 1000)) * 1000),
                sensor_kind=kind,
                base_value=float(env.get("base", DEFAULT_BASE_VALUE.get(kind, 0.0))),
            )
            ramp = env.get("ramp")
            if ramp:
                node.ramp_start_ms = round(float(ramp["start_s"]) * 1000)
                node.ramp_per_s = float(ramp["rate_per_s"])
            nodes.append(node)
        sim = SimCore(
            nodes,
            self.sink_id,
            self.radio_range_m,
            self.energy,
            seed=self.seed,
            jitter_frac=self.jitter_frac,
            ledger_trace=ledger_trace,
        )
        for spec in self.attacks:
            sim.inject_attack(spec)
        return sim


def default_transform_maps() -> list[TransformMap]:
    """Built-in maps for the two canonical feeds.

    asset_feed reconciles device rows into the CMDB on node_id; sensor_feed
    normalizes external telemetry rows into sink records.
    """
    asset = TransformMap(
        source_table="asset_feed",
        target="cmdb_ci",
        field_maps=[
            FieldMap("node_id", "node_id"),
            FieldMap("class", "class"),
            FieldMap("kind", "sensor_kind"),
            FieldMap("x", "location_x", "to_number"),
            FieldMap("y", "location_y", "to_number"),
            FieldMap("overheat_c", "overheat_c", "to_number"),
        ],
        coalesce_keys=["node_id"],
        on_missing="error_row",
        target_class="SensorNode",
    )
    sensor = TransformMap(
        source_table="sensor_feed",
        target="telemetry",
        field_maps=[
            FieldMap("node_id", "source_id"),
            FieldMap("value", "value", "to_number"),
            FieldMap("kind", "sensor_kind"),
            FieldMap("checksum_ok", "checksum_ok"),
            FieldMap("t_ms", "sink_arrival_ms", "to_number"),
        ],
        coalesce_keys=["source_id"],
        on_missing="error_row",
    )
    return [asset, sensor]


def _parse_transform_map(obj: dict[str, Any], diags: list[str], where: str) -> TransformMap | None:
    try:
        field_maps = []
        for fm in obj.get("field_maps", []):
            coercion = fm.get("coercion", "identity")
            scale = 1.0
            if isinstance(coercion, dict):
                scale = float(coercion.get("scale", 1.0))
                coercion = "scale"
            field_maps.append(FieldMap(fm["source"], fm["target"], coercion, scale))
        return TransformMap(
            source_table=obj["source_table"],
            target=obj.get("target", "cmdb_ci"),
            field_maps=field_maps,
            coalesce_keys=list(obj.get("coalesce_keys", [])),
            on_missing=obj.get("on_missing", "error_row"),
            target_class=obj.get("target_class"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        diags.append(f"{where}: {exc}")
        return None


def _generate_placements(
    gen: dict[str, Any], seed: int, radio_range_m: float, diags: list[str]
) -> tuple[list[tuple[str, float, float]], str]:
    n = int(gen.get("n", 0))
    if n < 1:
        diags.append("topology.generator.n: must be >= 1")
        return [], "sink"
    area = float(gen.get("area_m", 500.0))
    sink_id = str(gen.get("sink", "sink"))
    prefix = str(gen.get("prefix", "n"))
    width = len(str(n))
    rng = stream(seed, "placement")
    placements: list[tuple[str, float, float]] = [(sink_id, round(area / 2, 1), round(area / 2, 1))]
    for i in range(1, n + 1):
        x = round(rng.random() * area, 1)
        y = round(rng.random() * area, 1)
        placements.append((f"{prefix}{i:0{width}d}", x, y))
    # Redraw stragglers so every generated fleet is connected; the redraw
    # order is fixed, so repair is as deterministic as the first draw.
    from .sim import build_topology

    for _ in range(100):
        topo = build_topology(placements, sink_id, radio_range_m)
        if not topo.disconnected:
            break
        stray = sorted(topo.disconnected)
        by_id = {p[0]: i for i, p in enumerate(placements)}
        for nid in stray:
            x = round(rng.random() * area, 1)
            y = round(rng.random() * area, 1)
            placements[by_id[nid]] = (nid, x, y)
    return placements, sink_id


def load_scenario(path: str | Path, seed_override: int | None = None) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError([f"cannot read scenario: {exc}"]) from exc
    try:
        if path.suffix in (".yaml", ".yml"):
            raw = yaml.safe_load(text)
        else:
            raw = json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ScenarioError([f"scenario does not parse: {exc}"]) from exc
    if not isinstance(raw, dict):
        raise ScenarioError(["scenario must be a mapping"])
    return scenario_from_dict(raw, seed_override)


def scenario_from_dict(raw: dict[str, Any], seed_override: int | None = None) -> ScenarioConfig:
    diags: list[str] = []

    name = raw.get("name")
    if not name or not isinstance(name, str):
        diags.append("name: required string")
        name = "unnamed"
    if "seed" not in raw and seed_override is None:
        diags.append("seed: required")
    seed = int(seed_override if seed_override is not None else raw.get("seed", 0))
    if "duration_s" not in raw:
        diags.append("duration_s: required")
    duration_ms = round(float(raw.get("duration_s", 0)) * 1000)
    if duration_ms <= 0:
        diags.append("duration_s: must be > 0")

    radio_range_m = float(raw.get("radio_range_m", 100.0))

    topo = raw.get("topology", {})
    placements: list[tuple[str, float, float]] = []
    sink_id = "sink"
    if "generator" in topo:
        placements, sink_id = _generate_placements(topo["generator"], seed, radio_range_m, diags)
    elif "placements" in topo:
        sink_id = str(topo.get("sink", "sink"))
        for i, p in enumerate(topo["placements"]):
            try:
                placements.append((str(p[0]), float(p[1]), float(p[2])))
            except (IndexError, TypeError, ValueError):
                diags.append(f"topology.placements[{i}]: expected [id, x, y]")
        if sink_id not in {p[0] for p in placements}:
            diags.append(f"topology.sink: {sink_id!r} not in placements")
    else:
        diags.append("topology: requires either generator or placements")

    try:
        energy = EnergyModel(**raw.get("energy", {}))
    except (TypeError, ValueError) as exc:
        diags.append(f"energy: {exc}")
        energy = EnergyModel()

    emit_period_ms = round(float(raw.get("emit_period_s", 10.0)) * 1000)
    if emit_period_ms <= 0:
        diags.append("emit_period_s: must be > 0")
    jitter_frac = float(raw.get("jitter", 0.0))
    if not (0 <= jitter_frac < 1):
        diags.append("jitter: must be in [0, 1)")
    sensor_kind = str(raw.get("sensor_kind", "temperature"))

    det_raw = dict(raw.get("detectors", {}))
    try:
        flood = FloodConfig(**det_raw.pop("flood", {}))
        bounds_raw = det_raw.pop("bounds", None)
        detectors = DetectorConfig(flood=flood, **det_raw)
        if bounds_raw:
            detectors.bounds = {k: (float(v[0]), float(v[1])) for k, v in bounds_raw.items()}
    except (TypeError, ValueError, KeyError) as exc:
        diags.append(f"detectors: {exc}")
        detectors = DetectorConfig()

    attacks: list[AttackSpec] = []
    for i, a in enumerate(raw.get("attacks", [])):
        try:
            params = {
                k: v
                for k, v in a.items()
                if k not in ("kind", "target", "start_s", "duration_s", "attack_id")
            }
            spec = AttackSpec(
                kind=a["kind"],
                target=a.get("target"),
                start_ms=round(float(a["start_s"]) * 1000),
                duration_ms=round(float(a["duration_s"]) * 1000),
                params=params,
                attack_id=a.get("attack_id", f"a{i + 1}"),
            )
            spec.validate()
            attacks.append(spec)
        except (KeyError, TypeError, ValueError) as exc:
            diags.append(f"attacks[{i}]: {exc}")

    try:
        rules = AutoIncidentRules(**raw.get("incident_rules", {}))
    except TypeError as exc:
        diags.append(f"incident_rules: {exc}")
        rules = AutoIncidentRules()

    try:
        sla_raw = raw.get("sla")
        sla = SlaPolicy({int(k): (int(v[0]), int(v[1])) for k, v in sla_raw.items()}) if sla_raw else SlaPolicy()
    except (TypeError, ValueError, IndexError) as exc:
        diags.append(f"sla: {exc}")
        sla = SlaPolicy()

    auto_response: list[AutoResponseRule] = []
    for i, r in enumerate(raw.get("auto_response", [])):
        try:
            auto_response.append(
                AutoResponseRule(
                    on_event=r["on_event"],
                    action=r["action"],
                    target=r.get("target", "$source"),
                    delay_s=float(r.get("delay_s", 0.0)),
                    source=r.get("source"),
                    actor=r.get("actor", "auto-responder"),
                    params=dict(r.get("params", {})),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            diags.append(f"auto_response[{i}]: {exc}")

    environment = []
    node_ids = {p[0] for p in placements}
    for i, env in enumerate(raw.get("environment", [])):
        if not isinstance(env, dict) or "node" not in env:
            diags.append(f"environment[{i}]: requires node")
            continue
        if env["node"] not in node_ids:
            diags.append(f"environment[{i}].node: {env['node']!r} not placed")
            continue
        environment.append(env)

    known_targets = node_ids
    for i, spec in enumerate(attacks):
        if spec.kind != "rogue_join" and spec.target not in known_targets:
            diags.append(f"attacks[{i}].target: {spec.target!r} not placed")

    transform_maps = default_transform_maps()
    own_tables = {m.source_table for m in transform_maps}
    for i, m in enumerate(raw.get("transform_maps", [])):
        parsed = _parse_transform_map(m, diags, f"transform_maps[{i}]")
        if parsed is not None:
            if parsed.source_table in own_tables:
                transform_maps = [t for t in transform_maps if t.source_table != parsed.source_table]
            transform_maps.append(parsed)
            own_tables.add(parsed.source_table)

    if diags:
        raise ScenarioError(diags)

    return ScenarioConfig(
        name=name,
        seed=seed,
        duration_ms=duration_ms,
        placements=placements,
        sink_id=sink_id,
        radio_range_m=radio_range_m,
        energy=energy,
        emit_period_ms=emit_period_ms,
        jitter_frac=jitter_frac,
        sensor_kind=sensor_kind,
        detectors=detectors,
        attacks=attacks,
        rules=rules,
        sla=sla,
        auto_response=auto_response,
        environment=environment,
        transform_maps=transform_maps,
        max_import_rows=int(raw.get("max_import_rows", 10_000)),
        raw=raw,
    )

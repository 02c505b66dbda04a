"""The single-writer core that closes the loop.

Simulator batches flow through the detector chain into alerts and
incidents; response actions flow back into the simulator. Every observable
fact is appended to the journal before the call that produced it returns,
which is what makes ``replay_journal`` able to rebuild the exact live
state (verified by a canonical state digest).
"""

from __future__ import annotations

import heapq
import threading
from collections import Counter
from pathlib import Path
from typing import Any

from .canon import canonical_json, sha256_hex
from .cmdb import Cmdb
from .events import (
    AlertStore,
    BoundsDetector,
    DrainDetector,
    Event,
    EventFactory,
    RateTracker,
    SourceDetector,
)
from .incidents import (
    IncidentStore,
    InvalidAction,
    UnknownIncident,
    validate_action,
)
from .ingest import IngestEngine
from .journal import Journal, read_journal
from .scenario import AutoResponseRule, ScenarioConfig
from .sim import NodeStatus, SimError

ATTACK_DETECTION_MAP = {
    "flood": "dos_flood",
    "rogue_join": "unauthorized_access",
    "tamper": "data_integrity",
    "drain": "energy_drain",
}


class UnknownTarget(Exception):
    pass


class NotInProgress(Exception):
    pass


class Pipeline:
    def __init__(
        self,
        config: ScenarioConfig,
        journal_path: str | Path | None = None,
        keep_journal_memory: bool = True,
        ledger_trace: bool = False,
    ) -> None:
        self.config = config
        self.lock = threading.Lock()  # serializes mutating callers (gateway, pacing)
        self.journal = Journal(journal_path, keep_in_memory=keep_journal_memory)
        self.cmdb = Cmdb()
        self.ingest = IngestEngine()
        for tmap in config.transform_maps:
            self.ingest.register_map(tmap)
        self.sim = config.build_sim(ledger_trace=ledger_trace)

        self.factory = EventFactory(self.cmdb)
        self.rate_tracker = RateTracker(config.detectors.flood, self.factory)
        self.source_detector = SourceDetector(self.cmdb, self.factory)
        self.bounds_detector = BoundsDetector(config.detectors, self.cmdb, self.factory)
        self.drain_detector = DrainDetector(
            config.detectors,
            config.energy.idle_pj_per_ms,
            config.energy.e_tx_pj,
            config.energy.e_rx_pj,
            self.factory,
        )
        self.alerts = AlertStore()
        self.incidents = IncidentStore(config.sla)

        self.events_by_type: Counter[str] = Counter()
        self.event_log: list[tuple[str, str, int]] = []  # (type, source, created_ms)
        self.telemetry_total = 0
        self.telemetry_by_source: Counter[str] = Counter()
        self.attack_starts: list[dict[str, Any]] = []
        self._pending_actions: list[tuple[int, int, dict[str, Any]]] = []
        self._pending_seq = 0
        self._fired_rules: set[tuple[int, str]] = set()
        self._finalized = False

        self.journal.append(
            "sim_delta",
            0,
            {
                "kind": "run_start",
                "scenario": config.name,
                "seed": config.seed,
                "duration_ms": config.duration_ms,
                "sink_id": config.sink_id,
                "nodes": [p[0] for p in config.placements],
            },
        )
        self._bootstrap_cmdb()

    # ------------------------------------------------------------------
    # construction helpers

    def _bootstrap_cmdb(self) -> None:
        """Register the deployed fleet through the regular import path."""
        rows = []
        for nid, x, y in sorted(self.config.placements):
            node = self.sim.nodes[nid]
            rows.append(
                {
                    "node_id": nid,
                    "class": "BaseStation" if node.is_sink else "SensorNode",
                    "kind": node.sensor_kind,
                    "x": x,
                    "y": y,
                }
            )
        self.handle_import("asset_feed", rows)

    # ------------------------------------------------------------------
    # imports

    def handle_import(self, table: str, rows: list[dict[str, Any]]) -> dict[str, Any]:
        """Stage, transform, reconcile, journal. Raises KeyError for unknown tables."""
        now = self.sim.clock_ms
        tmap = self.ingest.maps.get(table)
        if tmap is None:
            raise KeyError(f"no transform map for table {table!r}")
        result, telemetry, applied = self.ingest.run_import(table, rows, self.cmdb, now)
        records = [self._external_record(raw, now) for raw in telemetry]
        self.journal.append(
            "import",
            now,
            {
                "table": table,
                "target": tmap.target,
                "result": result.to_dict(),
                "coalesce_keys": list(tmap.coalesce_keys),
                "target_class": tmap.target_class,
                "ci_records": applied,
                "staged_rows": len(rows),
            },
        )
        for record in records:
            self._process_record(record)
        for event in self.rate_tracker.on_time(now):
            self._process_event(event)
        return result.to_dict()

    def _external_record(self, raw: dict[str, Any], now: int) -> dict[str, Any]:
        return {
            "seq": self.sim.allocate_telemetry_seq(),
            "source_id": str(raw.get("source_id", "")),
            "sink_arrival_ms": now,
            "sensor_kind": str(raw.get("sensor_kind", "generic")),
            "value": raw.get("value", 0),
            "checksum_ok": bool(raw.get("checksum_ok", True)),
            "hop_count": 0,
        }

    # ------------------------------------------------------------------
    # the drive loop

    def drive(self, until_ms: int) -> dict[str, Any]:
        """Advance simulation and pipeline together to ``until_ms``."""
        window = self.config.detectors.flood.window_ms
        summary = Counter()
        while self.sim.clock_ms < until_ms:
            boundary = ((self.sim.clock_ms // window) + 1) * window
            step_to = min(boundary, until_ms)
            if self._pending_actions:
                due = self._pending_actions[0][0]
                if self.sim.clock_ms < due < step_to:
                    step_to = due
            batch = self.sim.advance(step_to)
            self._process_batch(batch, step_to)
            summary["telemetry"] += len(batch["telemetry"])
            while self._pending_actions and self._pending_actions[0][0] <= self.sim.clock_ms:
                _, _, entry = heapq.heappop(self._pending_actions)
                self._run_auto_action(entry)
        summary["clock_ms"] = self.sim.clock_ms
        return dict(summary)

    def _process_batch(self, batch: dict[str, Any], boundary_ms: int) -> None:
        for delta in batch["deltas"]:
            self._process_delta(delta)
        for record in batch["telemetry"]:
            self._process_record(record)
        for event in self.rate_tracker.on_time(boundary_ms):
            self._process_event(event)
        for t_ms, nid, battery, tx, rx in batch["battery_samples"]:
            event = self.drain_detector.on_sample(t_ms, nid, battery, tx, rx)
            if event is not None:
                self._process_event(event)
        self._sla_sweep(boundary_ms)

    def _process_delta(self, delta: dict[str, Any]) -> None:
        self.journal.append("sim_delta", delta["t_ms"], delta)
        if delta["kind"] == "attack_start":
            self.attack_starts.append(delta)
        elif (
            delta["kind"] == "status_change"
            and delta["to"] == NodeStatus.DEAD.value
            and delta["reason"] == "battery_depleted"
        ):
            event = self.factory.make(
                "hardware_failure",
                delta["node_id"],
                delta["t_ms"],
                {"reason": "battery_depleted"},
            )
            self._process_event(event)

    def _process_record(self, record: dict[str, Any]) -> None:
        self.journal.append("telemetry", record["sink_arrival_ms"], record)
        self.telemetry_total += 1
        self.telemetry_by_source[record["source_id"]] += 1
        t = record["sink_arrival_ms"]
        for event in self.rate_tracker.on_record(record["source_id"], t):
            self._process_event(event)
        event = self.source_detector.on_record(record, t)
        if event is not None:
            self._process_event(event)
        for event in self.bounds_detector.on_record(record, t):
            self._process_event(event)

    def _process_event(self, event: Event) -> None:
        self.events_by_type[event.type] += 1
        self.event_log.append((event.type, event.source_id, event.created_ms))
        self.journal.append("event", event.created_ms, event.to_dict())
        if event.type == "sla_breach":
            self.incidents.apply_breach(event.payload)
        delta = self.alerts.ingest(event, self.config.detectors.dedup_window_ms)
        if delta is None:
            return
        self.journal.append("alert", event.created_ms, delta)
        alert = self.alerts.alerts[delta["alert_id"]]
        incident, created = self.incidents.open_incident(alert, self.config.rules, event.created_ms)
        if created and incident is not None:
            self.journal.append("incident", event.created_ms, {"op": "open", **incident.to_dict()})
        if incident is not None:
            self._match_auto_response(event, incident.reference)

    def _match_auto_response(self, event: Event, incident_ref: str) -> None:
        for idx, rule in enumerate(self.config.auto_response):
            if rule.on_event != event.type:
                continue
            if rule.source is not None and rule.source != event.source_id:
                continue
            key = (idx, event.source_id)
            if key in self._fired_rules:
                continue
            self._fired_rules.add(key)
            due = event.created_ms + round(rule.delay_s * 1000)
            self._pending_seq += 1
            heapq.heappush(
                self._pending_actions,
                (
                    due,
                    self._pending_seq,
                    {
                        "due_ms": due,
                        "rule": rule,
                        "incident_ref": incident_ref,
                        "source": event.source_id,
                    },
                ),
            )

    def _run_auto_action(self, entry: dict[str, Any]) -> None:
        rule: AutoResponseRule = entry["rule"]
        ref = entry["incident_ref"]
        now = self.sim.clock_ms
        incident = self.incidents.get(ref)
        if incident.state == "New":
            self.transition_incident(ref, "InProgress", rule.actor, f"auto-response: {rule.action}")
        target = entry["source"] if rule.target == "$source" else rule.target
        try:
            self.execute_response(
                {
                    "action": rule.action,
                    "target": target,
                    "incident_ref": ref,
                    "requested_by": rule.actor,
                    "params": rule.params,
                }
            )
        except (InvalidAction, UnknownTarget, NotInProgress, UnknownIncident) as exc:
            self.journal.append(
                "sim_delta",
                now,
                {"t_ms": now, "kind": "action_error", "action": rule.action, "target": target, "error": str(exc)},
            )

    def _sla_sweep(self, now_ms: int) -> None:
        for ref in self.incidents.open_references():
            for breach in self.incidents.sla_evaluate(ref, now_ms):
                event = self.factory.make("sla_breach", ref, now_ms, breach, resource=breach["breach"])
                self._process_event(event)

    # ------------------------------------------------------------------
    # commands (gateway / harness surface)

    def transition_incident(self, reference: str, to_state: str, actor: str, note: str) -> dict[str, Any]:
        now = self.sim.clock_ms
        incident = self.incidents.transition(reference, to_state, actor, note, now)
        body = {
            "op": "transition",
            "reference": reference,
            "from": incident.work_notes[-1]["from"],
            "to": to_state,
            "actor": actor,
            "note": note,
            "ts_ms": now,
        }
        self.journal.append("incident", now, body)
        return incident.to_dict()

    def execute_response(self, action: dict[str, Any]) -> dict[str, Any]:
        """Dispatch a response action through its incident (InProgress required)."""
        now = self.sim.clock_ms
        ref = action.get("incident_ref", "")
        kind = action.get("action", "")
        target = str(action.get("target", ""))
        params = dict(action.get("params", {}))
        incident = self.incidents.get(ref)
        if incident.state != "InProgress":
            raise NotInProgress(f"{ref} is {incident.state}; triage to InProgress before remediation")
        if kind != "add_exception":
            node = self.sim.nodes.get(target)
            if node is None:
                raise UnknownTarget(f"unknown target {target!r}")
            validate_action(kind, node.status.value)
        else:
            validate_action(kind, None)
        if kind == "add_exception":
            expires_ms = params.get("expires_ms")
            self.cmdb.add_exception(
                target,
                reason=params.get("reason", f"authorized via {ref}"),
                expires_ms=int(expires_ms) if expires_ms is not None else None,
                now_ms=now,
            )
        else:
            try:
                self.sim.apply_action({"action": kind, "target": target}, at_ms=now)
            except SimError as exc:
                raise InvalidAction(str(exc)) from exc
            for delta in self.sim.drain_deltas():
                self._process_delta(delta)
        work_note = f"response {kind} on {target} dispatched"
        self.incidents.add_work_note(ref, action.get("requested_by", "operator"), work_note, now)
        body = {
            "action": kind,
            "target": target,
            "incident_ref": ref,
            "requested_by": action.get("requested_by", "operator"),
            "requested_ms": now,
            "params": params,
            "work_note": work_note,
        }
        self.journal.append("action", now, body)
        return {"action": kind, "target": target, "incident_ref": ref, "at_ms": now, "status": "applied"}

    # ------------------------------------------------------------------
    # finish line

    def finalize(self) -> None:
        if self._finalized:
            return
        self._finalized = True
        snapshot = self.sim.energy_snapshot()
        self.journal.append("sim_delta", self.sim.clock_ms, {"kind": "energy_snapshot", **snapshot})
        self.journal.append(
            "sim_delta",
            self.sim.clock_ms,
            {
                "kind": "run_end",
                "clock_ms": self.sim.clock_ms,
                "suppressed_unauthorized": self.source_detector.suppressed_count,
                "dropped_quarantine": sum(self.sim.dropped_quarantine.values()),
                "dropped_jam": self.sim.dropped_jam,
                "dropped_no_route": self.sim.dropped_no_route,
            },
        )
        self.journal.flush()

    # ------------------------------------------------------------------
    # state

    def state_view(self) -> dict[str, Any]:
        snapshot = self.sim.energy_snapshot()
        return {
            "clock_ms": self.sim.clock_ms,
            "cmdb": self.cmdb.state_view(),
            "alerts": self.alerts.state_view(),
            "incidents": self.incidents.state_view(),
            "events_by_type": dict(sorted(self.events_by_type.items())),
            "telemetry": {
                "delivered_total": self.telemetry_total,
                "delivered_by_source": dict(sorted(self.telemetry_by_source.items())),
            },
            "suppressed_unauthorized": self.source_detector.suppressed_count,
            "sim": {
                "statuses": self.sim.node_statuses(),
                "batteries_pj": snapshot["batteries_pj"],
                "dead": snapshot["dead"],
            },
        }

    def state_digest(self) -> str:
        return sha256_hex(canonical_json(self.state_view()))

    def sim_status(self) -> dict[str, Any]:
        statuses = Counter(n.status.value for n in self.sim.nodes.values() if not n.is_sink)
        return {
            "clock_ms": self.sim.clock_ms,
            "duration_ms": self.config.duration_ms,
            "scenario": self.config.name,
            "seed": self.config.seed,
            "nodes": dict(sorted(statuses.items())),
            "delivered_total": self.sim.delivered_total,
            "dropped_quarantine": sum(self.sim.dropped_quarantine.values()),
            "dropped_jam": self.sim.dropped_jam,
            "dropped_no_route": self.sim.dropped_no_route,
            "disconnected": sorted(self.sim.topology.disconnected),
            "journal_seq": self.journal.seq,
        }


# ----------------------------------------------------------------------
# replay


class ReplayedState:
    """State rebuilt purely from journal records (no simulation, no detectors)."""

    def __init__(self) -> None:
        self.cmdb = Cmdb()
        self.alerts = AlertStore()
        self.incidents = IncidentStore()
        self.events_by_type: Counter[str] = Counter()
        self.event_log: list[tuple[str, str, int]] = []
        self.attack_starts: list[dict[str, Any]] = []
        self.delivered_by_source: Counter[str] = Counter()
        self.delivered_total = 0
        self.statuses: dict[str, str] = {}
        self.batteries_pj: dict[str, int] = {}
        self.dead: list[str] = []
        self.suppressed = 0
        self.clock_ms = 0
        self.meta: dict[str, Any] = {}

    def apply(self, record: dict[str, Any]) -> None:
        kind = record["kind"]
        body = record["body"]
        if kind == "telemetry":
            self.delivered_total += 1
            self.delivered_by_source[body["source_id"]] += 1
        elif kind == "event":
            self.events_by_type[body["type"]] += 1
            self.event_log.append((body["type"], body["source_id"], body["created_ms"]))
            if body["type"] == "sla_breach":
                self.incidents.apply_breach(body["payload"])
        elif kind == "alert":
            self.alerts.apply(body)
        elif kind == "incident":
            if body["op"] == "open":
                self.incidents.apply_open(body)
            elif body["op"] == "transition":
                self.incidents.apply_transition(body)
        elif kind == "action":
            self.incidents.apply_work_note(
                {"reference": body["incident_ref"], "actor": body["requested_by"], "note": body["work_note"], "ts_ms": body["requested_ms"]}
            )
            if body["action"] == "add_exception":
                params = body.get("params", {})
                expires = params.get("expires_ms")
                self.cmdb.add_exception(
                    body["target"],
                    reason=params.get("reason", f"authorized via {body['incident_ref']}"),
                    expires_ms=int(expires) if expires is not None else None,
                    now_ms=body["requested_ms"],
                )
        elif kind == "import":
            self._apply_import(record)
        elif kind == "sim_delta":
            self._apply_delta(body)

    def _apply_import(self, record: dict[str, Any]) -> None:
        """Repeat exactly the upserts the live run applied, in order."""
        body = record["body"]
        if body["target"] != "cmdb_ci":
            return
        for rec in body["ci_records"]:
            attrs = dict(rec)
            ci_class = str(attrs.pop("class", body.get("target_class") or "SensorNode"))
            status = attrs.pop("operational_status", None)
            self.cmdb.upsert_ci(
                ci_class,
                attrs,
                identity_keys=list(body["coalesce_keys"]),
                now_ms=record["ts_ms"],
                operational_status=str(status) if status is not None else None,
            )

    def _apply_delta(self, body: dict[str, Any]) -> None:
        kind = body["kind"]
        if kind == "run_start":
            self.meta.update(body)
            for nid in body["nodes"]:
                self.statuses[nid] = NodeStatus.ACTIVE.value
        elif kind == "status_change":
            self.statuses[body["node_id"]] = body["to"]
        elif kind == "rogue_joined":
            self.statuses[body["node_id"]] = NodeStatus.ACTIVE.value
        elif kind == "attack_start":
            self.attack_starts.append(body)
        elif kind == "energy_snapshot":
            self.batteries_pj = dict(body["batteries_pj"])
            self.dead = list(body["dead"])
        elif kind == "run_end":
            self.clock_ms = body["clock_ms"]
            self.suppressed = body["suppressed_unauthorized"]

    def state_view(self) -> dict[str, Any]:
        return {
            "clock_ms": self.clock_ms,
            "cmdb": self.cmdb.state_view(),
            "alerts": self.alerts.state_view(),
            "incidents": self.incidents.state_view(),
            "events_by_type": dict(sorted(self.events_by_type.items())),
            "telemetry": {
                "delivered_total": self.delivered_total,
                "delivered_by_source": dict(sorted(self.delivered_by_source.items())),
            },
            "suppressed_unauthorized": self.suppressed,
            "sim": {
                "statuses": dict(sorted(self.statuses.items())),
                "batteries_pj": self.batteries_pj,
                "dead": self.dead,
            },
        }


def replay_journal(path: str | Path) -> tuple[ReplayedState, dict[str, Any]]:
    """Rebuild state from a journal. Raises CorruptJournal on a chain break."""
    result = read_journal(path)
    state = ReplayedState()
    for record in result.records:
        state.apply(record)
    info = {
        "last_seq": result.last_seq,
        "last_digest": result.last_digest,
        "truncated": result.truncated,
        "truncated_detail": result.truncated_detail,
    }
    return state, info

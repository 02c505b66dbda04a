"""Detector chain and alert correlation.

Telemetry becomes normalized events through five detectors (traffic flood,
unknown source, integrity/bounds, energy drain, overheat); events are then
compressed into alerts by dedup key. The flood baseline is an EWMA frozen
at the end of a warmup phase: a continuously adapting average would learn
the attack itself as the new normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any

from .cmdb import AuthStatus, Cmdb

EVENT_TYPES = (
    "dos_flood",
    "unauthorized_access",
    "data_integrity",
    "energy_drain",
    "overheat",
    "hardware_failure",
    "sla_breach",
)

SEVERITY_BY_TYPE = {
    "dos_flood": 1,
    "overheat": 1,
    "unauthorized_access": 2,
    "data_integrity": 2,
    "energy_drain": 2,
    "hardware_failure": 2,
    "sla_breach": 3,
}


def dedup_key(event_type: str, source_id: str, resource: str) -> str:
    return f"{event_type}|{source_id}|{resource}"


@dataclass
class Event:
    event_id: int
    type: str
    source_id: str
    ci_id: str | None
    severity: int
    dedup_key: str
    created_ms: int
    payload: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "event_id": self.event_id,
            "type": self.type,
            "source_id": self.source_id,
            "ci_id": self.ci_id,
            "severity": self.severity,
            "dedup_key": self.dedup_key,
            "created_ms": self.created_ms,
            "payload": self.payload,
        }


@dataclass
class FloodConfig:
    k: float = 5.0
    w: int = 3
    window_s: float = 10.0
    alpha: float = 0.3
    warmup_windows: int = 6

    def __post_init__(self) -> None:
        if self.k <= 1:
            raise ValueError("flood.k must be > 1")
        if self.w < 1:
            raise ValueError("flood.w must be >= 1")
        if not (0 < self.alpha <= 1):
            raise ValueError("flood.alpha must be in (0, 1]")
        if self.warmup_windows < 1:
            raise ValueError("flood.warmup_windows must be >= 1")
        self.window_ms = round(self.window_s * 1000)


@dataclass
class DetectorConfig:
    flood: FloodConfig = field(default_factory=FloodConfig)
    bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: {
            "temperature": (-20.0, 70.0),
            "humidity": (0.0, 100.0),
            "generic": (-1e12, 1e12),
        }
    )
    overheat_c: float = 70.0
    drain_factor: float = 3.0
    dedup_window_s: float = 300.0

    @property
    def dedup_window_ms(self) -> int:
        return round(self.dedup_window_s * 1000)


@dataclass
class RateState:
    source_id: str
    window_idx: int
    count: int = 0
    ewma: float = 0.0
    warmup_left: int = 0
    baseline: float | None = None
    consecutive_breaches: int = 0
    in_episode: bool = False
    gap_windows: int = 0


def ewma_update(state: RateState, observed_count: int, alpha: float) -> RateState:
    """One EWMA step: ewma' = alpha*observed + (1-alpha)*ewma."""
    if observed_count < 0:
        raise ValueError("observed_count must be >= 0")
    return replace(state, ewma=alpha * observed_count + (1 - alpha) * state.ewma)


class EventFactory:
    """Monotone event ids plus CI resolution for dedup resources."""

    def __init__(self, cmdb: Cmdb) -> None:
        self.cmdb = cmdb
        self._next_id = 0

    def make(
        self,
        event_type: str,
        source_id: str,
        created_ms: int,
        payload: dict[str, Any],
        resource: str | None = None,
        sensor_kind: str | None = None,
    ) -> Event:
        ci = self.cmdb.ci_for_source(source_id)
        if resource is None:
            resource = ci.ci_id if ci is not None else (sensor_kind or "unknown")
        self._next_id += 1
        return Event(
            event_id=self._next_id,
            type=event_type,
            source_id=source_id,
            ci_id=ci.ci_id if ci is not None else None,
            severity=SEVERITY_BY_TYPE[event_type],
            dedup_key=dedup_key(event_type, source_id, resource),
            created_ms=created_ms,
            payload=payload,
        )


class RateTracker:
    """Per-source windowed packet counts feeding the flood detector.

    Windows are global [k*w, (k+1)*w) buckets over sink arrival time. Each
    source warms up for ``warmup_windows`` windows starting at its first
    packet, after which the EWMA freezes into the breach baseline.
    """

    def __init__(self, cfg: FloodConfig, factory: EventFactory) -> None:
        self.cfg = cfg
        self.factory = factory
        self.states: dict[str, RateState] = {}

    def on_record(self, source_id: str, t_ms: int) -> list[Event]:
        idx = t_ms // self.cfg.window_ms
        state = self.states.get(source_id)
        if state is None:
            self.states[source_id] = RateState(
                source_id, idx, count=1, warmup_left=self.cfg.warmup_windows
            )
            return []
        events = self._close_through(state, idx)
        state.count += 1
        return events

    def on_time(self, t_ms: int) -> list[Event]:
        """Close every window that ends at or before t_ms."""
        idx = t_ms // self.cfg.window_ms
        events: list[Event] = []
        for source_id in sorted(self.states):
            events.extend(self._close_through(self.states[source_id], idx))
        return events

    def _close_through(self, state: RateState, idx: int) -> list[Event]:
        events: list[Event] = []
        while state.window_idx < idx:
            event = self._close_window(state)
            if event is not None:
                events.append(event)
            state.window_idx += 1
            state.count = 0
        return events

    def _close_window(self, state: RateState) -> Event | None:
        observed = state.count
        window_end_ms = (state.window_idx + 1) * self.cfg.window_ms
        if state.warmup_left > 0:
            updated = ewma_update(state, observed, self.cfg.alpha)
            state.ewma = updated.ewma
            state.warmup_left -= 1
            if state.warmup_left == 0:
                state.baseline = state.ewma
            return None
        baseline = state.baseline if state.baseline is not None else state.ewma
        if observed > self.cfg.k * baseline:
            state.consecutive_breaches += 1
            state.gap_windows = 0
            if state.consecutive_breaches == self.cfg.w and not state.in_episode:
                state.in_episode = True
                return self.factory.make(
                    "dos_flood",
                    state.source_id,
                    window_end_ms,
                    {
                        "observed": observed,
                        "baseline": baseline,
                        "threshold": self.cfg.k * baseline,
                        "windows": self.cfg.w,
                    },
                    resource="rate",
                )
        else:
            state.consecutive_breaches = 0
            if state.in_episode:
                state.gap_windows += 1
                if state.gap_windows >= self.cfg.w:
                    state.in_episode = False
                    state.gap_windows = 0
        return None


class SourceDetector:
    """Unknown-source detection honoring the authorized-exception list."""

    def __init__(self, cmdb: Cmdb, factory: EventFactory) -> None:
        self.cmdb = cmdb
        self.factory = factory
        self.suppressed_count = 0

    def on_record(self, record: dict[str, Any], now_ms: int) -> Event | None:
        source = record["source_id"]
        status = self.cmdb.authorization_status(source, now_ms)
        if status is AuthStatus.AUTHORIZED:
            return None
        if status is AuthStatus.EXCEPTION:
            self.suppressed_count += 1
            return None
        return self.factory.make(
            "unauthorized_access",
            source,
            now_ms,
            {"sink_arrival_ms": record["sink_arrival_ms"]},
            sensor_kind=record.get("sensor_kind"),
        )


class BoundsDetector:
    """Checksum/range integrity plus per-CI overheat thresholds."""

    def __init__(self, cfg: DetectorConfig, cmdb: Cmdb, factory: EventFactory) -> None:
        self.cfg = cfg
        self.cmdb = cmdb
        self.factory = factory

    def on_record(self, record: dict[str, Any], now_ms: int) -> list[Event]:
        events: list[Event] = []
        kind = record.get("sensor_kind", "generic")
        value = record["value"]
        source = record["source_id"]
        bounds = self.cfg.bounds.get(kind)
        if bounds is None:
            events.append(
                self.factory.make(
                    "data_integrity",
                    source,
                    now_ms,
                    {"reason": "missing_bounds", "sensor_kind": kind},
                    sensor_kind=kind,
                )
            )
        elif not record.get("checksum_ok", True) or not (bounds[0] <= value <= bounds[1]):
            reason = "checksum" if not record.get("checksum_ok", True) else "out_of_bounds"
            events.append(
                self.factory.make(
                    "data_integrity",
                    source,
                    now_ms,
                    {"reason": reason, "value": value, "bounds": list(bounds)},
                    sensor_kind=kind,
                )
            )
        if kind == "temperature":
            threshold = self.cfg.overheat_c
            ci = self.cmdb.ci_for_source(source)
            if ci is not None and "overheat_c" in ci.attributes:
                threshold = float(ci.attributes["overheat_c"])
            if value > threshold:
                events.append(
                    self.factory.make(
                        "overheat",
                        source,
                        now_ms,
                        {"value": value, "threshold": threshold},
                        sensor_kind=kind,
                    )
                )
        return events


class DrainDetector:
    """Depletion-rate anomaly on battery samples.

    Transmit/receive costs are explained by reported packet counters, so the
    detectable signal is the idle residual: residual energy per ms compared
    against the model's idle draw. One event per sustained episode.
    """

    def __init__(self, cfg: DetectorConfig, idle_pj_per_ms: int, e_tx_pj: int, e_rx_pj: int, factory: EventFactory) -> None:
        self.cfg = cfg
        self.idle_pj_per_ms = idle_pj_per_ms
        self.e_tx_pj = e_tx_pj
        self.e_rx_pj = e_rx_pj
        self.factory = factory
        self._prev: dict[str, tuple[int, int, int, int]] = {}
        self._in_episode: set[str] = set()

    def on_sample(self, t_ms: int, node_id: str, battery_pj: int, tx_count: int, rx_count: int) -> Event | None:
        prev = self._prev.get(node_id)
        self._prev[node_id] = (t_ms, battery_pj, tx_count, rx_count)
        if prev is None:
            return None
        t0, b0, tx0, rx0 = prev
        dt = t_ms - t0
        if dt <= 0:
            return None
        depleted = b0 - battery_pj
        explained = (tx_count - tx0) * self.e_tx_pj + (rx_count - rx0) * self.e_rx_pj
        residual = depleted - explained
        expected_idle = self.idle_pj_per_ms * dt
        breach = residual > self.cfg.drain_factor * expected_idle
        if breach and node_id not in self._in_episode:
            self._in_episode.add(node_id)
            return self.factory.make(
                "energy_drain",
                node_id,
                t_ms,
                {
                    "residual_pj": residual,
                    "expected_idle_pj": expected_idle,
                    "factor": self.cfg.drain_factor,
                    "window_ms": dt,
                },
                resource="energy",
            )
        if not breach:
            self._in_episode.discard(node_id)
        return None


class AlertStore:
    """Deduplicating alert aggregation with idempotent event ingestion."""

    def __init__(self) -> None:
        self.alerts: dict[int, dict[str, Any]] = {}
        self.open_by_key: dict[str, int] = {}
        self.seen_event_ids: set[int] = set()
        self._next_id = 0

    def ingest(self, event: Event, dedup_window_ms: int) -> dict[str, Any] | None:
        """Correlate one event; returns the alert delta applied (None if replayed)."""
        if event.event_id in self.seen_event_ids:
            return None
        alert_id = self.open_by_key.get(event.dedup_key)
        if alert_id is not None:
            alert = self.alerts[alert_id]
            if alert["state"] == "Open" and event.created_ms - alert["last_seen_ms"] <= dedup_window_ms:
                delta = {
                    "op": "increment",
                    "alert_id": alert_id,
                    "event_id": event.event_id,
                    "last_seen_ms": event.created_ms,
                    "severity": min(alert["severity"], event.severity),
                }
                self.apply(delta)
                return delta
        delta = {
            "op": "new",
            "alert_id": self._next_id + 1,
            "event_id": event.event_id,
            "dedup_key": event.dedup_key,
            "event_type": event.type,
            "source_id": event.source_id,
            "severity": event.severity,
            "first_seen_ms": event.created_ms,
            "last_seen_ms": event.created_ms,
        }
        self.apply(delta)
        return delta

    def apply(self, delta: dict[str, Any]) -> None:
        """Apply an alert delta; used by live ingestion and journal replay alike."""
        self.seen_event_ids.add(delta["event_id"])
        if delta["op"] == "new":
            alert_id = delta["alert_id"]
            self._next_id = max(self._next_id, alert_id)
            self.alerts[alert_id] = {
                "alert_id": alert_id,
                "dedup_key": delta["dedup_key"],
                "event_type": delta["event_type"],
                "source_id": delta["source_id"],
                "severity": delta["severity"],
                "count": 1,
                "first_seen_ms": delta["first_seen_ms"],
                "last_seen_ms": delta["last_seen_ms"],
                "state": "Open",
            }
            self.open_by_key[delta["dedup_key"]] = alert_id
        else:
            alert = self.alerts[delta["alert_id"]]
            alert["count"] += 1
            alert["last_seen_ms"] = delta["last_seen_ms"]
            alert["severity"] = delta["severity"]

    def state_view(self) -> list[dict[str, Any]]:
        return [dict(self.alerts[k]) for k in sorted(self.alerts)]

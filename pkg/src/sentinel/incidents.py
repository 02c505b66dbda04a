"""Incident lifecycle: references, priority matrix, tiers, SLAs, transitions.

References are "INC" plus a 7-digit monotone counter. The state machine
allows New -> InProgress -> Resolved -> Closed with a single reopen edge
(Resolved -> InProgress); anything else is rejected, and Closed records are
immutable. Remediation requires InProgress: triage before response.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

STATES = ("New", "InProgress", "Resolved", "Closed")

ALLOWED_EDGES = {
    ("New", "InProgress"),
    ("InProgress", "Resolved"),
    ("Resolved", "Closed"),
    ("Resolved", "InProgress"),
}

PRIORITY_MATRIX = {
    (1, 1): 1,
    (1, 2): 2,
    (2, 1): 2,
    (1, 3): 3,
    (3, 1): 3,
    (2, 2): 3,
    (2, 3): 4,
    (3, 2): 4,
    (3, 3): 5,
}

# impact, urgency per event type; unlisted types default to (2, 2)
IMPACT_URGENCY = {
    "dos_flood": (1, 1),
    "unauthorized_access": (2, 1),
    "overheat": (1, 2),
    "data_integrity": (2, 2),
    "energy_drain": (2, 3),
}

ACTION_KINDS = ("quarantine", "power_off", "patch", "add_exception")

DEFAULT_SLA_S = {1: (300, 3600), 2: (900, 14400), 3: (3600, 86400), 4: (3600, 86400), 5: (3600, 86400)}


class IncidentError(Exception):
    code = "incident_error"


class IllegalTransition(IncidentError):
    code = "illegal_transition"


class ImmutableRecord(IncidentError):
    code = "immutable_record"


class UnknownIncident(IncidentError):
    code = "unknown_incident"


class InvalidAction(IncidentError):
    code = "invalid_action"


def priority_of(impact: int, urgency: int) -> int:
    if (impact, urgency) not in PRIORITY_MATRIX:
        raise ValueError(f"impact/urgency out of range: ({impact}, {urgency})")
    return PRIORITY_MATRIX[(impact, urgency)]


def tier_of(severity: int) -> str:
    if severity <= 1:
        return "Tier1"
    if severity == 2:
        return "Tier2"
    return "FlowThrough"


@dataclass
class SlaPolicy:
    durations_s: dict[int, tuple[int, int]] = field(default_factory=lambda: dict(DEFAULT_SLA_S))

    def __post_init__(self) -> None:
        for prio, (response, resolve) in self.durations_s.items():
            if response >= resolve:
                raise ValueError(f"P{prio}: response SLA must be shorter than resolution SLA")

    def deadlines_ms(self, priority: int, opened_ms: int) -> tuple[int, int]:
        response, resolve = self.durations_s[priority]
        return opened_ms + response * 1000, opened_ms + resolve * 1000


@dataclass
class AutoIncidentRules:
    auto_incident_severity: int = 2  # alerts at or below this severity open incidents


@dataclass
class Incident:
    reference: str
    alert_id: int
    state: str
    impact: int
    urgency: int
    priority: int
    tier: str
    opened_ms: int
    response_due_ms: int
    resolve_due_ms: int
    work_notes: list[dict[str, Any]] = field(default_factory=list)
    response_breached: bool = False
    resolve_breached: bool = False

    def to_dict(self) -> dict[str, Any]:
        return {
            "reference": self.reference,
            "alert_id": self.alert_id,
            "state": self.state,
            "impact": self.impact,
            "urgency": self.urgency,
            "priority": self.priority,
            "tier": self.tier,
            "opened_ms": self.opened_ms,
            "response_due_ms": self.response_due_ms,
            "resolve_due_ms": self.resolve_due_ms,
            "work_notes": list(self.work_notes),
            "response_breached": self.response_breached,
            "resolve_breached": self.resolve_breached,
        }


class IncidentStore:
    def __init__(self, sla: SlaPolicy | None = None) -> None:
        self.sla = sla or SlaPolicy()
        self.incidents: dict[str, Incident] = {}
        self.by_alert: dict[int, str] = {}
        self._next_ref = 0

    # -- creation --------------------------------------------------------

    def open_incident(self, alert: dict[str, Any], rules: AutoIncidentRules, now_ms: int) -> tuple[Incident | None, bool]:
        """Auto-create an incident for a qualifying alert.

        Returns (incident, created). An alert already linked to a non-Closed
        incident never duplicates; alerts above the severity threshold return
        (None, False).
        """
        existing_ref = self.by_alert.get(alert["alert_id"])
        if existing_ref is not None:
            existing = self.incidents[existing_ref]
            if existing.state != "Closed":
                return existing, False
        if alert["severity"] > rules.auto_incident_severity:
            return None, False
        impact, urgency = IMPACT_URGENCY.get(alert["event_type"], (2, 2))
        incident = self._create(alert["alert_id"], alert["severity"], impact, urgency, now_ms)
        return incident, True

    def _create(self, alert_id: int, severity: int, impact: int, urgency: int, now_ms: int) -> Incident:
        self._next_ref += 1
        reference = f"INC{self._next_ref:07d}"
        priority = priority_of(impact, urgency)
        response_due, resolve_due = self.sla.deadlines_ms(priority, now_ms)
        incident = Incident(
            reference=reference,
            alert_id=alert_id,
            state="New",
            impact=impact,
            urgency=urgency,
            priority=priority,
            tier=tier_of(severity),
            opened_ms=now_ms,
            response_due_ms=response_due,
            resolve_due_ms=resolve_due,
        )
        self.incidents[reference] = incident
        self.by_alert[alert_id] = reference
        return incident

    # -- lifecycle ---------------------------------------------------------

    def get(self, reference: str) -> Incident:
        incident = self.incidents.get(reference)
        if incident is None:
            raise UnknownIncident(f"no incident {reference!r}")
        return incident

    def transition(self, reference: str, to_state: str, actor: str, note: str, now_ms: int) -> Incident:
        incident = self.get(reference)
        if incident.state == "Closed":
            raise ImmutableRecord(f"{reference} is Closed")
        if to_state not in STATES:
            raise IllegalTransition(f"unknown state {to_state!r}")
        if (incident.state, to_state) not in ALLOWED_EDGES:
            raise IllegalTransition(f"{incident.state} -> {to_state} is not allowed")
        incident.work_notes.append(
            {"ts_ms": now_ms, "actor": actor, "note": note, "from": incident.state, "to": to_state}
        )
        incident.state = to_state
        return incident

    def add_work_note(self, reference: str, actor: str, note: str, now_ms: int) -> Incident:
        incident = self.get(reference)
        if incident.state == "Closed":
            raise ImmutableRecord(f"{reference} is Closed")
        incident.work_notes.append({"ts_ms": now_ms, "actor": actor, "note": note})
        return incident

    # -- SLA -----------------------------------------------------------------

    def sla_evaluate(self, reference: str, now_ms: int) -> list[dict[str, Any]]:
        """At most one response breach and one resolution breach per incident."""
        incident = self.get(reference)
        if incident.state == "Closed":
            return []
        breaches: list[dict[str, Any]] = []
        if not incident.response_breached and incident.state == "New" and now_ms > incident.response_due_ms:
            incident.response_breached = True
            breaches.append({"reference": reference, "breach": "response", "due_ms": incident.response_due_ms})
        if not incident.resolve_breached and incident.state in ("New", "InProgress") and now_ms > incident.resolve_due_ms:
            incident.resolve_breached = True
            breaches.append({"reference": reference, "breach": "resolution", "due_ms": incident.resolve_due_ms})
        return breaches

    def open_references(self) -> list[str]:
        return sorted(ref for ref, inc in self.incidents.items() if inc.state != "Closed")

    # -- replay ----------------------------------------------------------------

    def apply_open(self, body: dict[str, Any]) -> None:
        incident = Incident(
            reference=body["reference"],
            alert_id=body["alert_id"],
            state=body["state"],
            impact=body["impact"],
            urgency=body["urgency"],
            priority=body["priority"],
            tier=body["tier"],
            opened_ms=body["opened_ms"],
            response_due_ms=body["response_due_ms"],
            resolve_due_ms=body["resolve_due_ms"],
            work_notes=list(body.get("work_notes", [])),
        )
        self.incidents[incident.reference] = incident
        self.by_alert[incident.alert_id] = incident.reference
        self._next_ref = max(self._next_ref, int(incident.reference[3:]))

    def apply_transition(self, body: dict[str, Any]) -> None:
        incident = self.incidents[body["reference"]]
        incident.work_notes.append(
            {"ts_ms": body["ts_ms"], "actor": body["actor"], "note": body["note"], "from": body["from"], "to": body["to"]}
        )
        incident.state = body["to"]

    def apply_breach(self, body: dict[str, Any]) -> None:
        incident = self.incidents.get(body["reference"])
        if incident is None:
            return
        if body["breach"] == "response":
            incident.response_breached = True
        else:
            incident.resolve_breached = True

    def apply_work_note(self, body: dict[str, Any]) -> None:
        incident = self.incidents[body["reference"]]
        incident.work_notes.append({"ts_ms": body["ts_ms"], "actor": body["actor"], "note": body["note"]})

    def state_view(self) -> list[dict[str, Any]]:
        return [self.incidents[ref].to_dict() for ref in sorted(self.incidents)]


def validate_action(action: str, target_status: str | None) -> None:
    """Action/target class validity: patch only applies to compromised nodes."""
    if action not in ACTION_KINDS:
        raise InvalidAction(f"unknown action {action!r}")
    if action == "patch" and target_status != "Compromised":
        raise InvalidAction("patch is only valid for a compromised node")

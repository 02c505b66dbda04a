"""Configuration management database.

Holds configuration items for sensors, base stations, gateways, and
business services, relationships between them, and the authorized-source
exception list. Identity for device CIs is the ``node_id`` attribute: it is
the only stable join key shared with telemetry.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any

CI_CLASSES = ("SensorNode", "BaseStation", "Gateway", "BusinessService")
REL_TYPES = ("DependsOn", "ConnectsTo", "Monitors")


class CmdbError(ValueError):
    pass


class AuthStatus(str, Enum):
    AUTHORIZED = "Authorized"
    EXCEPTION = "Exception"
    UNKNOWN = "Unknown"


@dataclass
class ConfigurationItem:
    ci_id: str
    ci_class: str
    attributes: dict[str, Any]
    operational_status: str = "Operational"

    def to_dict(self) -> dict[str, Any]:
        return {
            "ci_id": self.ci_id,
            "class": self.ci_class,
            "attributes": dict(self.attributes),
            "operational_status": self.operational_status,
        }


@dataclass
class ExceptionEntry:
    source_id: str
    reason: str
    expires_ms: int | None = None  # None means never

    def expired(self, now_ms: int) -> bool:
        return self.expires_ms is not None and now_ms > self.expires_ms

    def to_dict(self) -> dict[str, Any]:
        return {"source_id": self.source_id, "reason": self.reason, "expires_ms": self.expires_ms}


@dataclass
class Cmdb:
    cis: dict[str, ConfigurationItem] = field(default_factory=dict)
    relationships: list[dict[str, str]] = field(default_factory=list)
    exceptions: dict[str, ExceptionEntry] = field(default_factory=dict)
    audit: list[dict[str, Any]] = field(default_factory=list)
    _next_ci: int = 1
    _node_index: dict[str, str] = field(default_factory=dict)

    # -- configuration items -------------------------------------------

    def upsert_ci(
        self,
        ci_class: str,
        attributes: dict[str, Any],
        identity_keys: list[str] | None = None,
        now_ms: int = 0,
        operational_status: str | None = None,
    ) -> tuple[str, str]:
        """Insert or merge a CI; returns (ci_id, "inserted"|"updated"|"unchanged").

        Identity defaults to the node_id attribute. A class change on an
        existing identity is rejected.
        """
        if ci_class not in CI_CLASSES:
            raise CmdbError(f"unknown CI class {ci_class!r}")
        keys = identity_keys or (["node_id"] if "node_id" in attributes else ["name"])
        for key in keys:
            if key not in attributes:
                raise CmdbError(f"identity attribute {key!r} missing")
        existing = self._find_by_identity(keys, attributes)
        if existing is None:
            ci_id = f"CI{self._next_ci:07d}"
            self._next_ci += 1
            ci = ConfigurationItem(ci_id, ci_class, dict(attributes), operational_status or "Operational")
            self.cis[ci_id] = ci
            node_id = attributes.get("node_id")
            if node_id is not None:
                self._node_index[str(node_id)] = ci_id
            self.audit.append({"ts_ms": now_ms, "ci_id": ci_id, "op": "insert"})
            return ci_id, "inserted"
        if existing.ci_class != ci_class:
            raise CmdbError(
                f"class change rejected for {existing.ci_id}: {existing.ci_class} -> {ci_class}"
            )
        changed = {
            k: v for k, v in attributes.items() if existing.attributes.get(k) != v
        }
        status_changed = operational_status is not None and operational_status != existing.operational_status
        if not changed and not status_changed:
            self.audit.append({"ts_ms": now_ms, "ci_id": existing.ci_id, "op": "noop"})
            return existing.ci_id, "unchanged"
        existing.attributes.update(changed)
        if status_changed:
            existing.operational_status = operational_status
        self.audit.append(
            {"ts_ms": now_ms, "ci_id": existing.ci_id, "op": "update", "fields": sorted(changed)}
        )
        return existing.ci_id, "updated"

    def _find_by_identity(self, keys: list[str], attributes: dict[str, Any]) -> ConfigurationItem | None:
        if keys == ["node_id"]:
            ci_id = self._node_index.get(str(attributes["node_id"]))
            return self.cis.get(ci_id) if ci_id else None
        for ci in self.cis.values():
            if all(ci.attributes.get(k) == attributes[k] for k in keys):
                return ci
        return None

    def get(self, ci_id: str) -> ConfigurationItem | None:
        return self.cis.get(ci_id)

    def ci_for_source(self, source_id: str) -> ConfigurationItem | None:
        ci_id = self._node_index.get(source_id)
        return self.cis.get(ci_id) if ci_id else None

    # -- authorization ---------------------------------------------------

    def authorization_status(self, source_id: str, now_ms: int) -> AuthStatus:
        if source_id in self._node_index:
            return AuthStatus.AUTHORIZED
        entry = self.exceptions.get(source_id)
        if entry is not None and not entry.expired(now_ms):
            return AuthStatus.EXCEPTION
        return AuthStatus.UNKNOWN

    def add_exception(self, source_id: str, reason: str, expires_ms: int | None = None, now_ms: int = 0) -> ExceptionEntry:
        entry = ExceptionEntry(source_id=source_id, reason=reason, expires_ms=expires_ms)
        self.exceptions[source_id] = entry
        self.audit.append({"ts_ms": now_ms, "ci_id": None, "op": "add_exception", "source_id": source_id})
        return entry

    # -- relationships ----------------------------------------------------

    def relate(self, parent_ci: str, child_ci: str, rel_type: str) -> dict[str, str]:
        if rel_type not in REL_TYPES:
            raise CmdbError(f"unknown relationship type {rel_type!r}")
        if parent_ci not in self.cis or child_ci not in self.cis:
            raise CmdbError("both CIs must exist")
        if parent_ci == child_ci:
            raise CmdbError("self-relations are rejected")
        if rel_type == "DependsOn" and self._would_cycle(parent_ci, child_ci):
            raise CmdbError(f"DependsOn cycle rejected: {parent_ci} -> {child_ci}")
        rel = {"parent_ci": parent_ci, "child_ci": child_ci, "rel_type": rel_type}
        self.relationships.append(rel)
        return rel

    def _would_cycle(self, parent_ci: str, child_ci: str) -> bool:
        # Adding parent -> child creates a cycle iff parent is reachable from child.
        edges: dict[str, list[str]] = {}
        for rel in self.relationships:
            if rel["rel_type"] == "DependsOn":
                edges.setdefault(rel["parent_ci"], []).append(rel["child_ci"])
        stack = [child_ci]
        seen = set()
        while stack:
            cur = stack.pop()
            if cur == parent_ci:
                return True
            if cur in seen:
                continue
            seen.add(cur)
            stack.extend(edges.get(cur, []))
        return False

    # -- snapshots --------------------------------------------------------

    def state_view(self) -> dict[str, Any]:
        return {
            "cis": [self.cis[k].to_dict() for k in sorted(self.cis)],
            "exceptions": [self.exceptions[k].to_dict() for k in sorted(self.exceptions)],
            "relationships": sorted(
                self.relationships, key=lambda r: (r["parent_ci"], r["child_ci"], r["rel_type"])
            ),
            "audit_len": len(self.audit),
        }

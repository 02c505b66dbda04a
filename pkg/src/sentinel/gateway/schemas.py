"""Request/response models for the HTTP gateway."""

from __future__ import annotations

from typing import Any

from pydantic import BaseModel, Field


class ApiError(BaseModel):
    status: int
    code: str
    detail: str


class RowErrorModel(BaseModel):
    row_id: int
    reason: str


class ImportResultModel(BaseModel):
    inserted: int
    updated: int
    skipped: int
    errored: int
    row_errors: list[RowErrorModel] = Field(default_factory=list)


class TransitionRequest(BaseModel):
    state: str
    actor: str = "operator"
    note: str = ""


class ActionRequest(BaseModel):
    action: str
    target: str
    incident_ref: str
    requested_by: str = "operator"
    params: dict[str, Any] = Field(default_factory=dict)


class ActionReceipt(BaseModel):
    action: str
    target: str
    incident_ref: str
    at_ms: int
    status: str


class AdvanceRequest(BaseModel):
    until_ms: int


class IncidentModel(BaseModel):
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
    work_notes: list[dict[str, Any]]
    response_breached: bool
    resolve_breached: bool


class AlertModel(BaseModel):
    alert_id: int
    dedup_key: str
    event_type: str
    source_id: str
    severity: int
    count: int
    first_seen_ms: int
    last_seen_ms: int
    state: str


class CiModel(BaseModel):
    ci_id: str
    ci_class: str = Field(alias="class")
    attributes: dict[str, Any]
    operational_status: str

    model_config = {"populate_by_name": True}

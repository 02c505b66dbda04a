"""Import-set staging, declarative transforms, and CMDB reconciliation.

Raw rows land verbatim in a staging table, a transform map renames and
coerces fields into a target record, and reconciliation upserts records
into the CMDB by coalesce key. The coercion vocabulary is a closed set
(identity, to_number, f_to_c, scale) so imports stay deterministic; rows
never partially apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .cmdb import Cmdb, CmdbError

Scalar = str | int | float | bool


class TransformError(ValueError):
    pass


@dataclass
class ImportRow:
    staging_table: str
    row_id: int
    fields: dict[str, Scalar]
    received_ms: int = 0


@dataclass
class StagedSet:
    table: str
    rows: list[ImportRow]

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class FieldMap:
    source: str
    target: str
    coercion: str = "identity"
    scale: float = 1.0


@dataclass
class TransformMap:
    source_table: str
    target: str  # "cmdb_ci" | "telemetry"
    field_maps: list[FieldMap]
    coalesce_keys: list[str]
    on_missing: str = "error_row"  # "skip_row" | "error_row"
    target_class: str | None = None  # cmdb_ci targets only

    def __post_init__(self) -> None:
        if self.target not in ("cmdb_ci", "telemetry"):
            raise TransformError(f"unknown transform target {self.target!r}")
        if self.on_missing not in ("skip_row", "error_row"):
            raise TransformError(f"on_missing must be skip_row or error_row")
        targets = [fm.target for fm in self.field_maps]
        if len(targets) != len(set(targets)):
            raise TransformError("target fields must be unique")
        if not self.coalesce_keys:
            raise TransformError("coalesce_keys must be non-empty")
        missing = set(self.coalesce_keys) - set(targets)
        if missing:
            raise TransformError(f"coalesce keys not produced by field maps: {sorted(missing)}")


@dataclass
class RowError:
    row_id: int
    reason: str
    detail: str = ""


@dataclass
class RowSkip:
    row_id: int
    reason: str


@dataclass
class ImportResult:
    inserted: int = 0
    updated: int = 0
    skipped: int = 0
    errored: int = 0
    row_errors: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total(self) -> int:
        return self.inserted + self.updated + self.skipped + self.errored

    def to_dict(self) -> dict[str, Any]:
        return {
            "inserted": self.inserted,
            "updated": self.updated,
            "skipped": self.skipped,
            "errored": self.errored,
            "row_errors": [{"row_id": r, "reason": why} for r, why in self.row_errors],
        }


def _coerce(value: Scalar, fm: FieldMap) -> Scalar:
    kind = fm.coercion
    if kind == "identity":
        return value
    if kind == "to_number":
        if isinstance(value, bool):
            raise TransformError(f"cannot coerce boolean to number")
        if isinstance(value, (int, float)):
            return value
        try:
            text = str(value).strip()
            return int(text) if text.lstrip("+-").isdigit() else float(text)
        except ValueError as exc:
            raise TransformError(f"not a number: {value!r}") from exc
    if kind == "f_to_c":
        num = _coerce(value, FieldMap(fm.source, fm.target, "to_number"))
        return round((float(num) - 32.0) * 5.0 / 9.0, 4)
    if kind == "scale":
        num = _coerce(value, FieldMap(fm.source, fm.target, "to_number"))
        return float(num) * fm.scale
    raise TransformError(f"unknown coercion {kind!r}")


def transform(tmap: TransformMap, row: ImportRow):
    """Apply a transform map to one staged row.

    Returns exactly one of: a target record dict, RowError, or RowSkip.
    Unmapped source fields are dropped (callers may count them as drift).
    """
    if tmap.source_table != row.staging_table:
        raise TransformError(
            f"transform map for {tmap.source_table!r} applied to row from {row.staging_table!r}"
        )
    record: dict[str, Scalar] = {}
    for fm in tmap.field_maps:
        if fm.source not in row.fields:
            if fm.target in tmap.coalesce_keys:
                if tmap.on_missing == "skip_row":
                    return RowSkip(row.row_id, "MissingCoalesce")
                return RowError(row.row_id, "MissingCoalesce", fm.source)
            continue  # optional non-key field
        try:
            record[fm.target] = _coerce(row.fields[fm.source], fm)
        except TransformError as exc:
            return RowError(row.row_id, "CoercionFailed", f"{fm.source}: {exc}")
    return record


class IngestEngine:
    """Staging tables, registered transform maps, and the reconcile step."""

    def __init__(self) -> None:
        self.maps: dict[str, TransformMap] = {}
        self._row_counters: dict[str, int] = {}
        self.drift_fields: dict[str, int] = {}

    def register_map(self, tmap: TransformMap) -> None:
        self.maps[tmap.source_table] = tmap

    def stage(self, table: str, rows: list[dict[str, Scalar]], received_ms: int = 0) -> StagedSet:
        if not table:
            raise TransformError("staging table name must be non-empty")
        for i, fields in enumerate(rows):
            if not fields:
                raise TransformError(f"rows[{i}]: fields must be non-empty")
        staged: list[ImportRow] = []
        counter = self._row_counters.get(table, 0)
        for fields in rows:
            counter += 1
            staged.append(ImportRow(table, counter, dict(fields), received_ms))
        self._row_counters[table] = counter
        return StagedSet(table, staged)

    def _count_drift(self, tmap: TransformMap, row: ImportRow) -> None:
        mapped = {fm.source for fm in tmap.field_maps}
        for name in row.fields:
            if name not in mapped:
                self.drift_fields[name] = self.drift_fields.get(name, 0) + 1

    def run_import(
        self,
        table: str,
        rows: list[dict[str, Scalar]],
        cmdb: Cmdb,
        now_ms: int = 0,
    ) -> tuple[ImportResult, list[dict[str, Scalar]], list[dict[str, Scalar]]]:
        """stage -> transform -> reconcile.

        Returns (result, telemetry_records, applied_ci_records). cmdb_ci
        records are reconciled here; telemetry-target records are returned
        for the caller to feed into the detection pipeline (each delivered
        record counts as inserted). applied_ci_records are the transformed
        records that reached the CMDB, in order, so an event-sourced replay
        can repeat exactly the same upserts.
        """
        tmap = self.maps.get(table)
        if tmap is None:
            raise KeyError(f"no transform map for table {table!r}")
        staged = self.stage(table, rows, now_ms)
        result = ImportResult()
        telemetry: list[dict[str, Scalar]] = []
        ci_records: list[tuple[int, dict[str, Scalar]]] = []
        for row in staged.rows:
            self._count_drift(tmap, row)
            outcome = transform(tmap, row)
            if isinstance(outcome, RowError):
                result.errored += 1
                result.row_errors.append((row.row_id, outcome.reason))
            elif isinstance(outcome, RowSkip):
                result.skipped += 1
            elif tmap.target == "telemetry":
                telemetry.append(outcome)
                result.inserted += 1
            else:
                ci_records.append((row.row_id, outcome))
        applied: list[dict[str, Scalar]] = []
        if ci_records:
            self.reconcile(ci_records, tmap, cmdb, result, now_ms, applied)
        assert result.total == len(staged.rows)
        return result, telemetry, applied

    def reconcile(
        self,
        records: list[tuple[int, dict[str, Scalar]]],
        tmap: TransformMap,
        cmdb: Cmdb,
        result: ImportResult | None = None,
        now_ms: int = 0,
        applied: list[dict[str, Scalar]] | None = None,
    ) -> ImportResult:
        """Upsert target records into the CMDB by coalesce key.

        Row-level atomicity: a rejected row (class violation and the like)
        leaves the CMDB untouched for that row and does not affect others.
        Upserts that change nothing count as skipped, which is what makes
        re-imports idempotent.
        """
        result = result if result is not None else ImportResult()
        for row_id, record in records:
            attrs = dict(record)
            ci_class = str(attrs.pop("class", tmap.target_class or "SensorNode"))
            status = attrs.pop("operational_status", None)
            try:
                _, op = cmdb.upsert_ci(
                    ci_class,
                    attrs,
                    identity_keys=list(tmap.coalesce_keys),
                    now_ms=now_ms,
                    operational_status=str(status) if status is not None else None,
                )
            except CmdbError as exc:
                result.errored += 1
                result.row_errors.append((row_id, f"CmdbRejected: {exc}"))
                continue
            if applied is not None:
                applied.append(dict(record))
            if op == "inserted":
                result.inserted += 1
            elif op == "updated":
                result.updated += 1
            else:
                result.skipped += 1
        return result

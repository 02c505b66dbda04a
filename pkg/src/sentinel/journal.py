"""Append-only journal with a verifiable digest chain.

The journal is the system's source of truth: one JSON line per record,
seq gapless from 1, each record's digest chained over the previous digest
and the record's canonical serialization. Replaying a journal rebuilds the
exact live state; a broken chain aborts replay at the offending seq, and a
truncated tail (a crash between append and flush) is detected and reported
without poisoning the accepted prefix.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from .canon import GENESIS_DIGEST, canonical_json, chain_digest, sha256_hex

KINDS = ("telemetry", "event", "alert", "incident", "action", "import", "sim_delta")


class CorruptJournal(Exception):
    """Digest-chain break or unreadable record before the journal tail."""

    def __init__(self, seq: int, reason: str) -> None:
        self.seq = seq
        self.reason = reason
        super().__init__(f"journal corrupt at seq {seq}: {reason}")


@dataclass
class ReadResult:
    records: list[dict[str, Any]]
    truncated: bool = False
    truncated_detail: str = ""
    last_seq: int = 0
    last_digest: str = GENESIS_DIGEST


def _record_digest(prev_digest: str, seq: int, ts_ms: int, kind: str, body_json: str) -> str:
    """Chain digest over the previous digest and the record's canonical payload."""
    return chain_digest(prev_digest, f"{seq}|{ts_ms}|{kind}|{body_json}")


class Journal:
    """Single-writer journal; appends happen before the caller acknowledges.

    With a path, records are written as JSON lines; ``keep_in_memory``
    controls whether the full record list is retained for range queries
    (gateway streaming reads fall back to the file when it is not).
    """

    def __init__(self, path: str | Path | None = None, keep_in_memory: bool = True) -> None:
        self.path = Path(path) if path is not None else None
        self.keep_in_memory = keep_in_memory if self.path is not None else True
        self._records: list[dict[str, Any]] = []
        self._seq = 0
        self._digest = GENESIS_DIGEST
        self._fh = None
        self._cond = threading.Condition()
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._fh = open(self.path, "w", encoding="utf-8")

    @property
    def seq(self) -> int:
        return self._seq

    @property
    def digest(self) -> str:
        return self._digest

    def append(self, kind: str, ts_ms: int, body: Any) -> dict[str, Any]:
        if kind not in KINDS:
            raise ValueError(f"unknown journal kind {kind!r}")
        seq = self._seq + 1
        body_json = canonical_json(body)
        digest = _record_digest(self._digest, seq, ts_ms, kind, body_json)
        record = {"seq": seq, "ts_ms": ts_ms, "kind": kind, "body": body, "digest": digest}
        if self._fh is not None:
            # hand-assembled canonical line: keys already in sorted order
            self._fh.write(
                f'{{"body":{body_json},"digest":"{digest}","kind":"{kind}","seq":{seq},"ts_ms":{ts_ms}}}\n'
            )
        if self.keep_in_memory:
            self._records.append(record)
        with self._cond:
            self._seq = seq
            self._digest = digest
            self._cond.notify_all()
        return record

    def flush(self) -> None:
        if self._fh is not None:
            self._fh.flush()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            self._fh.close()
            self._fh = None

    # -- reads ---------------------------------------------------------

    def records_after(self, last_seq: int, kinds: set[str] | None = None) -> list[dict[str, Any]]:
        """Records with seq > last_seq matching the kind filter, in order."""
        if self.keep_in_memory:
            rows = self._records[last_seq:]
        else:
            self.flush()
            rows = [r for r in self._iter_file() if r["seq"] > last_seq]
        if kinds:
            rows = [r for r in rows if r["kind"] in kinds]
        return rows

    def wait_for_seq(self, seq: int, timeout: float) -> bool:
        """Block until the journal grows past ``seq`` or the timeout expires."""
        with self._cond:
            if self._seq > seq:
                return True
            self._cond.wait(timeout)
            return self._seq > seq

    def _iter_file(self) -> Iterator[dict[str, Any]]:
        assert self.path is not None
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    yield json.loads(line)

    # -- export --------------------------------------------------------

    def export_batch(self, sink: str | Path, kinds: set[str] | None = None, since_seq: int = 0) -> dict[str, Any]:
        """Write matching records as JSON Lines; receipt digest covers the bytes written."""
        rows = self.records_after(since_seq, kinds)
        payload = "".join(canonical_json(r) + "\n" for r in rows)
        sink = Path(sink)
        try:
            sink.parent.mkdir(parents=True, exist_ok=True)
            with open(sink, "w", encoding="utf-8") as fh:
                fh.write(payload)
        except OSError as exc:
            raise OSError(f"cannot write export sink {sink}: {exc}") from exc
        return {"count": len(rows), "digest": sha256_hex(payload), "sink": str(sink)}


def read_journal(path: str | Path) -> ReadResult:
    """Validate and load a journal file.

    Raises CorruptJournal on a digest-chain break or an unparseable record
    that is not the final line. A damaged final line is treated as a crash
    artifact: reading stops at the last valid seq and the truncation is
    reported in the result.
    """
    path = Path(path)
    result = ReadResult(records=[])
    prev_digest = GENESIS_DIGEST
    expected_seq = 1
    with open(path, encoding="utf-8") as fh:
        lines = fh.readlines()
    for i, line in enumerate(lines):
        stripped = line.strip()
        if not stripped:
            continue
        last_line = i == len(lines) - 1
        try:
            record = json.loads(stripped)
            seq = record["seq"]
            digest = _record_digest(
                prev_digest, seq, record["ts_ms"], record["kind"], canonical_json(record["body"])
            )
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            if last_line:
                result.truncated = True
                result.truncated_detail = f"unreadable tail record after seq {expected_seq - 1}: {exc}"
                break
            raise CorruptJournal(expected_seq, f"unreadable record: {exc}") from exc
        if seq != expected_seq:
            raise CorruptJournal(expected_seq, f"sequence gap: found seq {seq}")
        if digest != record.get("digest"):
            raise CorruptJournal(seq, "digest chain mismatch")
        result.records.append(record)
        prev_digest = digest
        expected_seq += 1
    result.last_seq = expected_seq - 1
    result.last_digest = prev_digest
    return result


def load_exported_batch(path: str | Path) -> list[dict[str, Any]]:
    """Read records from an export file (no chain check: exports may start mid-chain)."""
    rows: list[dict[str, Any]] = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows

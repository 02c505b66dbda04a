"""Canonical serialization and digest chaining.

Every digest in the system (journal chain, state digest, report equality)
is computed over canonical JSON: keys sorted, minimal separators, UTF-8,
NaN/Infinity rejected. Floats use Python's shortest-roundtrip repr, which
is identical on every supported platform.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

GENESIS_DIGEST = "0" * 64


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def sha256_hex(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode("utf-8")
    return hashlib.sha256(data).hexdigest()


def chain_digest(prev_hex: str, body: str) -> str:
    return sha256_hex(prev_hex + body)

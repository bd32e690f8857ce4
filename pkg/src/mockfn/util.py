"""Small shared helpers: canonical JSON, ids, clocks."""

from __future__ import annotations

import json
import random
import secrets
from datetime import datetime, timedelta, timezone
from typing import Any


def to_json(value: Any) -> str:
    """Canonical single-line JSON used for messages and equality checks."""
    return json.dumps(value, ensure_ascii=False)


def dumps_schema(schema: dict[str, Any]) -> str:
    """Pretty-printed schema text embedded verbatim in prompts."""
    return json.dumps(schema, indent=2, ensure_ascii=False)


def new_hex_id() -> str:
    """Random 12-byte identifier, rendered as 24 hex characters."""
    return secrets.token_hex(12)


class SeededIds:
    """Deterministic id source so stub-backed runs produce identical logs."""

    def __init__(self, seed: int = 0):
        self._rng = random.Random(seed)

    def __call__(self) -> str:
        return f"{self._rng.getrandbits(96):024x}"


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class LogicalClock:
    """Deterministic clock stepping one second per reading."""

    def __init__(self, start: datetime | None = None):
        self._now = start or datetime(2024, 1, 1, tzinfo=timezone.utc)

    def __call__(self) -> datetime:
        current = self._now
        self._now = current + timedelta(seconds=1)
        return current

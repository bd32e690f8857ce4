"""Operation log: one JSON-lines record per backend call.

Every record carries enough to rebuild its chat request, so a recorded run
can be replayed through the stub backend, and analyses can be performed on
the log alone.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable

from .backend import ChatRequest, TokenUsage, UsageCategory
from .util import new_hex_id, to_json, utcnow


@dataclass(frozen=True)
class OperationLogRecord:
    id: str
    timestamp: datetime
    kind: UsageCategory
    request_messages: tuple[dict[str, str], ...]
    response_text: str
    model_id: str
    temperature: float
    structured_output: bool
    remarks: str | None = None
    results: Any = None
    ground_truth: Any = None
    correct: bool | None = None
    usage: TokenUsage | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "timestamp": self.timestamp.isoformat(),
            "kind": self.kind.value,
            "request_messages": list(self.request_messages),
            "response_text": self.response_text,
            "model_id": self.model_id,
            "temperature": self.temperature,
            "structured_output": self.structured_output,
            "remarks": self.remarks,
            "results": self.results,
            "ground_truth": self.ground_truth,
            "correct": self.correct,
            "usage": self.usage.to_dict() if self.usage else None,
        }


class OperationLog:
    """Ordered, thread-safe collection of backend-call records."""

    def __init__(
        self,
        *,
        ids: Callable[[], str] = new_hex_id,
        clock: Callable[[], datetime] = utcnow,
    ):
        self._ids = ids
        self._clock = clock
        self._records: list[OperationLogRecord] = []
        self._lock = threading.Lock()

    def record(
        self,
        kind: UsageCategory,
        request: ChatRequest,
        response_text: str,
        *,
        remarks: str | None = None,
        results: Any = None,
        ground_truth: Any = None,
        correct: bool | None = None,
        usage: TokenUsage | None = None,
    ) -> OperationLogRecord:
        entry = OperationLogRecord(
            id=self._ids(),
            timestamp=self._clock(),
            kind=kind,
            request_messages=tuple(message.to_dict() for message in request.messages),
            response_text=response_text,
            model_id=request.model_id,
            temperature=request.temperature,
            structured_output=request.response_schema is not None,
            remarks=remarks,
            results=results,
            ground_truth=ground_truth,
            correct=correct,
            usage=usage,
        )
        with self._lock:
            self._records.append(entry)
        return entry

    @property
    def records(self) -> tuple[OperationLogRecord, ...]:
        return tuple(self._records)

    def write_jsonl(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as handle:
            for entry in self._records:
                handle.write(to_json(entry.to_dict()) + "\n")
        return path


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Load raw log records; replay and reporting work on the dict form."""
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def request_from_record(record: dict[str, Any]) -> ChatRequest:
    """Rebuild the chat request a record was produced from."""
    from .memory import ChatMessage, Role

    return ChatRequest(
        messages=tuple(
            ChatMessage(Role(message["role"]), message["content"])
            for message in record["request_messages"]
        ),
        model_id=record["model_id"],
        temperature=record["temperature"],
    )

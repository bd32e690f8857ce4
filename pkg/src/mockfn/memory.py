"""Branchable invocation memory rendered as an editable chat context.

The unit of history is a whole invocation (one argument document and one
reply), not a raw message: editing an invocation's results or remarks is
immediately visible in the next rendered context. Sub-branches snapshot the
history at creation, evolve in isolation, and are either dropped or committed
back, splicing their additions into the parent at the creation point.
"""

from __future__ import annotations

import copy
import math
import re
import threading
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable

from .errors import (
    ClosedBranchError,
    ContractError,
    DuplicateInvocationError,
    OrphanBranchError,
    UnknownInvocationError,
)
from .util import new_hex_id, to_json, utcnow

_HEX_ID = re.compile(r"^[0-9a-f]{24}$")


class Role(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str
    token_estimate: int = -1

    def __post_init__(self):
        if self.role is Role.SYSTEM and not self.content:
            raise ContractError("system messages must carry content")
        if self.token_estimate < 0:
            object.__setattr__(self, "token_estimate", math.ceil(len(self.content) / 4))

    def to_dict(self) -> dict[str, Any]:
        return {"role": self.role.value, "content": self.content}


@dataclass
class MockInvocation:
    """One argument/result pair, rendered as a user/assistant message pair.

    ``results`` and ``remarks`` are live: reflection amends them and the next
    render picks the amendment up. ``raw_results`` preserves what the model
    originally produced so refinement policies can still tell right from
    wrong after the amendment.
    """

    id: str
    arguments: dict[str, Any]
    remarks: str
    results: Any
    raw_results: Any = None
    ground_truth: Any = None
    reflected: bool = False
    created_at: datetime = field(default_factory=utcnow)

    def __post_init__(self):
        if not _HEX_ID.match(self.id):
            raise ContractError(f"invocation id {self.id!r} is not 24 hex characters")
        if self.raw_results is None:
            self.raw_results = copy.deepcopy(self.results)
        if self.reflected and self.ground_truth is None:
            raise ContractError("a reflected invocation must carry its ground truth")

    def user_message(self) -> ChatMessage:
        return ChatMessage(Role.USER, to_json(self.arguments))

    def assistant_message(self) -> ChatMessage:
        return ChatMessage(Role.ASSISTANT, to_json({"remarks": self.remarks, "results": self.results}))

    def snapshot(self) -> "MockInvocation":
        return MockInvocation(
            id=self.id,
            arguments=copy.deepcopy(self.arguments),
            remarks=self.remarks,
            results=copy.deepcopy(self.results),
            raw_results=copy.deepcopy(self.raw_results),
            ground_truth=copy.deepcopy(self.ground_truth),
            reflected=self.reflected,
            created_at=self.created_at,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "arguments": self.arguments,
            "remarks": self.remarks,
            "results": self.results,
            "raw_results": self.raw_results,
            "ground_truth": self.ground_truth,
            "reflected": self.reflected,
            "created_at": self.created_at.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MockInvocation":
        return cls(
            id=data["id"],
            arguments=data["arguments"],
            remarks=data["remarks"],
            results=data["results"],
            raw_results=data.get("raw_results"),
            ground_truth=data.get("ground_truth"),
            reflected=data.get("reflected", False),
            created_at=datetime.fromisoformat(data["created_at"]),
        )


class MemoryBranch:
    """An ordered invocation history with sub-branch create/commit/drop."""

    def __init__(
        self,
        system_prompt: ChatMessage,
        *,
        branch_id: str | None = None,
        ids: Callable[[], str] = new_hex_id,
    ):
        if system_prompt.role is not Role.SYSTEM:
            raise ContractError("a memory branch starts from a system message")
        self.branch_id = branch_id or ids()
        self.system_prompt = system_prompt
        self.invocations: list[MockInvocation] = []
        self.compressed_summary: str | None = None
        self.rag_messages: list[ChatMessage] = []
        self.rag_ids: set[str] = set()
        self._ids = ids
        self._parent: MemoryBranch | None = None
        self._creation_index = 0
        self._snapshot_len = 0
        self._closed = False
        self._lock = threading.Lock()

    # -- rendering ---------------------------------------------------------

    def render_context(self) -> list[ChatMessage]:
        """System prompt, optional RAG block and summary, then U/A pairs."""
        messages = [self.system_prompt]
        messages.extend(self.rag_messages)
        if self.compressed_summary is not None:
            messages.append(ChatMessage(Role.SYSTEM, self.compressed_summary))
        for invocation in self.invocations:
            messages.append(invocation.user_message())
            messages.append(invocation.assistant_message())
        return messages

    # -- invocation management ---------------------------------------------

    def _check_open(self):
        if self._closed:
            raise ClosedBranchError(f"branch {self.branch_id} was dropped or committed")

    def append(self, invocation: MockInvocation) -> None:
        with self._lock:
            self._check_open()
            if any(existing.id == invocation.id for existing in self.invocations):
                raise DuplicateInvocationError(f"invocation {invocation.id} already present")
            self.invocations.append(invocation)

    def get(self, invocation_id: str) -> MockInvocation:
        for invocation in self.invocations:
            if invocation.id == invocation_id:
                return invocation
        raise UnknownInvocationError(f"no invocation {invocation_id} in branch {self.branch_id}")

    def update_invocation(self, invocation_id: str, new_results: Any, new_remarks: str) -> None:
        with self._lock:
            self._check_open()
            invocation = self.get(invocation_id)
            invocation.results = new_results
            invocation.remarks = new_remarks

    def pop_last(self) -> MockInvocation:
        with self._lock:
            self._check_open()
            if not self.invocations:
                raise UnknownInvocationError("branch holds no invocations")
            return self.invocations.pop()

    # -- branch control ------------------------------------------------------

    def create_branch(self) -> "MemoryBranch":
        """Snapshot this branch; later mutations on either side stay invisible
        to the other until (and unless) the child is committed back."""
        with self._lock:
            child = MemoryBranch(self.system_prompt, ids=self._ids)
            child.invocations = [invocation.snapshot() for invocation in self.invocations]
            child.compressed_summary = self.compressed_summary
            child.rag_messages = list(self.rag_messages)
            child.rag_ids = set(self.rag_ids)
            child._parent = self
            child._creation_index = len(self.invocations)
            child._snapshot_len = len(self.invocations)
            return child

    def commit(self) -> None:
        """Splice post-creation additions into the parent at the creation point.

        Parent items appended after the branch was created stay after the
        inserted block. The branch is consumed either way.
        """
        self._check_open()
        parent = self._parent
        if parent is None:
            raise OrphanBranchError(f"branch {self.branch_id} has no parent to commit into")
        if parent._closed:
            raise OrphanBranchError(f"parent of branch {self.branch_id} was dropped")
        added = self.invocations[self._snapshot_len :]
        with parent._lock:
            parent_ids = {invocation.id for invocation in parent.invocations}
            for invocation in added:
                if invocation.id in parent_ids:
                    raise DuplicateInvocationError(
                        f"invocation {invocation.id} already present in parent"
                    )
            index = self._creation_index
            parent.invocations[index:index] = added
        self._closed = True

    def drop(self) -> None:
        self._closed = True

    @property
    def closed(self) -> bool:
        return self._closed

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "branch_id": self.branch_id,
            "system_prompt": self.system_prompt.to_dict(),
            "invocations": [invocation.to_dict() for invocation in self.invocations],
            "compressed_summary": self.compressed_summary,
            "rag_messages": [message.to_dict() for message in self.rag_messages],
            "rag_ids": sorted(self.rag_ids),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], *, ids: Callable[[], str] = new_hex_id) -> "MemoryBranch":
        prompt = data["system_prompt"]
        branch = cls(
            ChatMessage(Role(prompt["role"]), prompt["content"]),
            branch_id=data.get("branch_id"),
            ids=ids,
        )
        branch.invocations = [MockInvocation.from_dict(d) for d in data.get("invocations", [])]
        branch.compressed_summary = data.get("compressed_summary")
        branch.rag_messages = [
            ChatMessage(Role(m["role"]), m["content"]) for m in data.get("rag_messages", [])
        ]
        branch.rag_ids = set(data.get("rag_ids", []))
        return branch

"""Training loop: iterate a dataset, reflect on errors, refine memory.

A wrong answer triggers a reflection on a throwaway sub-branch of the main
memory: the model is told its arguments, wrong results, wrong reasoning and
the ground truth, and asked to analyze the mistake and write notes against
repeating it. The corrected invocation then carries the ground truth in
"results" and the note in "remarks". When memory reaches its invocation
limit, a refinement policy makes room: replacement (overwrite the oldest
still-correct invocation) or compression (summarize everything into one
standing note).
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable, Iterable

from .backend import ChatRequest, UsageCategory, tag_usage
from .contract import TaskKind
from .errors import (
    BackendError,
    ContractError,
    ContractViolationError,
    FormalFailureError,
    RefinementError,
    ReflectionFailureError,
    TypeMismatchError,
)
from .executor import MockFunction, ServedBy
from .memory import ChatMessage, MemoryBranch, MockInvocation, Role
from .prompts import COMPRESSION_INSTRUCTION, compression_replacement, reflection_text
from .subscript import invalidate
from .util import to_json, utcnow

logger = logging.getLogger("mockfn.trainer")

_NOTES_HEADING = re.compile(r"(?im)^\s*notes\b")


class RefinementPolicy(str, Enum):
    REPLACE = "replace"
    COMPRESS = "compress"
    CUSTOM = "custom"


@dataclass(frozen=True)
class TrainerConfig:
    """Knobs for a training run.

    ``context_length_limit`` counts invocations, not tokens; zero skips the
    training process entirely. ``error_threshold`` is the absolute difference
    tolerated on regression tasks; classification compares rendered values
    exactly. The reflector may be a different backend than the executor.
    """

    context_length_limit: int
    error_threshold: float = 0.0
    refinement_policy: RefinementPolicy = RefinementPolicy.REPLACE
    reflector_backend: Any = None
    custom_refiner: Callable[[MockFunction, "TrainerConfig"], None] | None = None

    def __post_init__(self):
        if self.context_length_limit < 0:
            raise ContractError("context_length_limit must be non-negative")
        if self.error_threshold < 0:
            raise ContractError("error_threshold must be non-negative")
        if self.refinement_policy is RefinementPolicy.CUSTOM and self.custom_refiner is None:
            raise ContractError("a custom refinement policy requires custom_refiner")


@dataclass(frozen=True)
class ReflectionNote:
    """Model-produced error analysis plus notes against repeating it."""

    source_invocation_id: str
    analysis: str
    notes: str
    created_at: datetime = field(default_factory=utcnow)

    def __post_init__(self):
        if not self.notes:
            raise ContractError("reflection notes must be non-empty")


@dataclass(frozen=True)
class DataEntry:
    arguments: dict[str, Any]
    truth: Any


@dataclass(frozen=True)
class EntryOutcome:
    index: int
    arguments: dict[str, Any]
    predicted: Any
    truth: Any
    served_by: ServedBy | None
    attempts: int
    reflected: bool
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "arguments": self.arguments,
            "predicted": self.predicted,
            "truth": self.truth,
            "served_by": self.served_by.value if self.served_by else None,
            "attempts": self.attempts,
            "reflected": self.reflected,
            "error": self.error,
        }


@dataclass(frozen=True)
class TrainingReport:
    entries: tuple[EntryOutcome, ...]
    reflections: tuple[ReflectionNote, ...]
    final_memory_size: int

    @property
    def error_count(self) -> int:
        return sum(1 for entry in self.entries if entry.error)

    def to_dict(self) -> dict[str, Any]:
        return {
            "entries": [entry.to_dict() for entry in self.entries],
            "reflections": [
                {
                    "source_invocation_id": note.source_invocation_id,
                    "analysis": note.analysis,
                    "notes": note.notes,
                    "created_at": note.created_at.isoformat(),
                }
                for note in self.reflections
            ],
            "final_memory_size": self.final_memory_size,
            "error_count": self.error_count,
        }


# ---------------------------------------------------------------------------
# Error detection


def _is_numeric(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def should_reflect(
    config: TrainerConfig,
    predicted: Any,
    truth: Any,
    task_kind: TaskKind = TaskKind.GENERIC,
) -> bool:
    """Decide whether a prediction counts as an error.

    Regression: absolute difference above the threshold. Classification:
    case-sensitive equality of the canonical JSON renderings. Generic tasks
    infer the comparison from the value kinds.
    """
    if task_kind is TaskKind.REGRESSION:
        if not (_is_numeric(predicted) and _is_numeric(truth)):
            raise TypeMismatchError(
                f"regression comparison needs numbers, got {type(predicted).__name__}"
                f" and {type(truth).__name__}"
            )
        return abs(predicted - truth) > config.error_threshold
    if task_kind is TaskKind.CLASSIFICATION:
        return to_json(predicted) != to_json(truth)
    if _is_numeric(predicted) and _is_numeric(truth):
        return abs(predicted - truth) > config.error_threshold
    if _is_numeric(predicted) != _is_numeric(truth):
        raise TypeMismatchError(
            f"cannot compare {type(predicted).__name__} with {type(truth).__name__}"
        )
    return to_json(predicted) != to_json(truth)


# ---------------------------------------------------------------------------
# Reflection


def _split_analysis(reply: str) -> str:
    match = _NOTES_HEADING.search(reply)
    if match:
        return reply[: match.start()].strip()
    return ""


def reflect(
    fn: MockFunction,
    invocation: MockInvocation,
    truth: Any,
    reflector_backend,
) -> ReflectionNote:
    """Run the reflection exchange on a sub-branch and return the note.

    The sub-branch is dropped afterwards; only the note flows back, via
    apply_reflection. Usage is accounted under the reflection category.
    """
    profile = reflector_backend.profile
    sub_branch = fn.memory.create_branch()
    try:
        instruction = reflection_text(
            name=fn.contract.name,
            arguments=to_json(invocation.arguments),
            wrong_results=to_json(invocation.raw_results),
            wrong_remarks=invocation.remarks,
            ground_truth=to_json(truth),
        )
        messages = sub_branch.render_context() + [ChatMessage(Role.USER, instruction)]
        request = ChatRequest(
            messages=tuple(messages),
            model_id=profile.model_id,
            temperature=profile.temperature,
        )
        response = reflector_backend.complete(request)
        usage = tag_usage(response.usage, UsageCategory.REFLECTION)
        fn.usage_ledger.record(usage)
        if fn.op_log is not None:
            fn.op_log.record(
                UsageCategory.REFLECTION,
                request,
                response.content,
                ground_truth=truth,
                usage=usage,
            )
        notes = response.content.strip()
        if not notes:
            raise ReflectionFailureError("the reflector returned an empty reply")
        return ReflectionNote(
            source_invocation_id=invocation.id,
            analysis=_split_analysis(notes),
            notes=notes,
            created_at=fn.clock(),
        )
    finally:
        sub_branch.drop()


def apply_reflection(fn: MockFunction, invocation_id: str, truth: Any, note: ReflectionNote) -> None:
    """Amend the invocation: results become the ground truth, remarks the note.

    Any installed substitution script is invalidated immediately, since the
    function's learned behavior just changed.
    """
    fn.memory.update_invocation(invocation_id, new_results=truth, new_remarks=note.notes)
    invocation = fn.memory.get(invocation_id)
    invocation.ground_truth = truth
    invocation.reflected = True
    invalidate(fn)


# ---------------------------------------------------------------------------
# Memory refinement


def _answered_correctly(invocation: MockInvocation) -> bool:
    if invocation.ground_truth is None:
        return False
    return to_json(invocation.raw_results) == to_json(invocation.ground_truth)


def refine_replace(memory: MemoryBranch, new_invocation: MockInvocation, limit: int) -> None:
    """Default replacement policy.

    Below the limit the newcomer is appended. At the limit, the oldest
    invocation whose actual result equals its expected result (a correct one,
    carrying no reflection note) is overwritten first; if none exists, a
    correct newcomer is dropped, otherwise the earliest invocation makes way
    and the newcomer is appended.
    """
    if limit <= 0:
        return
    history = memory.invocations
    if len(history) < limit:
        memory.append(new_invocation)
        return
    for index, invocation in enumerate(history):
        if _answered_correctly(invocation):
            history[index] = new_invocation
            return
    if _answered_correctly(new_invocation):
        return
    history.pop(0)
    memory.append(new_invocation)


def refine_compress(fn: MockFunction, reflector_backend) -> None:
    """Default compression policy: summarize, then swap history for the note.

    The model is asked to summarize its accumulated notes; all invocations
    are removed and the standing summary message replaces them. On backend
    failure the memory is untouched.
    """
    memory = fn.memory
    if not memory.invocations:
        return
    profile = reflector_backend.profile
    messages = memory.render_context() + [ChatMessage(Role.USER, COMPRESSION_INSTRUCTION)]
    request = ChatRequest(
        messages=tuple(messages),
        model_id=profile.model_id,
        temperature=profile.temperature,
    )
    response = reflector_backend.complete(request)
    usage = tag_usage(response.usage, UsageCategory.COMPRESSION)
    fn.usage_ledger.record(usage)
    if fn.op_log is not None:
        fn.op_log.record(UsageCategory.COMPRESSION, request, response.content, usage=usage)
    summary = response.content.strip()
    if not summary:
        raise RefinementError("the compression reply was empty; memory left untouched")
    memory.invocations.clear()
    memory.compressed_summary = compression_replacement(summary)


# ---------------------------------------------------------------------------
# Training loop


def train(
    fn: MockFunction,
    dataset: Iterable[DataEntry],
    config: TrainerConfig,
    on_step: Callable[[MockFunction, EntryOutcome], None] | None = None,
) -> TrainingReport:
    """Iterate the dataset: invoke, compare with truth, reflect, refine.

    Per-entry failures are recorded and training continues. A context length
    limit of zero skips the training process outright: no backend calls, no
    memory growth.
    """
    if config.context_length_limit == 0:
        return TrainingReport((), (), len(fn.memory.invocations))

    reflector = config.reflector_backend or fn.backend
    entries: list[EntryOutcome] = []
    notes: list[ReflectionNote] = []

    for index, entry in enumerate(dataset):
        try:
            outcome = fn.invoke(entry.arguments, ground_truth=entry.truth)
        except (FormalFailureError, BackendError, ContractViolationError) as exc:
            logger.warning("entry %d failed: %s", index, exc)
            entries.append(
                EntryOutcome(index, entry.arguments, None, entry.truth, None, 0, False, str(exc))
            )
            if on_step is not None:
                on_step(fn, entries[-1])
            continue

        predicted = outcome.invocation.raw_results
        error: str | None = None
        try:
            wrong = should_reflect(config, predicted, entry.truth, fn.contract.task_kind)
        except TypeMismatchError as exc:
            error = str(exc)
            wrong = False

        if outcome.served_by is ServedBy.SCRIPT:
            # Script-served calls never touch memory; a wrong result retires
            # the script so the next call is reasoned live.
            if wrong:
                invalidate(fn)
            entries.append(
                EntryOutcome(
                    index, outcome.invocation.arguments, predicted, entry.truth,
                    outcome.served_by, outcome.attempts, False, error,
                )
            )
            if on_step is not None:
                on_step(fn, entries[-1])
            continue

        reflected = False
        if wrong:
            try:
                note = reflect(fn, outcome.invocation, entry.truth, reflector)
                apply_reflection(fn, outcome.invocation.id, entry.truth, note)
                notes.append(note)
                reflected = True
            except (BackendError, ReflectionFailureError) as exc:
                logger.warning("reflection failed for entry %d: %s", index, exc)
                error = f"reflection failed: {exc}"

        try:
            _refine(fn, config, reflector)
        except (BackendError, RefinementError) as exc:
            logger.warning("refinement failed for entry %d: %s", index, exc)
            error = error or f"refinement failed: {exc}"

        entries.append(
            EntryOutcome(
                index, outcome.invocation.arguments, predicted, entry.truth,
                outcome.served_by, outcome.attempts, reflected, error,
            )
        )
        if on_step is not None:
            on_step(fn, entries[-1])

    return TrainingReport(tuple(entries), tuple(notes), len(fn.memory.invocations))


def _refine(fn: MockFunction, config: TrainerConfig, reflector) -> None:
    limit = config.context_length_limit
    if config.refinement_policy is RefinementPolicy.REPLACE:
        newcomer = fn.memory.pop_last()
        refine_replace(fn.memory, newcomer, limit)
    elif config.refinement_policy is RefinementPolicy.COMPRESS:
        if len(fn.memory.invocations) >= limit:
            refine_compress(fn, reflector)
    elif config.custom_refiner is not None:
        config.custom_refiner(fn, config)

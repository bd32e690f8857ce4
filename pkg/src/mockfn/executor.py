"""The mock-function executor.

A MockFunction binds a contract to a backend and a memory branch. Invoking it
renders the arguments as a user message on top of the current context, asks
the backend for a reply, validates the reply against the response schema, and
on violations appends a correction message and re-requests, up to a bounded
number of attempts. The failed exchanges live only in a throwaway message
list; persistent memory receives exactly one invocation per success and
nothing on failure. When a valid substitution script is installed, calls are
served by the script with zero backend traffic.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from datetime import datetime
from enum import Enum
from typing import Any, Callable

from .backend import ChatRequest, UsageCategory, UsageLedger, tag_usage
from .contract import (
    FunctionContract,
    ValidationResult,
    Violation,
    build_parameter_schema,
    build_response_schema,
    order_arguments,
    validate_response,
)
from .errors import ContractError, FormalFailureError, ScriptFaultError
from .memory import ChatMessage, MemoryBranch, MockInvocation, Role
from .oplog import OperationLog
from .prompts import correction_text, system_prompt_text
from .subscript import SubstitutionScript, execute_script, invalidate
from .util import new_hex_id, to_json, utcnow

logger = logging.getLogger("mockfn.executor")

_FENCED_JSON = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL | re.IGNORECASE)


class ServedBy(str, Enum):
    LLM = "llm"
    SCRIPT = "script"


@dataclass(frozen=True)
class InvocationOutcome:
    invocation: MockInvocation
    attempts: int
    formally_correct_first_try: bool
    served_by: ServedBy

    def __post_init__(self):
        if self.served_by is ServedBy.LLM and self.attempts < 1:
            raise ContractError("a model-served outcome records at least one attempt")


def build_system_prompt(
    contract: FunctionContract,
    param_schema: dict[str, Any],
    response_schema: dict[str, Any],
) -> ChatMessage:
    """System message: role-play directive, both schemas verbatim, and the
    instruction to reason in "remarks" before answering in "results"."""
    return ChatMessage(Role.SYSTEM, system_prompt_text(contract, param_schema, response_schema))


def parse_reply(text: str) -> tuple[Any, Violation | None]:
    """Parse a reply leniently: bare JSON, or JSON inside one fenced block.

    Small models often wrap the object in a code fence; the extracted object
    still has to validate strictly.
    """
    try:
        return json.loads(text), None
    except ValueError:
        pass
    match = _FENCED_JSON.search(text)
    if match:
        try:
            return json.loads(match.group(1)), None
        except ValueError:
            pass
    return None, Violation("", "not valid JSON")


class MockFunction:
    """A function defined by its contract and executed by a model."""

    def __init__(
        self,
        contract: FunctionContract,
        backend,
        *,
        memory: MemoryBranch | None = None,
        max_regeneration_attempts: int = 3,
        usage_ledger: UsageLedger | None = None,
        op_log: OperationLog | None = None,
        ids: Callable[[], str] = new_hex_id,
        clock: Callable[[], datetime] = utcnow,
    ):
        if max_regeneration_attempts < 1:
            raise ContractError("max_regeneration_attempts must be at least 1")
        self.contract = contract
        self.backend = backend
        self.param_schema = build_parameter_schema(contract)
        self.response_schema = build_response_schema(contract)
        self.system_prompt = build_system_prompt(contract, self.param_schema, self.response_schema)
        self.memory = memory or MemoryBranch(self.system_prompt, ids=ids)
        self.max_regeneration_attempts = max_regeneration_attempts
        self.script_slot: SubstitutionScript | None = None
        self.usage_ledger = usage_ledger or UsageLedger()
        self.op_log = op_log
        self.ids = ids
        self.clock = clock

    @property
    def backend_profile(self):
        return self.backend.profile

    def fork(self, memory: MemoryBranch) -> "MockFunction":
        """A view of this function bound to another memory branch; backend,
        script, ledger and log are shared."""
        twin = object.__new__(MockFunction)
        twin.__dict__.update(self.__dict__)
        twin.memory = memory
        return twin

    # -- invocation -----------------------------------------------------------

    def invoke(self, args: dict[str, Any], ground_truth: Any = None) -> InvocationOutcome:
        """Execute one call; route to the substitution script when one is
        installed and valid, otherwise to the live model with validation and
        bounded regeneration."""
        script_outcome = self._try_script(args, ground_truth)
        if script_outcome is not None:
            return script_outcome
        return self._invoke_llm(args, ground_truth)

    def _try_script(self, args: dict[str, Any], ground_truth: Any) -> InvocationOutcome | None:
        script = self.script_slot
        if script is None or not script.valid:
            return None
        try:
            output = execute_script(script, args)
        except ScriptFaultError as exc:
            logger.warning("substitution script fault, falling back to live inference: %s", exc)
            invalidate(self)
            return None
        if output["IsReadyToCompile"] is False:
            # Script declined the inputs; serve this call live, keep the script.
            return None
        invocation = MockInvocation(
            id=self.ids(),
            arguments=order_arguments(self.contract, args),
            remarks=output["Remarks"],
            results=output["Results"],
            ground_truth=ground_truth,
            created_at=self.clock(),
        )
        return InvocationOutcome(
            invocation=invocation,
            attempts=0,
            formally_correct_first_try=True,
            served_by=ServedBy.SCRIPT,
        )

    def _invoke_llm(self, args: dict[str, Any], ground_truth: Any) -> InvocationOutcome:
        profile = self.backend.profile
        ordered = order_arguments(self.contract, args)
        messages = self.memory.render_context()
        messages.append(ChatMessage(Role.USER, to_json(ordered)))

        all_violations: list[tuple[Violation, ...]] = []
        for attempt in range(1, self.max_regeneration_attempts + 1):
            request = ChatRequest(
                messages=tuple(messages),
                response_schema=self.response_schema
                if profile.supports_structured_output
                else None,
                model_id=profile.model_id,
                temperature=profile.temperature,
            )
            response = self.backend.complete(request)
            usage = tag_usage(response.usage, UsageCategory.INVOCATION)
            self.usage_ledger.record(usage)

            parsed, parse_violation = parse_reply(response.content)
            if parse_violation is not None:
                result = ValidationResult(False, (parse_violation,))
            else:
                result = validate_response(self.response_schema, parsed)

            if self.op_log is not None:
                self.op_log.record(
                    UsageCategory.INVOCATION,
                    request,
                    response.content,
                    remarks=result.document.get("remarks") if result.ok else None,
                    results=result.document.get("results") if result.ok else None,
                    ground_truth=ground_truth,
                    correct=result.ok,
                    usage=usage,
                )

            if result.ok:
                invocation = MockInvocation(
                    id=self.ids(),
                    arguments=ordered,
                    remarks=result.document["remarks"],
                    results=result.document["results"],
                    ground_truth=ground_truth,
                    created_at=self.clock(),
                )
                self.memory.append(invocation)
                return InvocationOutcome(
                    invocation=invocation,
                    attempts=attempt,
                    formally_correct_first_try=attempt == 1,
                    served_by=ServedBy.LLM,
                )

            all_violations.append(result.violations)
            # The correction exchange stays on this throwaway message list;
            # persistent memory never sees the failed attempts.
            messages.append(ChatMessage(Role.ASSISTANT, response.content))
            messages.append(ChatMessage(Role.USER, correction_text(result.violations)))

        raise FormalFailureError(self.max_regeneration_attempts, all_violations)

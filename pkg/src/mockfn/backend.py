"""Chat-completion transports: a remote OpenAI-compatible client and a
deterministic scripted stub, plus token-usage accounting.

Both backends are stateless with respect to conversation history: every
request carries the full message list. Requests are checked before any
network activity: non-empty, system-first, and strict user/assistant
alternation ending in an unanswered user message, so no request is ever
issued on top of a dangling exchange.
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable, Iterable, Sequence

from .errors import (
    AuthenticationError,
    BackendError,
    ContractError,
    MalformedReplyError,
    RateLimitError,
    StubScriptExhaustedError,
    TransportError,
    UnmatchedRequestError,
)
from .memory import ChatMessage, Role

logger = logging.getLogger("mockfn.backend")

DEFAULT_MAX_RETRIES = 3
DEFAULT_BACKOFF_SECONDS = 0.5


class UsageCategory(str, Enum):
    INVOCATION = "invocation"
    REFLECTION = "reflection"
    COMPRESSION = "compression"
    SCRIPT_GENERATION = "script_generation"


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int
    completion_tokens: int
    category: UsageCategory = UsageCategory.INVOCATION

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ContractError("token counts must be non-negative")

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "category": self.category.value,
        }


@dataclass(frozen=True)
class BackendProfile:
    """Where and how to reach a model, and what its tokens cost."""

    model_id: str = ""
    base_url: str = ""
    api_key_env: str = ""
    supports_structured_output: bool = False
    input_price_per_million: float = 0.0
    output_price_per_million: float = 0.0
    temperature: float = 0.0

    def __post_init__(self):
        if self.input_price_per_million < 0 or self.output_price_per_million < 0:
            raise ContractError("token prices must be non-negative")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[ChatMessage, ...]
    response_schema: dict[str, Any] | None = None
    model_id: str = ""
    temperature: float = 0.0

    def __post_init__(self):
        if not self.messages:
            raise ContractError("a chat request requires at least one message")
        if self.messages[0].role is not Role.SYSTEM:
            raise ContractError("the first message must be a system message")
        body = list(self.messages)
        while body and body[0].role is Role.SYSTEM:
            body.pop(0)
        expected = Role.USER
        for message in body:
            if message.role is not expected:
                raise ContractError(
                    "messages must alternate user/assistant after the system block"
                )
            expected = Role.ASSISTANT if expected is Role.USER else Role.USER
        if body and body[-1].role is not Role.USER:
            raise ContractError("a request must end with an unanswered user message")

    @property
    def text(self) -> str:
        return "\n".join(message.content for message in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: TokenUsage
    latency: float = 0.0
    retries: int = 0


def estimate_tokens(text: str) -> int:
    """Order-of-magnitude token estimate without a tokenizer dependency."""
    return math.ceil(len(text) / 4)


class RemoteBackend:
    """OpenAI-compatible chat-completions client over HTTP JSON.

    Transient transport failures (429, 5xx, timeouts, connection errors) are
    retried with bounded exponential backoff; authentication failures and
    malformed replies are not. The transport is injectable for tests.
    """

    def __init__(
        self,
        profile: BackendProfile,
        *,
        transport: Callable[[str, dict[str, str], dict[str, Any], float], tuple[int, Any]]
        | None = None,
        sleeper: Callable[[float], None] = time.sleep,
        timeout: float = 60.0,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_base: float = DEFAULT_BACKOFF_SECONDS,
    ):
        self.profile = profile
        self._transport = transport or _requests_transport
        self._sleeper = sleeper
        self._timeout = timeout
        self._max_retries = max_retries
        self._backoff_base = backoff_base

    def complete(self, request: ChatRequest) -> ChatResponse:
        url = self.profile.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.profile.api_key_env:
            key = os.environ.get(self.profile.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        payload: dict[str, Any] = {
            "model": request.model_id or self.profile.model_id,
            "messages": [message.to_dict() for message in request.messages],
            "temperature": request.temperature,
        }
        if request.response_schema is not None and self.profile.supports_structured_output:
            payload["response_format"] = {
                "type": "json_schema",
                "json_schema": {
                    "name": "response",
                    "strict": True,
                    "schema": request.response_schema,
                },
            }

        last_error: BackendError | None = None
        started = time.perf_counter()
        for attempt in range(self._max_retries + 1):
            if attempt:
                delay = self._backoff_base * (2 ** (attempt - 1))
                logger.debug("retrying after transport failure (attempt %d)", attempt + 1)
                self._sleeper(delay)
            try:
                status, body = self._transport(url, headers, payload, self._timeout)
            except BackendError as exc:
                last_error = exc
                continue
            if status in (401, 403):
                raise AuthenticationError(f"provider rejected credentials (HTTP {status})")
            if status == 429:
                last_error = RateLimitError("provider throttled the request (HTTP 429)")
                continue
            if status >= 500:
                last_error = TransportError(f"provider error (HTTP {status})")
                continue
            if status != 200:
                raise BackendError(f"unexpected provider status HTTP {status}")
            return self._decode(body, attempt, time.perf_counter() - started)
        raise last_error or TransportError("transport failed without a recorded error")

    def _decode(self, body: Any, retries: int, latency: float) -> ChatResponse:
        try:
            content = body["choices"][0]["message"]["content"]
            usage = body.get("usage", {})
            prompt_tokens = int(usage.get("prompt_tokens", 0))
            completion_tokens = int(usage.get("completion_tokens", 0))
        except (KeyError, IndexError, TypeError) as exc:
            raise MalformedReplyError(f"cannot decode provider reply: {exc!r}") from exc
        if not isinstance(content, str):
            raise MalformedReplyError("provider reply content is not text")
        return ChatResponse(
            content=content,
            usage=TokenUsage(prompt_tokens, completion_tokens),
            latency=latency,
            retries=retries,
        )


def _requests_transport(
    url: str, headers: dict[str, str], payload: dict[str, Any], timeout: float
) -> tuple[int, Any]:
    import requests

    try:
        response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    except requests.Timeout as exc:
        raise TransportError(f"request timed out: {exc}") from exc
    except requests.RequestException as exc:
        raise TransportError(f"connection failure: {exc}") from exc
    try:
        body = response.json()
    except ValueError:
        body = {}
    return response.status_code, body


Matcher = None | str | Callable[[ChatRequest], bool]


def _matches(matcher: Matcher, request: ChatRequest) -> bool:
    if matcher is None:
        return True
    if isinstance(matcher, str):
        return matcher in request.text
    return bool(matcher(request))


class _ScriptEntry:
    __slots__ = ("matcher", "reply", "remaining")

    def __init__(self, matcher: Matcher, reply: str, remaining: int | None):
        self.matcher = matcher
        self.reply = reply
        self.remaining = remaining


class StubBackend:
    """Deterministic backend driven by an ordered (matcher, reply) script.

    Each request consumes the first matching entry; an optional third tuple
    element bounds how often an entry may fire (None for unbounded). Usage is
    estimated as ceil(chars/4) per side.
    """

    def __init__(
        self,
        script: Sequence[tuple],
        profile: BackendProfile | None = None,
    ):
        if not script:
            raise ContractError("the stub script must not be empty")
        self._entries = []
        for entry in script:
            if len(entry) == 2:
                matcher, reply = entry
                times: int | None = 1
            else:
                matcher, reply, times = entry
            self._entries.append(_ScriptEntry(matcher, reply, times))
        self.profile = profile or BackendProfile(model_id="stub")
        self.call_count = 0
        self.transcript: list[tuple[ChatRequest, ChatResponse]] = []
        self._lock = threading.Lock()

    def complete(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            if all(entry.remaining == 0 for entry in self._entries):
                raise StubScriptExhaustedError("the stub script is exhausted")
            for entry in self._entries:
                if entry.remaining == 0:
                    continue
                if _matches(entry.matcher, request):
                    if entry.remaining is not None:
                        entry.remaining -= 1
                    usage = TokenUsage(
                        prompt_tokens=sum(estimate_tokens(m.content) for m in request.messages),
                        completion_tokens=estimate_tokens(entry.reply),
                    )
                    response = ChatResponse(content=entry.reply, usage=usage)
                    self.call_count += 1
                    self.transcript.append((request, response))
                    return response
            raise UnmatchedRequestError(request)


class UsageLedger:
    """Append-only record of token usage across a run."""

    def __init__(self):
        self._usages: list[TokenUsage] = []
        self._lock = threading.Lock()

    def record(self, usage: TokenUsage) -> None:
        with self._lock:
            self._usages.append(usage)

    @property
    def usages(self) -> tuple[TokenUsage, ...]:
        return tuple(self._usages)

    def total_tokens(self) -> int:
        return sum(usage.total_tokens for usage in self._usages)


@dataclass(frozen=True)
class CategoryCost:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    cost: float = 0.0

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_dict(self) -> dict[str, Any]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "tokens": self.tokens,
            "cost": self.cost,
            "cost_rounded": round(self.cost, 2),
        }


@dataclass(frozen=True)
class CostBreakdown:
    categories: dict[str, CategoryCost]
    total: CategoryCost

    def to_dict(self) -> dict[str, Any]:
        return {
            "categories": {name: cost.to_dict() for name, cost in self.categories.items()},
            "total": self.total.to_dict(),
        }


def cost_report(usages: Iterable[TokenUsage], profile: BackendProfile) -> CostBreakdown:
    """Per-category token totals and cost; the grand total equals their sum."""
    prompt: dict[UsageCategory, int] = {category: 0 for category in UsageCategory}
    completion: dict[UsageCategory, int] = {category: 0 for category in UsageCategory}
    for usage in usages:
        prompt[usage.category] += usage.prompt_tokens
        completion[usage.category] += usage.completion_tokens

    def cost_of(prompt_tokens: int, completion_tokens: int) -> float:
        return (
            prompt_tokens * profile.input_price_per_million
            + completion_tokens * profile.output_price_per_million
        ) / 1_000_000

    categories = {
        category.value: CategoryCost(
            prompt_tokens=prompt[category],
            completion_tokens=completion[category],
            cost=cost_of(prompt[category], completion[category]),
        )
        for category in UsageCategory
    }
    total = CategoryCost(
        prompt_tokens=sum(prompt.values()),
        completion_tokens=sum(completion.values()),
        cost=sum(entry.cost for entry in categories.values()),
    )
    return CostBreakdown(categories=categories, total=total)


def tag_usage(usage: TokenUsage, category: UsageCategory) -> TokenUsage:
    """Callers assign the accounting category; it is never inferred."""
    return replace(usage, category=category)

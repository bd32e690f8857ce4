"""Exception types shared across the package."""

from __future__ import annotations


class MockFnError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(MockFnError):
    """A function contract violates its own invariants."""


class ContractViolationError(MockFnError):
    """An argument document does not conform to the parameter schema."""

    def __init__(self, path: str, reason: str):
        self.path = path
        self.reason = reason
        super().__init__(f"argument violates parameter schema at '{path or '(root)'}': {reason}")


class OrphanBranchError(MockFnError):
    """A sub-branch was committed after its parent was dropped or consumed."""


class ClosedBranchError(MockFnError):
    """A branch was mutated after it was dropped or committed."""


class UnknownInvocationError(MockFnError):
    """No invocation with the given id exists in the branch."""


class DuplicateInvocationError(MockFnError):
    """An invocation id collides with one already present."""


class BackendError(MockFnError):
    """Base class for chat-completion transport failures."""


class AuthenticationError(BackendError):
    """The provider rejected the API key."""


class RateLimitError(BackendError):
    """The provider throttled the request (retryable)."""


class TransportError(BackendError):
    """Connection failure, timeout, or server-side error (retryable)."""


class MalformedReplyError(BackendError):
    """The provider reply could not be decoded into content and usage."""


class StubScriptExhaustedError(BackendError):
    """The stub backend ran out of scripted replies."""


class UnmatchedRequestError(BackendError):
    """No scripted matcher fired for a request sent to the stub backend."""

    def __init__(self, request, message: str = "no scripted reply matches the request"):
        self.request = request
        super().__init__(message)


class FormalFailureError(MockFnError):
    """Every regeneration attempt produced a schema-violating reply."""

    def __init__(self, attempts: int, violations):
        self.attempts = attempts
        self.violations = tuple(violations)
        detail = "; ".join(
            f"attempt {i + 1}: " + ", ".join(f"{v.path or '(root)'}: {v.reason}" for v in vs)
            for i, vs in enumerate(self.violations)
        )
        super().__init__(f"no formally correct reply after {attempts} attempts ({detail})")


class TypeMismatchError(MockFnError):
    """Predicted value and ground truth are of incomparable kinds."""


class ReflectionFailureError(MockFnError):
    """The reflector returned an unusable reply; the invocation stays unreflected."""


class RefinementError(MockFnError):
    """A memory refinement step could not be completed; memory is untouched."""


class ScriptError(MockFnError):
    """Base class for substitution-script failures."""


class ScriptCompileError(ScriptError):
    """The script source was rejected by the dialect compiler."""


class ScriptFaultError(ScriptError):
    """Base class for faults while executing a compiled script."""


class ScriptRuntimeError(ScriptFaultError):
    """The script hit a runtime fault (missing field, type error, ...)."""


class ScriptContractError(ScriptFaultError):
    """The script output lacks the required Remarks/Results/IsReadyToCompile shape."""


class ScriptStepBudgetError(ScriptFaultError):
    """The script exceeded its execution step budget."""


class ScriptGenerationError(ScriptError):
    """All generation attempts produced uncompilable scripts."""


class ConfigurationError(MockFnError):
    """A run configuration document is invalid."""


class DatasetError(MockFnError):
    """A dataset file or its column mapping is invalid."""

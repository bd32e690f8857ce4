"""Substitution scripts: generated code that replaces live inference.

The script dialect is a deterministic, embedded subset of Python syntax:
plain statements over JSON values with no imports, no I/O, no clock, and a
bounded step count. Sources are parsed and checked against a whitelist
("compiled"), then run by the interpreter here rather than by the host
runtime, which preserves the compile-error feedback loop without executing
untrusted code. A script reads the ``arguments`` dict and must assign
``Remarks``, ``Results`` and ``IsReadyToCompile``; setting the last to False
declines the invocation, which then falls back to live inference.
"""

from __future__ import annotations

import ast
import copy
import logging
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Any

from .backend import ChatRequest, UsageCategory, tag_usage
from .errors import (
    ContractError,
    ScriptCompileError,
    ScriptContractError,
    ScriptGenerationError,
    ScriptRuntimeError,
    ScriptStepBudgetError,
)
from .memory import ChatMessage, Role
from .prompts import script_generation_text, script_retry_text
from .util import to_json

logger = logging.getLogger("mockfn.subscript")

STEP_BUDGET = 1_000_000

OUTPUT_KEYS = ("Remarks", "Results", "IsReadyToCompile")

_FENCE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n(.*?)```", re.DOTALL)

_ALLOWED_BUILTINS: dict[str, Any] = {
    "abs": abs,
    "min": min,
    "max": max,
    "len": len,
    "int": int,
    "float": float,
    "str": str,
    "bool": bool,
    "round": round,
    "sum": sum,
    "range": range,
}

_ALLOWED_METHODS: dict[type, frozenset[str]] = {
    str: frozenset(
        {"lower", "upper", "strip", "lstrip", "rstrip", "startswith", "endswith",
         "replace", "split", "find", "title", "capitalize"}
    ),
    dict: frozenset({"get", "keys", "values"}),
    list: frozenset({"append"}),
}

_ALLOWED_STATEMENTS = (
    ast.Assign,
    ast.AugAssign,
    ast.If,
    ast.While,
    ast.For,
    ast.Break,
    ast.Continue,
    ast.Pass,
    ast.Expr,
)

_ALLOWED_BINOPS = (
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.FloorDiv, ast.Mod, ast.Pow,
)

_ALLOWED_COMPARATORS = (
    ast.Eq, ast.NotEq, ast.Lt, ast.LtE, ast.Gt, ast.GtE, ast.In, ast.NotIn,
)


@dataclass(frozen=True)
class CompiledScript:
    source: str
    tree: ast.Module


@dataclass
class SubstitutionScript:
    source: str
    executable: CompiledScript | None
    valid: bool
    generation_attempts: int = 0
    generated_at: datetime | None = None

    def __post_init__(self):
        if self.valid and self.executable is None:
            raise ContractError("a valid script must carry its compiled form")


# ---------------------------------------------------------------------------
# Compilation


class _Validator(ast.NodeVisitor):
    def __init__(self):
        self.problems: list[str] = []

    def _reject(self, node: ast.AST, message: str):
        line = getattr(node, "lineno", "?")
        self.problems.append(f"line {line}: {message}")

    def visit(self, node: ast.AST):
        handler = getattr(self, f"check_{type(node).__name__}", None)
        if handler is not None:
            handler(node)
        elif isinstance(node, ast.Module):
            pass
        elif isinstance(node, (ast.Load, ast.Store, ast.expr_context, ast.operator,
                               ast.cmpop, ast.unaryop, ast.boolop)):
            pass
        elif isinstance(node, _ALLOWED_STATEMENTS):
            self._check_statement(node)
        elif isinstance(node, (ast.Name, ast.IfExp, ast.BoolOp, ast.Dict, ast.List,
                               ast.Tuple, ast.Subscript, ast.keyword)):
            pass
        else:
            self._reject(node, f"unsupported construct {type(node).__name__}")
            return
        self.generic_visit(node)

    def _check_statement(self, node: ast.AST):
        if isinstance(node, ast.Assign):
            if len(node.targets) != 1 or not isinstance(node.targets[0], (ast.Name, ast.Subscript)):
                self._reject(node, "assignment target must be a single name or subscript")
        if isinstance(node, ast.AugAssign) and not isinstance(node.target, (ast.Name, ast.Subscript)):
            self._reject(node, "augmented assignment target must be a name or subscript")
        if isinstance(node, ast.For) and not isinstance(node.target, ast.Name):
            self._reject(node, "for-loop target must be a single name")

    def check_Constant(self, node: ast.Constant):
        if not isinstance(node.value, (str, int, float, bool, type(None))):
            self._reject(node, f"constant of type {type(node.value).__name__} is not allowed")

    def check_BinOp(self, node: ast.BinOp):
        if not isinstance(node.op, _ALLOWED_BINOPS):
            self._reject(node, f"operator {type(node.op).__name__} is not allowed")

    def check_UnaryOp(self, node: ast.UnaryOp):
        if not isinstance(node.op, (ast.USub, ast.UAdd, ast.Not)):
            self._reject(node, f"operator {type(node.op).__name__} is not allowed")

    def check_Compare(self, node: ast.Compare):
        for op in node.ops:
            if not isinstance(op, _ALLOWED_COMPARATORS):
                self._reject(node, f"comparison {type(op).__name__} is not allowed")

    def check_Call(self, node: ast.Call):
        if node.keywords:
            self._reject(node, "keyword arguments are not allowed")
        func = node.func
        if isinstance(func, ast.Name):
            if func.id not in _ALLOWED_BUILTINS:
                self._reject(node, f"function '{func.id}' is not allowed")
        elif isinstance(func, ast.Attribute):
            allowed = set().union(*_ALLOWED_METHODS.values())
            if func.attr not in allowed:
                self._reject(node, f"method '{func.attr}' is not allowed")
        else:
            self._reject(node, "only direct function or method calls are allowed")

    def check_Attribute(self, node: ast.Attribute):
        # Attributes are only reachable as the target of a whitelisted call;
        # bare attribute reads would open the door out of the sandbox.
        allowed = set().union(*_ALLOWED_METHODS.values())
        if node.attr not in allowed:
            self._reject(node, f"attribute '{node.attr}' is not allowed")


def compile_script(source: str) -> CompiledScript:
    """Parse and whitelist-check a script source.

    Raises ScriptCompileError with line-numbered diagnostics; the text is fed
    back to the generator on retry.
    """
    try:
        tree = ast.parse(source, mode="exec")
    except SyntaxError as exc:
        raise ScriptCompileError(f"line {exc.lineno}: {exc.msg}") from exc
    validator = _Validator()
    validator.visit(tree)
    if validator.problems:
        raise ScriptCompileError("; ".join(validator.problems))
    return CompiledScript(source=source, tree=tree)


# ---------------------------------------------------------------------------
# Interpretation


class _Break(Exception):
    pass


class _Continue(Exception):
    pass


class _Interpreter:
    def __init__(self, arguments: dict[str, Any], step_budget: int = STEP_BUDGET):
        self.env: dict[str, Any] = {"arguments": copy.deepcopy(arguments)}
        self.steps = 0
        self.budget = step_budget

    def _tick(self):
        self.steps += 1
        if self.steps > self.budget:
            raise ScriptStepBudgetError(f"script exceeded the step budget of {self.budget}")

    def run(self, module: ast.Module):
        for statement in module.body:
            self._exec(statement)

    def _exec(self, node: ast.stmt):
        self._tick()
        if isinstance(node, ast.Assign):
            value = self._eval(node.value)
            self._assign(node.targets[0], value)
        elif isinstance(node, ast.AugAssign):
            current = self._load_target(node.target)
            value = self._binop(node.op, current, self._eval(node.value))
            self._assign(node.target, value)
        elif isinstance(node, ast.If):
            branch = node.body if self._eval(node.test) else node.orelse
            for statement in branch:
                self._exec(statement)
        elif isinstance(node, ast.While):
            while self._eval(node.test):
                try:
                    for statement in node.body:
                        self._exec(statement)
                except _Break:
                    break
                except _Continue:
                    continue
        elif isinstance(node, ast.For):
            iterable = self._eval(node.iter)
            if not isinstance(iterable, (list, tuple, str, range, dict)):
                raise ScriptRuntimeError(
                    f"cannot iterate over {type(iterable).__name__}"
                )
            for item in iterable:
                self._tick()
                self.env[node.target.id] = item
                try:
                    for statement in node.body:
                        self._exec(statement)
                except _Break:
                    break
                except _Continue:
                    continue
        elif isinstance(node, ast.Break):
            raise _Break()
        elif isinstance(node, ast.Continue):
            raise _Continue()
        elif isinstance(node, ast.Pass):
            pass
        elif isinstance(node, ast.Expr):
            self._eval(node.value)
        else:  # pragma: no cover - compilation rejects everything else
            raise ScriptRuntimeError(f"unsupported statement {type(node).__name__}")

    def _assign(self, target: ast.expr, value: Any):
        if isinstance(target, ast.Name):
            self.env[target.id] = value
        elif isinstance(target, ast.Subscript):
            container = self._eval(target.value)
            key = self._eval(target.slice)
            try:
                container[key] = value
            except (TypeError, IndexError, KeyError) as exc:
                raise ScriptRuntimeError(f"cannot assign into container: {exc}") from exc
        else:  # pragma: no cover - compilation rejects everything else
            raise ScriptRuntimeError("unsupported assignment target")

    def _load_target(self, target: ast.expr) -> Any:
        if isinstance(target, ast.Name):
            return self._name(target.id)
        return self._eval(target)

    def _name(self, name: str) -> Any:
        if name in self.env:
            return self.env[name]
        raise ScriptRuntimeError(f"name '{name}' is not defined")

    def _eval(self, node: ast.expr) -> Any:
        self._tick()
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            return self._name(node.id)
        if isinstance(node, ast.BinOp):
            return self._binop(node.op, self._eval(node.left), self._eval(node.right))
        if isinstance(node, ast.UnaryOp):
            operand = self._eval(node.operand)
            try:
                if isinstance(node.op, ast.USub):
                    return -operand
                if isinstance(node.op, ast.UAdd):
                    return +operand
                return not operand
            except TypeError as exc:
                raise ScriptRuntimeError(str(exc)) from exc
        if isinstance(node, ast.BoolOp):
            if isinstance(node.op, ast.And):
                result: Any = True
                for value_node in node.values:
                    result = self._eval(value_node)
                    if not result:
                        return result
                return result
            for value_node in node.values:
                result = self._eval(value_node)
                if result:
                    return result
            return result
        if isinstance(node, ast.Compare):
            left = self._eval(node.left)
            for op, comparator_node in zip(node.ops, node.comparators):
                right = self._eval(comparator_node)
                if not self._compare(op, left, right):
                    return False
                left = right
            return True
        if isinstance(node, ast.IfExp):
            return self._eval(node.body) if self._eval(node.test) else self._eval(node.orelse)
        if isinstance(node, ast.Subscript):
            container = self._eval(node.value)
            key = self._eval(node.slice)
            try:
                return container[key]
            except KeyError:
                raise ScriptRuntimeError(f"missing key {key!r}") from None
            except (IndexError, TypeError) as exc:
                raise ScriptRuntimeError(str(exc)) from exc
        if isinstance(node, ast.Dict):
            return {
                self._eval(key): self._eval(value)
                for key, value in zip(node.keys, node.values)
            }
        if isinstance(node, ast.List):
            return [self._eval(item) for item in node.elts]
        if isinstance(node, ast.Tuple):
            return tuple(self._eval(item) for item in node.elts)
        if isinstance(node, ast.Call):
            return self._call(node)
        raise ScriptRuntimeError(f"unsupported expression {type(node).__name__}")

    def _binop(self, op: ast.operator, left: Any, right: Any) -> Any:
        try:
            if isinstance(op, ast.Add):
                return left + right
            if isinstance(op, ast.Sub):
                return left - right
            if isinstance(op, ast.Mult):
                if isinstance(left, (str, list)) and isinstance(right, int) and right > 10_000:
                    raise ScriptRuntimeError("sequence repetition is too large")
                if isinstance(right, (str, list)) and isinstance(left, int) and left > 10_000:
                    raise ScriptRuntimeError("sequence repetition is too large")
                return left * right
            if isinstance(op, ast.Div):
                return left / right
            if isinstance(op, ast.FloorDiv):
                return left // right
            if isinstance(op, ast.Mod):
                return left % right
            if isinstance(op, ast.Pow):
                if isinstance(right, (int, float)) and abs(right) > 1000:
                    raise ScriptRuntimeError("exponent is too large")
                return left**right
        except ZeroDivisionError as exc:
            raise ScriptRuntimeError("division by zero") from exc
        except TypeError as exc:
            raise ScriptRuntimeError(str(exc)) from exc
        raise ScriptRuntimeError(f"unsupported operator {type(op).__name__}")

    def _compare(self, op: ast.cmpop, left: Any, right: Any) -> bool:
        try:
            if isinstance(op, ast.Eq):
                return left == right
            if isinstance(op, ast.NotEq):
                return left != right
            if isinstance(op, ast.Lt):
                return left < right
            if isinstance(op, ast.LtE):
                return left <= right
            if isinstance(op, ast.Gt):
                return left > right
            if isinstance(op, ast.GtE):
                return left >= right
            if isinstance(op, ast.In):
                return left in right
            if isinstance(op, ast.NotIn):
                return left not in right
        except TypeError as exc:
            raise ScriptRuntimeError(str(exc)) from exc
        raise ScriptRuntimeError(f"unsupported comparison {type(op).__name__}")

    def _call(self, node: ast.Call) -> Any:
        args = [self._eval(arg) for arg in node.args]
        func = node.func
        if isinstance(func, ast.Name):
            builtin = _ALLOWED_BUILTINS.get(func.id)
            if builtin is None:
                raise ScriptRuntimeError(f"function '{func.id}' is not allowed")
            for arg in args:
                # Aggregating a huge range inside a C-level builtin would
                # bypass the step budget.
                if isinstance(arg, range) and len(arg) > self.budget:
                    raise ScriptRuntimeError("range is too large to aggregate")
            try:
                return builtin(*args)
            except (TypeError, ValueError) as exc:
                raise ScriptRuntimeError(str(exc)) from exc
        if isinstance(func, ast.Attribute):
            receiver = self._eval(func.value)
            allowed = _ALLOWED_METHODS.get(type(receiver))
            if allowed is None or func.attr not in allowed:
                raise ScriptRuntimeError(
                    f"method '{func.attr}' is not allowed on {type(receiver).__name__}"
                )
            try:
                return getattr(receiver, func.attr)(*args)
            except (TypeError, ValueError, KeyError, IndexError) as exc:
                raise ScriptRuntimeError(str(exc)) from exc
        raise ScriptRuntimeError("only direct function or method calls are allowed")


def execute_script(
    script: SubstitutionScript | CompiledScript, args: dict[str, Any]
) -> dict[str, Any]:
    """Run a compiled script on an argument document.

    Returns the {"Remarks", "Results", "IsReadyToCompile"} document. Runtime
    faults, contract violations and step-budget overruns raise subclasses of
    ScriptFaultError; the caller invalidates the script and falls back to
    live inference.
    """
    if isinstance(script, SubstitutionScript):
        if not script.valid or script.executable is None:
            raise ScriptRuntimeError("the script is not valid")
        compiled = script.executable
    else:
        compiled = script
    interpreter = _Interpreter(args)
    interpreter.run(compiled.tree)
    missing = [key for key in OUTPUT_KEYS if key not in interpreter.env]
    if missing:
        raise ScriptContractError(f"script output is missing: {', '.join(missing)}")
    remarks = interpreter.env["Remarks"]
    results = interpreter.env["Results"]
    ready = interpreter.env["IsReadyToCompile"]
    if not isinstance(remarks, str):
        raise ScriptContractError("Remarks must be a string")
    if not isinstance(ready, bool):
        raise ScriptContractError("IsReadyToCompile must be a boolean")
    try:
        to_json(results)
    except (TypeError, ValueError) as exc:
        raise ScriptContractError(f"Results is not a JSON value: {exc}") from exc
    return {"Remarks": remarks, "Results": results, "IsReadyToCompile": ready}


# ---------------------------------------------------------------------------
# Lifecycle


def extract_script_source(reply: str) -> str:
    match = _FENCE.search(reply)
    if match:
        return match.group(1).strip()
    return reply.strip()


def generate_script(fn, generator_backend, max_attempts: int = 3) -> SubstitutionScript:
    """Ask the model for a script of the learned behavior; compile with retry.

    The prompt carries the contract metadata plus the full memory context.
    Compiler diagnostics are fed back verbatim until the source compiles or
    the attempts run out, in which case the function stays in live mode.
    """
    if max_attempts < 1:
        raise ContractError("max_attempts must be at least 1")
    profile = generator_backend.profile
    instruction = script_generation_text(fn.contract, fn.param_schema, fn.response_schema)
    messages = fn.memory.render_context() + [ChatMessage(Role.USER, instruction)]
    diagnostics = ""
    for attempt in range(1, max_attempts + 1):
        request = ChatRequest(
            messages=tuple(messages),
            model_id=profile.model_id,
            temperature=profile.temperature,
        )
        response = generator_backend.complete(request)
        usage = tag_usage(response.usage, UsageCategory.SCRIPT_GENERATION)
        fn.usage_ledger.record(usage)
        if fn.op_log is not None:
            fn.op_log.record(
                UsageCategory.SCRIPT_GENERATION,
                request,
                response.content,
                usage=usage,
            )
        source = extract_script_source(response.content)
        try:
            compiled = compile_script(source)
        except ScriptCompileError as exc:
            diagnostics = str(exc)
            logger.info("script candidate failed to compile: %s", diagnostics)
            messages = messages + [
                ChatMessage(Role.ASSISTANT, response.content),
                ChatMessage(Role.USER, script_retry_text(diagnostics)),
            ]
            continue
        script = SubstitutionScript(
            source=source,
            executable=compiled,
            valid=True,
            generation_attempts=attempt,
            generated_at=fn.clock(),
        )
        fn.script_slot = script
        return script
    raise ScriptGenerationError(
        f"script generation failed after {max_attempts} attempts: {diagnostics}"
    )


def invalidate(fn) -> None:
    """Clear the script slot; the next invocation goes to the live model."""
    script = getattr(fn, "script_slot", None)
    if script is not None:
        script.valid = False
        fn.script_slot = None

"""Function contracts and the JSON schemas that constrain model input and output.

A contract declares a function purely by signature and documentation: named,
typed, described parameters plus a described return value. From it we derive
two JSON Schema documents (draft 2020-12): one constraining the argument
document sent to the model, one constraining the reply, which must carry the
reasoning in "remarks" before the value in "results". The embedded validator
below checks instances against exactly the schema subset this module emits
(type, enum, minimum/maximum, properties/required/additionalProperties,
items) and reports JSON-pointer paths with human-readable reasons, so the
reports can be fed back verbatim when asking the model to regenerate.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import ContractError, ContractViolationError
from .util import to_json

SCHEMA_DIALECT = "https://json-schema.org/draft/2020-12/schema"

_IDENTIFIER = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


class ValueType(str, Enum):
    BOOLEAN = "boolean"
    INTEGER = "integer"
    NUMBER = "number"
    STRING = "string"
    ENUM = "enum"
    OBJECT = "object"
    ARRAY = "array"


class TaskKind(str, Enum):
    CLASSIFICATION = "classification"
    REGRESSION = "regression"
    GENERIC = "generic"


@dataclass(frozen=True, kw_only=True)
class ValueSpec:
    """Type, constraints and documentation for one value.

    ``fields`` carries the member specs of an object value; ``items`` the
    element spec of an array value. Ranges apply to numeric types only and
    ``enum_values`` must be present exactly for enum values.
    """

    value_type: ValueType
    description: str = ""
    minimum: float | None = None
    maximum: float | None = None
    enum_values: tuple[str, ...] | None = None
    fields: tuple["ParamSpec", ...] | None = None
    items: "ValueSpec | None" = None

    def __post_init__(self):
        if (self.enum_values is not None) != (self.value_type is ValueType.ENUM):
            raise ContractError("enum_values must be present exactly when value_type is 'enum'")
        if self.value_type is ValueType.ENUM and not self.enum_values:
            raise ContractError("enum_values must be non-empty")
        numeric = self.value_type in (ValueType.INTEGER, ValueType.NUMBER)
        if (self.minimum is not None or self.maximum is not None) and not numeric:
            raise ContractError("minimum/maximum apply to numeric types only")
        if self.minimum is not None and self.maximum is not None and self.minimum > self.maximum:
            raise ContractError(f"minimum {self.minimum} exceeds maximum {self.maximum}")
        if self.value_type is ValueType.OBJECT:
            if self.fields is None:
                raise ContractError("object values must declare their fields")
            names = [f.name for f in self.fields]
            if len(names) != len(set(names)):
                raise ContractError("object field names must be unique")
        elif self.fields is not None:
            raise ContractError("fields apply to object values only")
        if self.value_type is ValueType.ARRAY:
            if self.items is None:
                raise ContractError("array values must declare an item spec")
        elif self.items is not None:
            raise ContractError("items apply to array values only")


@dataclass(frozen=True, kw_only=True)
class ParamSpec(ValueSpec):
    """A named, optionally required parameter."""

    name: str
    required: bool = True

    def __post_init__(self):
        super().__post_init__()
        if not _IDENTIFIER.match(self.name):
            raise ContractError(f"parameter name {self.name!r} is not a valid identifier")


@dataclass(frozen=True)
class FunctionContract:
    """The declared signature and documentation the model role-plays."""

    name: str
    description: str = ""
    params: tuple[ParamSpec, ...] = ()
    return_spec: ValueSpec = ValueSpec(value_type=ValueType.STRING)
    task_kind: TaskKind = TaskKind.GENERIC

    def __post_init__(self):
        if not _IDENTIFIER.match(self.name):
            raise ContractError(f"function name {self.name!r} is not a valid identifier")
        names = [p.name for p in self.params]
        if len(names) != len(set(names)):
            raise ContractError("parameter names must be unique")
        if not self.description and any(not p.description for p in self.params):
            raise ContractError(
                "a contract without documentation requires a description on every parameter"
            )

    def param(self, name: str) -> ParamSpec:
        for p in self.params:
            if p.name == name:
                return p
        raise ContractError(f"unknown parameter {name!r}")


# ---------------------------------------------------------------------------
# Schema generation


def _value_schema(spec: ValueSpec) -> dict[str, Any]:
    json_type = "string" if spec.value_type is ValueType.ENUM else spec.value_type.value
    node: dict[str, Any] = {"type": json_type}
    if spec.description:
        node["description"] = spec.description
    if spec.enum_values is not None:
        node["enum"] = list(spec.enum_values)
    if spec.minimum is not None:
        node["minimum"] = spec.minimum
    if spec.maximum is not None:
        node["maximum"] = spec.maximum
    if spec.value_type is ValueType.OBJECT:
        node["properties"] = {f.name: _value_schema(f) for f in spec.fields or ()}
        node["required"] = [f.name for f in spec.fields or () if f.required]
        node["additionalProperties"] = False
    if spec.value_type is ValueType.ARRAY and spec.items is not None:
        node["items"] = _value_schema(spec.items)
    return node


def build_parameter_schema(contract: FunctionContract) -> dict[str, Any]:
    """Object schema with one property per parameter, in declaration order."""
    return {
        "$schema": SCHEMA_DIALECT,
        "type": "object",
        "properties": {p.name: _value_schema(p) for p in contract.params},
        "required": [p.name for p in contract.params if p.required],
        "additionalProperties": False,
    }


def build_response_schema(contract: FunctionContract) -> dict[str, Any]:
    """Reply schema requiring "remarks" (the reasoning) then "results"."""
    return {
        "$schema": SCHEMA_DIALECT,
        "type": "object",
        "properties": {
            "remarks": {
                "type": "string",
                "description": "Reasoning that leads to the results, written before them.",
            },
            "results": _value_schema(contract.return_spec),
        },
        "required": ["remarks", "results"],
        "additionalProperties": False,
    }


# ---------------------------------------------------------------------------
# Embedded validation


@dataclass(frozen=True)
class Violation:
    """One schema violation: a JSON-pointer path plus a readable reason."""

    path: str
    reason: str


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    violations: tuple[Violation, ...] = ()
    document: Any = None


def _json_type_name(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    if isinstance(value, str):
        return "string"
    if isinstance(value, dict):
        return "object"
    if isinstance(value, list):
        return "array"
    if value is None:
        return "null"
    return type(value).__name__


def _type_matches(json_type: str, value: Any) -> bool:
    if json_type == "boolean":
        return isinstance(value, bool)
    if json_type == "integer":
        # Draft 2020-12 counts floats with a zero fractional part as integers.
        if isinstance(value, bool):
            return False
        return isinstance(value, int) or (isinstance(value, float) and value.is_integer())
    if json_type == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if json_type == "string":
        return isinstance(value, str)
    if json_type == "object":
        return isinstance(value, dict)
    if json_type == "array":
        return isinstance(value, list)
    return True


def validate_document(schema: dict[str, Any], instance: Any, path: str = "") -> list[Violation]:
    """Check an instance against a schema emitted by this module."""
    violations: list[Violation] = []
    json_type = schema.get("type")
    if json_type is not None and not _type_matches(json_type, instance):
        violations.append(
            Violation(path, f"expected {json_type}, got {_json_type_name(instance)}")
        )
        return violations

    enum_values = schema.get("enum")
    if enum_values is not None and instance not in enum_values:
        violations.append(
            Violation(path, f"value {to_json(instance)} is not one of {to_json(enum_values)}")
        )

    if isinstance(instance, (int, float)) and not isinstance(instance, bool):
        minimum = schema.get("minimum")
        if minimum is not None and instance < minimum:
            violations.append(Violation(path, f"value {instance} is less than minimum {minimum}"))
        maximum = schema.get("maximum")
        if maximum is not None and instance > maximum:
            violations.append(
                Violation(path, f"value {instance} is greater than maximum {maximum}")
            )

    if isinstance(instance, dict):
        properties = schema.get("properties", {})
        for key in schema.get("required", []):
            if key not in instance:
                violations.append(Violation(f"{path}/{key}", f"missing required property '{key}'"))
        for key, value in instance.items():
            if key in properties:
                violations.extend(validate_document(properties[key], value, f"{path}/{key}"))
            elif schema.get("additionalProperties") is False:
                violations.append(Violation(f"{path}/{key}", f"unexpected property '{key}'"))

    if isinstance(instance, list):
        item_schema = schema.get("items")
        if item_schema is not None:
            for index, item in enumerate(instance):
                violations.extend(validate_document(item_schema, item, f"{path}/{index}"))

    return violations


def validate_response(schema: dict[str, Any], doc: Any) -> ValidationResult:
    """Validate a reply document (text or already parsed) against the schema.

    Unparseable text yields a single root violation with reason
    "not valid JSON"; otherwise every violation carries a JSON-pointer path
    and a reason suitable for the regeneration prompt.
    """
    if isinstance(doc, (str, bytes)):
        try:
            parsed = json.loads(doc)
        except ValueError:
            return ValidationResult(False, (Violation("", "not valid JSON"),))
    else:
        parsed = doc
    violations = validate_document(schema, parsed)
    return ValidationResult(not violations, tuple(violations), parsed)


# ---------------------------------------------------------------------------
# Argument rendering


def _order_value(spec: ValueSpec, value: Any) -> Any:
    if spec.value_type is ValueType.OBJECT and isinstance(value, dict):
        return _order_fields(spec.fields or (), value)
    if spec.value_type is ValueType.ARRAY and isinstance(value, list) and spec.items is not None:
        return [_order_value(spec.items, item) for item in value]
    return value


def _order_fields(fields: tuple[ParamSpec, ...], doc: dict[str, Any]) -> dict[str, Any]:
    return {f.name: _order_value(f, doc[f.name]) for f in fields if f.name in doc}


def order_arguments(contract: FunctionContract, args: dict[str, Any]) -> dict[str, Any]:
    """Validate args and rewrite them in declaration order, dropping nothing.

    Missing optional parameters stay absent (no null is injected). Raises
    ContractViolationError naming the offending path when the document does
    not conform to the parameter schema.
    """
    violations = validate_document(build_parameter_schema(contract), args)
    if violations:
        first = violations[0]
        raise ContractViolationError(first.path, first.reason)
    return _order_fields(contract.params, args)


def render_arguments(contract: FunctionContract, args: dict[str, Any]) -> str:
    """Canonical JSON text for the user message body (declaration key order)."""
    return to_json(order_arguments(contract, args))


# ---------------------------------------------------------------------------
# Declarative loading


def _value_spec_from_dict(data: dict[str, Any]) -> dict[str, Any]:
    try:
        value_type = ValueType(data["type"])
    except KeyError:
        raise ContractError("value spec requires a 'type'") from None
    except ValueError:
        raise ContractError(f"unknown value type {data['type']!r}") from None
    kwargs: dict[str, Any] = {
        "value_type": value_type,
        "description": data.get("description", ""),
        "minimum": data.get("min"),
        "maximum": data.get("max"),
    }
    if "values" in data:
        kwargs["enum_values"] = tuple(str(v) for v in data["values"])
    if "fields" in data:
        kwargs["fields"] = tuple(_param_from_dict(f) for f in data["fields"])
    if "items" in data:
        kwargs["items"] = ValueSpec(**_value_spec_from_dict(data["items"]))
    return kwargs


def _param_from_dict(data: dict[str, Any]) -> ParamSpec:
    kwargs = _value_spec_from_dict(data)
    return ParamSpec(name=data.get("name", ""), required=data.get("required", True), **kwargs)


def contract_from_dict(data: dict[str, Any]) -> FunctionContract:
    """Build a contract from its declarative JSON form."""
    if "name" not in data or "returns" not in data:
        raise ContractError("a contract document requires 'name' and 'returns'")
    return FunctionContract(
        name=data["name"],
        description=data.get("description", ""),
        params=tuple(_param_from_dict(p) for p in data.get("params", [])),
        return_spec=ValueSpec(**_value_spec_from_dict(data["returns"])),
        task_kind=TaskKind(data.get("task_kind", "generic")),
    )


def load_contract(path: str | Path) -> FunctionContract:
    with open(path, encoding="utf-8") as handle:
        return contract_from_dict(json.load(handle))

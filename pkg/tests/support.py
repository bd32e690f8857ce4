"""Shared builders for the test suite: fixed contracts, stub replies, and
seeded random generators for contracts and documents.

The random generators double as the data source for the oracle-equivalence
acceptance checks, so they stay independent of the schema code under test:
documents are produced from the spec tree, never from the emitted schema.
"""

from __future__ import annotations

import random
from typing import Any

from mockfn import (
    DataEntry,
    FunctionContract,
    MockFunction,
    ParamSpec,
    StubBackend,
    TaskKind,
    ValueSpec,
    ValueType,
)
from mockfn.util import LogicalClock, SeededIds, to_json


def valid_reply(results: Any, remarks: str = "reasoning") -> str:
    return to_json({"remarks": remarks, "results": results})


def titanic_contract() -> FunctionContract:
    return FunctionContract(
        name="predictSurvival",
        description="Predict whether a passenger survived the voyage.",
        params=(
            ParamSpec(
                name="passengerClass",
                value_type=ValueType.INTEGER,
                minimum=1,
                maximum=3,
                description="Ticket class, 1 is highest.",
            ),
            ParamSpec(
                name="sex",
                value_type=ValueType.ENUM,
                enum_values=("male", "female"),
                description="Sex of the passenger.",
            ),
            ParamSpec(
                name="age",
                value_type=ValueType.NUMBER,
                minimum=0,
                maximum=120,
                description="Age in years.",
                required=False,
            ),
            ParamSpec(
                name="siblingsAboard",
                value_type=ValueType.INTEGER,
                minimum=0,
                maximum=20,
                description="Siblings and spouses aboard.",
                required=False,
            ),
        ),
        return_spec=ValueSpec(
            value_type=ValueType.INTEGER,
            minimum=0,
            maximum=1,
            description="1 when the passenger survived, 0 otherwise.",
        ),
        task_kind=TaskKind.CLASSIFICATION,
    )


def iris_contract() -> FunctionContract:
    return FunctionContract(
        name="classifyIris",
        description="Classify an iris flower from its measurements.",
        params=(
            ParamSpec(
                name="petalLength",
                value_type=ValueType.NUMBER,
                minimum=0,
                maximum=10,
                description="Petal length in centimeters.",
                required=False,
            ),
            ParamSpec(
                name="sepalLength",
                value_type=ValueType.NUMBER,
                minimum=0,
                maximum=10,
                description="Sepal length in centimeters.",
                required=False,
            ),
        ),
        return_spec=ValueSpec(
            value_type=ValueType.ENUM,
            enum_values=("Setosa", "Versicolor", "Virginica", "Unknown"),
            description="The iris species.",
        ),
        task_kind=TaskKind.CLASSIFICATION,
    )


def mushrooms_contract() -> FunctionContract:
    return FunctionContract(
        name="classifyMushroom",
        description="Decide whether a mushroom is poisonous or edible.",
        params=(
            ParamSpec(
                name="odor",
                value_type=ValueType.STRING,
                description="Odor of the mushroom.",
            ),
            ParamSpec(
                name="capColor",
                value_type=ValueType.STRING,
                description="Color of the cap.",
                required=False,
            ),
        ),
        return_spec=ValueSpec(
            value_type=ValueType.ENUM,
            enum_values=("Poisonous", "Edible"),
            description="Edibility of the mushroom.",
        ),
        task_kind=TaskKind.CLASSIFICATION,
    )


def make_fn(contract: FunctionContract, script, *, seed: int = 7, **kwargs) -> MockFunction:
    backend = script if isinstance(script, StubBackend) else StubBackend(script)
    return MockFunction(
        contract,
        backend,
        ids=SeededIds(seed),
        clock=LogicalClock(),
        **kwargs,
    )


def survival_entries(n: int, survivor_every: int = 2) -> list[DataEntry]:
    entries = []
    for i in range(n):
        entries.append(
            DataEntry(
                arguments={
                    "passengerClass": (i % 3) + 1,
                    "sex": "female" if i % survivor_every == 0 else "male",
                    "age": 20 + i,
                },
                truth=1 if i % survivor_every == 0 else 0,
            )
        )
    return entries


# ---------------------------------------------------------------------------
# Randomized contracts and documents


def random_value_spec(rng: random.Random, depth: int = 0) -> ValueSpec:
    return ValueSpec(**_random_spec_kwargs(rng, depth))


def _random_spec_kwargs(rng: random.Random, depth: int) -> dict[str, Any]:
    choices = [
        ValueType.BOOLEAN,
        ValueType.INTEGER,
        ValueType.NUMBER,
        ValueType.STRING,
        ValueType.ENUM,
    ]
    if depth < 2:
        choices += [ValueType.OBJECT, ValueType.ARRAY]
    value_type = rng.choice(choices)
    kwargs: dict[str, Any] = {
        "value_type": value_type,
        "description": f"described field {rng.randint(0, 99)}",
    }
    if value_type is ValueType.ENUM:
        kwargs["enum_values"] = tuple(f"choice{i}" for i in range(rng.randint(1, 4)))
    if value_type in (ValueType.INTEGER, ValueType.NUMBER) and rng.random() < 0.6:
        low = rng.randint(-50, 50)
        kwargs["minimum"] = low
        kwargs["maximum"] = low + rng.randint(0, 60)
    if value_type is ValueType.OBJECT:
        kwargs["fields"] = tuple(
            _random_param(rng, f"field{i}", depth + 1) for i in range(rng.randint(0, 3))
        )
    if value_type is ValueType.ARRAY:
        kwargs["items"] = random_value_spec(rng, depth + 1)
    return kwargs


def _random_param(rng: random.Random, name: str, depth: int) -> ParamSpec:
    kwargs = _random_spec_kwargs(rng, depth)
    return ParamSpec(name=name, required=rng.random() < 0.7, **kwargs)


def random_contract(rng: random.Random) -> FunctionContract:
    return FunctionContract(
        name=f"randomized{rng.randint(0, 9999)}",
        description="Randomized contract for oracle checks.",
        params=tuple(_random_param(rng, f"param{i}", 0) for i in range(rng.randint(0, 5))),
        return_spec=random_value_spec(rng, 0),
    )


def conforming_value(rng: random.Random, spec: ValueSpec) -> Any:
    vt = spec.value_type
    if vt is ValueType.BOOLEAN:
        return rng.choice([True, False])
    if vt is ValueType.INTEGER:
        low = int(spec.minimum) if spec.minimum is not None else -100
        high = int(spec.maximum) if spec.maximum is not None else 100
        return rng.randint(low, high)
    if vt is ValueType.NUMBER:
        low = spec.minimum if spec.minimum is not None else -100.0
        high = spec.maximum if spec.maximum is not None else 100.0
        return round(rng.uniform(low, high), 4)
    if vt is ValueType.STRING:
        return f"text{rng.randint(0, 999)}"
    if vt is ValueType.ENUM:
        return rng.choice(list(spec.enum_values or ()))
    if vt is ValueType.OBJECT:
        doc = {}
        for field in spec.fields or ():
            if field.required or rng.random() < 0.5:
                doc[field.name] = conforming_value(rng, field)
        return doc
    if vt is ValueType.ARRAY:
        return [conforming_value(rng, spec.items) for _ in range(rng.randint(0, 3))]
    raise AssertionError(f"unhandled value type {vt}")


def conforming_arguments(rng: random.Random, contract: FunctionContract) -> dict[str, Any]:
    doc = {}
    for param in contract.params:
        if param.required or rng.random() < 0.5:
            doc[param.name] = conforming_value(rng, param)
    return doc


_WRONG_TYPE_SAMPLES: list[Any] = [None, "wrong", 3.5, True, {"stray": 1}, ["stray"]]


def mutate_document(rng: random.Random, doc: Any) -> Any:
    """Damage a document: wrong types, missing keys, extra keys, bad values."""
    if isinstance(doc, dict) and doc and rng.random() < 0.6:
        mutated = dict(doc)
        key = rng.choice(sorted(mutated))
        action = rng.random()
        if action < 0.4:
            del mutated[key]
        elif action < 0.8:
            mutated[key] = mutate_document(rng, mutated[key])
        else:
            mutated[f"undeclared{rng.randint(0, 99)}"] = rng.choice(_WRONG_TYPE_SAMPLES)
        return mutated
    if isinstance(doc, dict):
        mutated = dict(doc)
        mutated[f"undeclared{rng.randint(0, 99)}"] = rng.choice(_WRONG_TYPE_SAMPLES)
        return mutated
    if isinstance(doc, list) and doc and rng.random() < 0.5:
        mutated_list = list(doc)
        index = rng.randrange(len(mutated_list))
        mutated_list[index] = mutate_document(rng, mutated_list[index])
        return mutated_list
    if isinstance(doc, bool):
        return rng.choice(["True", 2])
    if isinstance(doc, (int, float)):
        return rng.choice(["verywrong", None, 10_000_000])
    if isinstance(doc, str):
        return rng.choice([12345, False, None])
    return "mutation"

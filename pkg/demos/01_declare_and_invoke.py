"""Declare a function by contract and let a model role-play it.

Everything here runs against the deterministic stub backend, so the demo
works offline. Swap the stub for a RemoteBackend profile to run live.
"""

from mockfn import (
    FunctionContract,
    MockFunction,
    ParamSpec,
    StubBackend,
    TaskKind,
    ValueSpec,
    ValueType,
)
from mockfn.util import dumps_schema

# A contract is the whole definition: name, documentation, typed parameters,
# and a typed return value. There is no function body anywhere.
contract = FunctionContract(
    name="predictSurvival",
    description="Predict whether a passenger survived the voyage.",
    params=(
        ParamSpec(name="passengerClass", value_type=ValueType.INTEGER,
                  minimum=1, maximum=3, description="Ticket class, 1 is highest."),
        ParamSpec(name="sex", value_type=ValueType.ENUM,
                  enum_values=("male", "female"), description="Sex of the passenger."),
        ParamSpec(name="age", value_type=ValueType.NUMBER, minimum=0, maximum=120,
                  description="Age in years.", required=False),
    ),
    return_spec=ValueSpec(value_type=ValueType.INTEGER, minimum=0, maximum=1,
                          description="1 when the passenger survived, 0 otherwise."),
    task_kind=TaskKind.CLASSIFICATION,
)

# The stub backend answers from a script: first with prose (formally wrong),
# then with a schema-conforming reply. The executor validates each reply and
# sends the violation report back until one validates.
backend = StubBackend([
    (None, "The passenger was a young woman in first class, she likely lived."),
    (None, '{"remarks": "First-class women were prioritized.", "results": 1}'),
])

fn = MockFunction(contract, backend)

print("=== parameter schema ===")
print(dumps_schema(fn.param_schema))
print()
print("=== response schema ===")
print(dumps_schema(fn.response_schema))
print()
print("=== system prompt ===")
print(fn.system_prompt.content)
print()

outcome = fn.invoke({"passengerClass": 1, "sex": "female", "age": 24})
print("=== outcome ===")
print(f"results: {outcome.invocation.results}")
print(f"remarks: {outcome.invocation.remarks}")
print(f"attempts: {outcome.attempts} (the prose reply was rejected and regenerated)")
print(f"formally correct on the first try: {outcome.formally_correct_first_try}")
print(f"served by: {outcome.served_by.value}")
print()

# The correction message the executor sent after the prose reply:
correction = backend.transcript[1][0].messages[-1]
print("=== correction message sent for the rejected reply ===")
print(correction.content)

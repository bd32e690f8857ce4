"""Training: iterate a dataset, reflect on wrong answers, correct the context.

The stub plays a model that gets two entries wrong. Each mistake triggers a
reflection exchange on a throwaway sub-branch; the resulting note replaces
the wrong reasoning and the ground truth replaces the wrong answer, so the
context the model sees next time shows the corrected behavior.
"""

from mockfn import (
    DataEntry,
    FunctionContract,
    MockFunction,
    ParamSpec,
    StubBackend,
    TaskKind,
    TrainerConfig,
    ValueSpec,
    ValueType,
    train,
)
from mockfn.util import to_json

contract = FunctionContract(
    name="predictSurvival",
    description="Predict whether a passenger survived the voyage.",
    params=(
        ParamSpec(name="passengerClass", value_type=ValueType.INTEGER,
                  minimum=1, maximum=3, description="Ticket class."),
        ParamSpec(name="sex", value_type=ValueType.ENUM,
                  enum_values=("male", "female"), description="Sex of the passenger."),
    ),
    return_spec=ValueSpec(value_type=ValueType.INTEGER, minimum=0, maximum=1,
                          description="1 when the passenger survived."),
    task_kind=TaskKind.CLASSIFICATION,
)

dataset = [
    DataEntry({"passengerClass": 1, "sex": "female"}, 1),
    DataEntry({"passengerClass": 3, "sex": "male"}, 0),
    DataEntry({"passengerClass": 3, "sex": "female"}, 1),   # the stub gets this wrong
    DataEntry({"passengerClass": 2, "sex": "male"}, 0),
    DataEntry({"passengerClass": 1, "sex": "male"}, 1),     # and this one
]

reply = lambda value, why: to_json({"remarks": why, "results": value})
backend = StubBackend([
    # Reflection requests contain the trainer's analysis instruction, so a
    # substring matcher can route them to canned notes.
    ("Analyze the possible reasons",
     "I previously given the wrong result. Notes: third-class women often "
     "survived; never let class alone override sex.", None),
    (None, reply(1, "First-class woman, very likely survived.")),
    (None, reply(0, "Third-class man, unlikely to survive.")),
    (None, reply(0, "Third class suggests low survival odds.")),     # wrong
    (None, reply(0, "Second-class man, probably did not survive.")),
    (None, reply(0, "Men rarely survived regardless of class.")),    # wrong
])

fn = MockFunction(contract, backend)
report = train(fn, dataset, TrainerConfig(context_length_limit=10))

print(f"entries trained: {len(report.entries)}")
print(f"reflections: {len(report.reflections)}")
print(f"final memory size: {report.final_memory_size}")
print()

for entry in report.entries:
    mark = "REFLECTED" if entry.reflected else "ok"
    print(f"  entry {entry.index}: predicted={entry.predicted} truth={entry.truth} {mark}")
print()

print("=== context after training (note the corrected invocations) ===")
for message in fn.memory.render_context():
    print(f"{message.role.value:9s} {message.content[:100]}")

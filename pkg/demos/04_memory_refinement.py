"""Memory refinement: what happens when the invocation limit is reached.

Two policies ship by default. Replacement overwrites the oldest invocation
the model answered correctly (those carry no reflection note, so they teach
the least); when only reflected entries remain, a correct newcomer is simply
dropped and a wrong one evicts the earliest entry. Compression instead asks
the model to summarize its accumulated notes and swaps the whole history for
that one standing summary.
"""

from mockfn import (
    ChatMessage,
    DataEntry,
    FunctionContract,
    MemoryBranch,
    MockFunction,
    MockInvocation,
    ParamSpec,
    RefinementPolicy,
    Role,
    StubBackend,
    TrainerConfig,
    ValueSpec,
    ValueType,
    refine_replace,
    train,
)
from mockfn.util import new_hex_id, to_json


def invocation(tag, answered, truth):
    wrong = answered != truth
    return MockInvocation(
        id=new_hex_id(),
        arguments={"tag": tag},
        remarks="reflection note" if wrong else "reasoning",
        results=truth if wrong else answered,
        raw_results=answered,
        ground_truth=truth,
        reflected=wrong,
    )


def tags(memory):
    return [inv.arguments["tag"] for inv in memory.invocations]


print("=== replacement policy, step by step ===")
memory = MemoryBranch(ChatMessage(Role.SYSTEM, "prompt"))
memory.append(invocation("early-wrong", 0, 1))
memory.append(invocation("early-right", 1, 1))
memory.append(invocation("late-wrong", 0, 1))
print("history at the limit of 3:", tags(memory))

# The newcomer overwrites the oldest correct invocation, not the reflected ones.
refine_replace(memory, invocation("newcomer-1", 0, 1), limit=3)
print("after a wrong newcomer:    ", tags(memory), "(overwrote 'early-right')")

# All remaining entries are reflected; a correct newcomer adds nothing new.
refine_replace(memory, invocation("newcomer-2", 1, 1), limit=3)
print("after a correct newcomer:  ", tags(memory), "(dropped, all slots reflected)")

# A wrong newcomer is worth keeping: the earliest entry makes way.
refine_replace(memory, invocation("newcomer-3", 0, 1), limit=3)
print("after a wrong newcomer:    ", tags(memory), "(evicted the earliest)")
print()

print("=== compression policy inside a training run ===")
contract = FunctionContract(
    name="judgeParity",
    description="Judge whether a number is even.",
    params=(ParamSpec(name="value", value_type=ValueType.INTEGER, description="The number."),),
    return_spec=ValueSpec(value_type=ValueType.BOOLEAN, description="True when even."),
)
backend = StubBackend([
    ("summarize these notes",
     "Check the last digit: 0, 2, 4, 6, 8 mean even. I once called 7 even; never "
     "classify an odd final digit as even again.", None),
    ("Analyze the possible reasons", "Notes: check the final digit.", None),
    (None, to_json({"remarks": "looks even to me", "results": True}), None),
])
fn = MockFunction(contract, backend)
dataset = [DataEntry({"value": n}, n % 2 == 0) for n in range(6)]
train(fn, dataset, TrainerConfig(context_length_limit=4,
                                 refinement_policy=RefinementPolicy.COMPRESS))

print("invocations kept:", len(fn.memory.invocations))
print("context now carries the standing summary:")
for message in fn.memory.render_context():
    print(f"  {message.role.value:9s} {message.content[:110]}")

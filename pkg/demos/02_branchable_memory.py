"""Invocation memory: editable history, rendered as chat context, with
branch create/commit/drop semantics.
"""

from mockfn import ChatMessage, MemoryBranch, MockInvocation, Role
from mockfn.util import new_hex_id


def invocation(x, result):
    return MockInvocation(
        id=new_hex_id(),
        arguments={"x": x},
        remarks=f"computed from {x}",
        results=result,
    )


def show(label, branch):
    print(f"--- {label} ---")
    for message in branch.render_context():
        print(f"  {message.role.value:9s} {message.content}")
    print()


memory = MemoryBranch(ChatMessage(Role.SYSTEM, "You role-play a function."))
memory.append(invocation(1, "A"))
memory.append(invocation(2, "B"))
show("main branch: one user/assistant pair per invocation", memory)

# Editing an invocation rewrites its rendered messages on the next render.
target = memory.invocations[0]
memory.update_invocation(target.id, new_results="A-corrected", new_remarks="amended note")
show("after update_invocation on the first entry", memory)

# A sub-branch snapshots the history. The two sides evolve independently.
child = memory.create_branch()
child.append(invocation(3, "X"))
child.append(invocation(4, "Y"))
memory.append(invocation(5, "C"))
print("parent results:", [inv.results for inv in memory.invocations])
print("child results: ", [inv.results for inv in child.invocations])
print()

# Committing splices the child's additions in at the creation point, ahead of
# anything the parent appended meanwhile.
child.commit()
print("after commit:  ", [inv.results for inv in memory.invocations])
print()

# A dropped branch leaves no trace.
scratch = memory.create_branch()
scratch.append(invocation(9, "scratch work"))
scratch.drop()
print("after dropping a scratch branch:", [inv.results for inv in memory.invocations])

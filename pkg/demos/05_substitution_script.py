"""Substitution scripts: generated code that replaces live inference.

After the model has learned a behavior, it can be asked to write the rule
down as a script in a restricted dialect. The script is compiled (with
compiler diagnostics fed back on failure), installed, and from then on every
invocation runs locally with zero backend traffic, until a reflection
invalidates it.
"""

from mockfn import (
    FunctionContract,
    MockFunction,
    ParamSpec,
    StubBackend,
    ValueSpec,
    ValueType,
    execute_script,
    generate_script,
)
from mockfn.subscript import compile_script
from mockfn.errors import ScriptCompileError

contract = FunctionContract(
    name="classifyMushroom",
    description="Decide whether a mushroom is poisonous or edible.",
    params=(
        ParamSpec(name="odor", value_type=ValueType.STRING, description="Odor."),
    ),
    return_spec=ValueSpec(value_type=ValueType.ENUM,
                          enum_values=("Poisonous", "Edible"),
                          description="Edibility."),
)

GOOD_SCRIPT = '''\
odor = arguments["odor"]
if odor.lower() == "foul" or odor.lower() == "fishy":
    Results = "Poisonous"
else:
    Results = "Edible"
Remarks = "Based on the odor of the mushroom."
IsReadyToCompile = True
'''

BROKEN_SCRIPT = 'Results = fetch_database("mushrooms")'

print("=== the dialect compiler rejects anything outside the sandbox ===")
try:
    compile_script(BROKEN_SCRIPT)
except ScriptCompileError as error:
    print(f"rejected: {error}")
print()

# The stub first answers the generation request with the broken script, then
# with the good one after receiving the compiler diagnostics.
backend = StubBackend([
    ("write a script", f"```python\n{BROKEN_SCRIPT}\n```"),
    ("failed to compile", f"```python\n{GOOD_SCRIPT}```"),
    (None, '{"remarks": "live reasoning", "results": "Edible"}', None),
])
fn = MockFunction(contract, backend)

script = generate_script(fn, backend, max_attempts=3)
print("=== generation with compile-error feedback ===")
print(f"compiled after {script.generation_attempts} attempts")
print()

calls_before = backend.call_count
answers = {odor: fn.invoke({"odor": odor}).invocation.results
           for odor in ("foul", "fishy", "almond", "none")}
print("=== script-served invocations (zero backend calls) ===")
print(f"answers: {answers}")
print(f"backend calls during those invocations: {backend.call_count - calls_before}")
print()

print("=== direct execution of a compiled script ===")
output = execute_script(script, {"odor": "foul"})
print(output)
print()

# Scripts decline inputs they cannot decide by setting IsReadyToCompile false;
# the call then falls back to live inference and the script stays installed.
DECLINING = '''\
if "odor" in arguments:
    Results = "Edible"
    Remarks = "No dangerous odor provided."
    IsReadyToCompile = True
else:
    Results = "Edible"
    Remarks = "Cannot decide without the odor."
    IsReadyToCompile = False
'''
declining = execute_script(
    compile_script(DECLINING), {}
)
print("=== a script declining undecidable inputs ===")
print(declining)

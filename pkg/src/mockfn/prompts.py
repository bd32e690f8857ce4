"""Versioned catalog of every model-facing wording.

Centralizing the text keeps runs reproducible: a transcript produced under
one catalog version can be replayed byte-for-byte. Reflection instructions
are issued on a throwaway sub-branch as a single user message carrying the
arguments, the wrong results, the wrong reasoning, and the ground truth.
"""

from __future__ import annotations

from .contract import FunctionContract
from .util import dumps_schema

CATALOG_VERSION = "1"

SYSTEM_PROMPT_TEMPLATE = """\
You are role-playing the function "{name}". Behave exactly like this function: \
each user message is one JSON document of arguments; reply with exactly one JSON \
object and nothing else.
{description_block}
The arguments conform to this JSON schema:
{parameter_schema}

Your reply must conform to this JSON schema:
{response_schema}

Write your reasoning in the "remarks" field first, then put the function's \
return value in the "results" field."""

CORRECTION_TEMPLATE = """\
Your previous reply does not conform to the response schema:
{violation_lines}
Reply again with exactly one JSON object that conforms to the response schema."""

REFLECTION_TEMPLATE = """\
You made a mistake in a previous invocation of "{name}".
Arguments: {arguments}
Your results: {wrong_results}
Your remarks: {wrong_remarks}
The correct results: {ground_truth}
Analyze the possible reasons for making this mistake, then summarize notes that \
will help you avoid similar mistakes in future invocations."""

COMPRESSION_INSTRUCTION = (
    "In previous invocations you have made some mistakes and remarks to not make "
    "them again. Now summarize these notes to help your future self to avoid these "
    "mistakes and maximize your accuracy. You can include specific examples and "
    "reasoning in the summary."
)

COMPRESSION_REPLACEMENT_TEMPLATE = (
    "Here are notes summarized by yourself to help you avoid mistakes and maximize "
    "accuracy:\n{compressed_notes}"
)

SCRIPT_GENERATION_TEMPLATE = """\
You have been role-playing the function "{name}". Based on the behavior learned \
from the invocation history above, write a script that reproduces this function \
without you.
{description_block}
Parameter schema:
{parameter_schema}

Response schema (the script computes the "results" value):
{response_schema}

Script dialect rules:
- Python-style statements only: assignments, if/elif/else, while, for, pass.
- Read the input from the dict named `arguments`; test optional fields with \
`"key" in arguments`.
- Allowed builtins: abs, min, max, len, int, float, str, bool, round, sum, range.
- Allowed string methods: lower, upper, strip, startswith, endswith, replace, \
split, find.
- No imports, no function definitions, no file or network access.
- Before the script ends, assign all three variables:
  - `Results`: the return value, shaped like the response schema's "results".
  - `Remarks`: a short string explaining the rule applied.
  - `IsReadyToCompile`: True, or False when the arguments are insufficient to decide.

Reply with a single fenced code block containing only the script."""

SCRIPT_RETRY_TEMPLATE = """\
The script failed to compile:
{diagnostics}
Revise it and reply with a single fenced code block containing only the corrected \
script."""


def _description_block(description: str) -> str:
    if not description:
        return ""
    return f"\nFunction documentation: {description}\n"


def system_prompt_text(
    contract: FunctionContract, parameter_schema: dict, response_schema: dict
) -> str:
    return SYSTEM_PROMPT_TEMPLATE.format(
        name=contract.name,
        description_block=_description_block(contract.description),
        parameter_schema=dumps_schema(parameter_schema),
        response_schema=dumps_schema(response_schema),
    )


def correction_text(violations) -> str:
    lines = "\n".join(f"- at '{v.path or '(root)'}': {v.reason}" for v in violations)
    return CORRECTION_TEMPLATE.format(violation_lines=lines)


def reflection_text(
    name: str, arguments: str, wrong_results: str, wrong_remarks: str, ground_truth: str
) -> str:
    return REFLECTION_TEMPLATE.format(
        name=name,
        arguments=arguments,
        wrong_results=wrong_results,
        wrong_remarks=wrong_remarks,
        ground_truth=ground_truth,
    )


def compression_replacement(compressed_notes: str) -> str:
    return COMPRESSION_REPLACEMENT_TEMPLATE.format(compressed_notes=compressed_notes)


def script_generation_text(
    contract: FunctionContract, parameter_schema: dict, response_schema: dict
) -> str:
    return SCRIPT_GENERATION_TEMPLATE.format(
        name=contract.name,
        description_block=_description_block(contract.description),
        parameter_schema=dumps_schema(parameter_schema),
        response_schema=dumps_schema(response_schema),
    )


def script_retry_text(diagnostics: str) -> str:
    return SCRIPT_RETRY_TEMPLATE.format(diagnostics=diagnostics)

from __future__ import annotations

import pytest

from mockfn import (
    ServedBy,
    StubBackend,
    UsageCategory,
    build_parameter_schema,
    build_response_schema,
    build_system_prompt,
    validate_response,
)
from mockfn.backend import BackendProfile
from mockfn.errors import ContractError, ContractViolationError, FormalFailureError
from mockfn.executor import parse_reply
from mockfn.oplog import OperationLog
from mockfn.util import LogicalClock, SeededIds, dumps_schema

from support import make_fn, titanic_contract, valid_reply

ARGS = {"passengerClass": 1, "sex": "female", "age": 30}


# ---------------------------------------------------------------------------
# System prompt


def test_system_prompt_contains_both_schemas_verbatim():
    contract = titanic_contract()
    param_schema = build_parameter_schema(contract)
    response_schema = build_response_schema(contract)
    prompt = build_system_prompt(contract, param_schema, response_schema)
    assert dumps_schema(param_schema) in prompt.content
    assert dumps_schema(response_schema) in prompt.content
    assert contract.name in prompt.content
    assert '"remarks"' in prompt.content and '"results"' in prompt.content


def test_system_prompt_without_description_still_names_function():
    contract = titanic_contract()
    bare = type(contract)(
        name=contract.name,
        description="",
        params=contract.params,
        return_spec=contract.return_spec,
        task_kind=contract.task_kind,
    )
    prompt = build_system_prompt(
        bare, build_parameter_schema(bare), build_response_schema(bare)
    )
    assert bare.name in prompt.content
    assert dumps_schema(build_response_schema(bare)) in prompt.content


def test_system_prompt_is_deterministic():
    contract = titanic_contract()
    first = build_system_prompt(
        contract, build_parameter_schema(contract), build_response_schema(contract)
    )
    second = build_system_prompt(
        contract, build_parameter_schema(contract), build_response_schema(contract)
    )
    assert first.content == second.content


# ---------------------------------------------------------------------------
# Reply parsing


def test_parse_reply_accepts_bare_json():
    parsed, violation = parse_reply('{"remarks": "r", "results": 1}')
    assert violation is None
    assert parsed == {"remarks": "r", "results": 1}


def test_parse_reply_accepts_fenced_json():
    text = 'Sure, here you go:\n```json\n{"remarks": "r", "results": 0}\n```\nDone.'
    parsed, violation = parse_reply(text)
    assert violation is None
    assert parsed == {"remarks": "r", "results": 0}


def test_parse_reply_rejects_prose():
    parsed, violation = parse_reply("the passenger probably died")
    assert parsed is None
    assert violation.reason == "not valid JSON"


# ---------------------------------------------------------------------------
# invoke


def test_invoke_success_first_try():
    fn = make_fn(titanic_contract(), [(None, valid_reply(1))])
    outcome = fn.invoke(ARGS)
    assert outcome.attempts == 1
    assert outcome.formally_correct_first_try
    assert outcome.served_by is ServedBy.LLM
    assert outcome.invocation.results == 1
    assert len(fn.memory.invocations) == 1


def test_invoke_appends_exactly_one_message_pair():
    fn = make_fn(titanic_contract(), [(None, valid_reply(0))])
    before = len(fn.memory.render_context())
    fn.invoke(ARGS)
    assert len(fn.memory.render_context()) == before + 2


def test_invoke_retries_after_invalid_reply():
    fn = make_fn(
        titanic_contract(),
        [(None, "no JSON here"), (None, valid_reply(1))],
    )
    outcome = fn.invoke(ARGS)
    assert outcome.attempts == 2
    assert not outcome.formally_correct_first_try
    assert outcome.invocation.results == 1


def test_correction_message_carries_violation_path():
    fn = make_fn(
        titanic_contract(),
        [(None, '{"results": 1}'), (None, valid_reply(1))],
    )
    fn.invoke(ARGS)
    second_request = fn.backend.transcript[1][0]
    correction = second_request.messages[-1].content
    assert "/remarks" in correction
    assert "missing required property" in correction


def test_failed_exchange_does_not_pollute_memory():
    fn = make_fn(
        titanic_contract(),
        [(None, "bad"), (None, valid_reply(0))],
    )
    fn.invoke(ARGS)
    # One registered invocation only: the correction exchange stays out.
    assert len(fn.memory.invocations) == 1
    assert len(fn.memory.render_context()) == 3


def test_invoke_fails_cleanly_when_attempts_exhausted():
    fn = make_fn(titanic_contract(), [(None, "junk", None)])
    with pytest.raises(FormalFailureError) as excinfo:
        fn.invoke(ARGS)
    assert excinfo.value.attempts == 3
    assert len(excinfo.value.violations) == 3
    assert fn.memory.invocations == []
    assert len(fn.memory.render_context()) == 1


def test_invoke_validates_arguments_before_any_call():
    fn = make_fn(titanic_contract(), [(None, valid_reply(1))])
    with pytest.raises(ContractViolationError):
        fn.invoke({"sex": "female"})
    assert fn.backend.call_count == 0


def test_parsed_results_revalidate_against_response_schema():
    fn = make_fn(titanic_contract(), [(None, valid_reply(1))])
    outcome = fn.invoke(ARGS)
    reply_doc = {"remarks": outcome.invocation.remarks, "results": outcome.invocation.results}
    assert validate_response(fn.response_schema, reply_doc).ok


def test_out_of_range_results_are_rejected_and_retried():
    fn = make_fn(
        titanic_contract(),
        [(None, valid_reply(7)), (None, valid_reply(1))],
    )
    outcome = fn.invoke(ARGS)
    assert outcome.attempts == 2
    assert outcome.invocation.results == 1


def test_fenced_reply_is_accepted_but_validated_strictly():
    fenced_bad = "```json\n{\"remarks\": \"r\", \"results\": \"one\"}\n```"
    fn = make_fn(titanic_contract(), [(None, fenced_bad), (None, valid_reply(1))])
    outcome = fn.invoke(ARGS)
    assert outcome.attempts == 2


def test_structured_output_profile_transmits_schema_to_backend():
    stub = StubBackend(
        [(None, valid_reply(1))],
        profile=BackendProfile(model_id="stub", supports_structured_output=True),
    )
    fn = make_fn(titanic_contract(), stub)
    fn.invoke(ARGS)
    request = stub.transcript[0][0]
    assert request.response_schema == fn.response_schema


def test_plain_profile_does_not_transmit_schema():
    fn = make_fn(titanic_contract(), [(None, valid_reply(1))])
    fn.invoke(ARGS)
    assert fn.backend.transcript[0][0].response_schema is None


def test_invocation_usage_is_recorded_per_attempt():
    fn = make_fn(titanic_contract(), [(None, "bad"), (None, valid_reply(1))])
    fn.invoke(ARGS)
    usages = fn.usage_ledger.usages
    assert len(usages) == 2
    assert all(u.category is UsageCategory.INVOCATION for u in usages)


def test_every_backend_call_is_logged():
    log = OperationLog(ids=SeededIds(5), clock=LogicalClock())
    fn = make_fn(titanic_contract(), [(None, "bad"), (None, valid_reply(1))], op_log=log)
    fn.invoke(ARGS, ground_truth=1)
    assert len(log.records) == 2
    assert log.records[0].correct is False
    assert log.records[1].correct is True
    assert log.records[1].results == 1
    assert log.records[1].ground_truth == 1
    assert fn.backend.call_count == 2


def test_max_regeneration_attempts_must_be_positive():
    with pytest.raises(ContractError):
        make_fn(titanic_contract(), [(None, "x")], max_regeneration_attempts=0)


def test_fork_shares_backend_but_not_memory():
    fn = make_fn(titanic_contract(), [(None, valid_reply(1)), (None, valid_reply(0))])
    branch = fn.memory.create_branch()
    view = fn.fork(branch)
    view.invoke(ARGS)
    assert len(branch.invocations) == 1
    assert fn.memory.invocations == []
    assert view.backend is fn.backend

from __future__ import annotations

import pytest

from mockfn import (
    ChatMessage,
    MemoryBranch,
    MockInvocation,
    RefinementPolicy,
    Role,
    TaskKind,
    TrainerConfig,
    UsageCategory,
    apply_reflection,
    refine_compress,
    refine_replace,
    reflect,
    should_reflect,
    train,
)
from mockfn.errors import ContractError, TypeMismatchError
from mockfn.util import SeededIds, to_json

from support import make_fn, survival_entries, titanic_contract, valid_reply

IDS = SeededIds(77)

REFLECTION_MATCH = "Analyze the possible reasons"
PAPER_STYLE_NOTE = "I previously given the wrong result Died, but the correct answer is Lived"


def invocation(result, truth, reflected=False):
    remarks = "note text" if reflected else "reasoning"
    return MockInvocation(
        id=IDS(),
        arguments={"x": 1},
        remarks=remarks,
        results=truth if reflected else result,
        raw_results=result,
        ground_truth=truth,
        reflected=reflected,
    )


def branch_with(invocations) -> MemoryBranch:
    branch = MemoryBranch(ChatMessage(Role.SYSTEM, "prompt"), ids=SeededIds(5))
    for entry in invocations:
        branch.append(entry)
    return branch


# ---------------------------------------------------------------------------
# should_reflect


def test_should_reflect_exact_match_classification():
    config = TrainerConfig(context_length_limit=5)
    assert should_reflect(config, "Died", "Died", TaskKind.CLASSIFICATION) is False
    assert should_reflect(config, "Died", "Lived", TaskKind.CLASSIFICATION) is True


def test_should_reflect_zero_threshold_regression():
    config = TrainerConfig(context_length_limit=5, error_threshold=0.0)
    assert should_reflect(config, 4.2, 4.2) is False


def test_should_reflect_threshold_exceeded():
    config = TrainerConfig(context_length_limit=5, error_threshold=5.0)
    assert should_reflect(config, 10.0, 4.0) is True
    assert should_reflect(config, 8.0, 4.0) is False


def test_should_reflect_incomparable_kinds():
    config = TrainerConfig(context_length_limit=5)
    with pytest.raises(TypeMismatchError):
        should_reflect(config, "Died", 4.0)
    with pytest.raises(TypeMismatchError):
        should_reflect(config, "4", 4.0, TaskKind.REGRESSION)


def test_should_reflect_classification_compares_rendered_values():
    config = TrainerConfig(context_length_limit=5)
    assert should_reflect(config, 0, "0", TaskKind.CLASSIFICATION) is True
    assert should_reflect(config, True, True, TaskKind.CLASSIFICATION) is False


def test_trainer_config_invariants():
    with pytest.raises(ContractError):
        TrainerConfig(context_length_limit=-1)
    with pytest.raises(ContractError):
        TrainerConfig(context_length_limit=1, error_threshold=-0.5)
    with pytest.raises(ContractError):
        TrainerConfig(context_length_limit=1, refinement_policy=RefinementPolicy.CUSTOM)


# ---------------------------------------------------------------------------
# reflect / apply_reflection


def test_reflect_returns_canned_note_and_drops_sub_branch():
    canned = "The class weighed too much.\nNotes for future reference:\ntrust sex first."
    fn = make_fn(
        titanic_contract(),
        [(None, valid_reply(0)), (REFLECTION_MATCH, canned)],
    )
    outcome = fn.invoke({"passengerClass": 1, "sex": "female"}, ground_truth=1)
    note = reflect(fn, outcome.invocation, 1, fn.backend)
    assert note.notes == canned
    assert note.analysis == "The class weighed too much."
    assert note.source_invocation_id == outcome.invocation.id
    # Only the registered invocation remains; the reflective dialogue is gone.
    assert len(fn.memory.render_context()) == 3


def test_reflect_prompt_contains_wrong_results_reasoning_and_truth():
    fn = make_fn(
        titanic_contract(),
        [(None, valid_reply(0, remarks="the class doomed him")), (REFLECTION_MATCH, "note")],
    )
    outcome = fn.invoke({"passengerClass": 3, "sex": "male"}, ground_truth=1)
    reflect(fn, outcome.invocation, 1, fn.backend)
    instruction = fn.backend.transcript[-1][0].messages[-1].content
    assert "0" in instruction
    assert "the class doomed him" in instruction
    assert to_json(1) in instruction


def test_reflect_accepts_paper_style_note_verbatim():
    fn = make_fn(
        titanic_contract(),
        [(None, valid_reply(0)), (REFLECTION_MATCH, PAPER_STYLE_NOTE)],
    )
    outcome = fn.invoke({"passengerClass": 2, "sex": "female"}, ground_truth=1)
    note = reflect(fn, outcome.invocation, 1, fn.backend)
    assert note.notes == PAPER_STYLE_NOTE


def test_reflect_usage_category_is_reflection():
    fn = make_fn(
        titanic_contract(),
        [(None, valid_reply(0)), (REFLECTION_MATCH, "note")],
    )
    outcome = fn.invoke({"passengerClass": 2, "sex": "female"}, ground_truth=1)
    reflect(fn, outcome.invocation, 1, fn.backend)
    assert fn.usage_ledger.usages[-1].category is UsageCategory.REFLECTION


def test_apply_reflection_updates_rendered_message():
    fn = make_fn(
        titanic_contract(),
        [(None, valid_reply(0)), (REFLECTION_MATCH, PAPER_STYLE_NOTE)],
    )
    outcome = fn.invoke({"passengerClass": 2, "sex": "female"}, ground_truth=1)
    note = reflect(fn, outcome.invocation, 1, fn.backend)
    apply_reflection(fn, outcome.invocation.id, 1, note)
    rendered = fn.memory.render_context()[-1].content
    assert rendered == to_json({"remarks": PAPER_STYLE_NOTE, "results": 1})
    assert outcome.invocation.reflected is True
    assert outcome.invocation.raw_results == 0


# ---------------------------------------------------------------------------
# refine_replace (hand-executed examples)


def test_refine_replace_overwrites_first_correct_invocation():
    history = [
        invocation("Died", "Lived", reflected=True),
        invocation("Lived", "Died", reflected=True),
        invocation("Died", "Died"),
        invocation("Lived", "Euthanized", reflected=True),
    ]
    memory = branch_with(history)
    newcomer = invocation("Euthanized", "Lived", reflected=True)
    refine_replace(memory, newcomer, limit=4)
    assert len(memory.invocations) == 4
    assert memory.invocations[2] is newcomer
    assert memory.invocations[0] is history[0]
    assert memory.invocations[3] is history[3]


def test_refine_replace_drops_correct_newcomer_when_all_reflected():
    history = [invocation("Died", "Lived", reflected=True) for _ in range(3)]
    memory = branch_with(history)
    newcomer = invocation("Died", "Died")
    refine_replace(memory, newcomer, limit=3)
    assert memory.invocations == history


def test_refine_replace_evicts_earliest_for_incorrect_newcomer():
    history = [invocation("Died", "Lived", reflected=True) for _ in range(3)]
    memory = branch_with(history)
    newcomer = invocation("Lived", "Died", reflected=True)
    refine_replace(memory, newcomer, limit=3)
    assert len(memory.invocations) == 3
    assert memory.invocations[0] is history[1]
    assert memory.invocations[-1] is newcomer


def test_refine_replace_appends_below_limit():
    memory = branch_with([invocation("Died", "Died")])
    newcomer = invocation("Lived", "Lived")
    refine_replace(memory, newcomer, limit=4)
    assert len(memory.invocations) == 2
    assert memory.invocations[-1] is newcomer


# ---------------------------------------------------------------------------
# refine_compress


def test_refine_compress_replaces_history_with_summary():
    fn = make_fn(
        titanic_contract(),
        [
            (None, valid_reply(0), 2),
            ("summarize these notes", "always weigh sex and class first"),
        ],
    )
    fn.invoke({"passengerClass": 1, "sex": "female"})
    fn.invoke({"passengerClass": 2, "sex": "male"})
    refine_compress(fn, fn.backend)
    assert fn.memory.invocations == []
    context = fn.memory.render_context()
    assert len(context) == 2  # system prompt plus the standing summary
    assert "Here are notes summarized by yourself" in context[1].content
    assert "always weigh sex and class first" in context[1].content
    assert fn.usage_ledger.usages[-1].category is UsageCategory.COMPRESSION


def test_refine_compress_on_empty_memory_is_noop():
    fn = make_fn(titanic_contract(), [(None, "unused")])
    refine_compress(fn, fn.backend)
    assert fn.backend.call_count == 0
    assert fn.memory.compressed_summary is None


# ---------------------------------------------------------------------------
# train


def test_train_all_correct_yields_no_reflections():
    replies = [(None, valid_reply(entry.truth)) for entry in survival_entries(5)]
    fn = make_fn(titanic_contract(), replies)
    report = train(fn, survival_entries(5), TrainerConfig(context_length_limit=20))
    assert len(report.reflections) == 0
    assert report.final_memory_size == 5
    assert all(not entry.reflected for entry in report.entries)


def test_train_limit_zero_skips_training():
    fn = make_fn(titanic_contract(), [(None, "unused")])
    report = train(fn, survival_entries(5), TrainerConfig(context_length_limit=0))
    assert fn.backend.call_count == 0
    assert report.entries == ()
    assert report.final_memory_size == 0


def test_train_reflects_on_wrong_entry():
    entries = survival_entries(3)
    replies = []
    for index, entry in enumerate(entries):
        wrong = 1 - entry.truth if index == 1 else entry.truth
        replies.append((None, valid_reply(wrong)))
    replies.insert(0, (REFLECTION_MATCH, PAPER_STYLE_NOTE))
    fn = make_fn(titanic_contract(), replies)
    report = train(fn, entries, TrainerConfig(context_length_limit=20))
    assert len(report.reflections) == 1
    assert report.entries[1].reflected is True
    reflected = [inv for inv in fn.memory.invocations if inv.reflected]
    assert len(reflected) == 1
    assert reflected[0].remarks == PAPER_STYLE_NOTE
    assert reflected[0].results == entries[1].truth


def test_train_respects_context_limit_with_replace_policy():
    entries = survival_entries(8)
    replies = [(None, valid_reply(1 - entry.truth)) for entry in entries]
    replies.insert(0, (REFLECTION_MATCH, "corrective note", None))
    fn = make_fn(titanic_contract(), replies)
    sizes = []
    train(
        fn,
        entries,
        TrainerConfig(context_length_limit=3),
        on_step=lambda f, _: sizes.append(len(f.memory.invocations)),
    )
    assert all(size <= 3 for size in sizes)
    assert len(fn.memory.invocations) == 3


def test_train_compress_policy_compresses_at_limit():
    entries = survival_entries(4)
    replies = [(None, valid_reply(entry.truth)) for entry in entries]
    replies.insert(0, ("summarize these notes", "one standing note", None))
    fn = make_fn(titanic_contract(), replies)
    report = train(
        fn,
        entries,
        TrainerConfig(context_length_limit=2, refinement_policy=RefinementPolicy.COMPRESS),
    )
    assert report.final_memory_size < 2
    assert fn.memory.compressed_summary is not None
    assert "one standing note" in fn.memory.compressed_summary


def test_train_continues_after_reflection_failure():
    entries = survival_entries(2)
    # The reflector has no matching reply for the second entry's reflection,
    # which surfaces as a backend error; training keeps going.
    replies = [
        (REFLECTION_MATCH, "note", 1),
        (None, valid_reply(1 - entries[0].truth)),
        (None, valid_reply(1 - entries[1].truth)),
    ]
    fn = make_fn(titanic_contract(), replies)
    report = train(fn, entries, TrainerConfig(context_length_limit=5))
    assert len(report.entries) == 2
    assert report.entries[0].reflected is True
    assert report.entries[1].reflected is False
    assert "reflection failed" in report.entries[1].error


def test_train_non_reflected_correct_count_never_increases_at_limit():
    entries = survival_entries(10)
    replies = [(None, valid_reply(1 - e.truth if i % 2 else e.truth)) for i, e in enumerate(entries)]
    replies.insert(0, (REFLECTION_MATCH, "note", None))
    fn = make_fn(titanic_contract(), replies)
    observed = []

    def observe(f, _):
        unreflected = sum(1 for inv in f.memory.invocations if not inv.reflected)
        observed.append((len(f.memory.invocations), unreflected))

    train(fn, entries, TrainerConfig(context_length_limit=4), on_step=observe)
    at_limit = [count for size, count in observed if size >= 4]
    # Once the limit is reached the count of unreflected invocations cannot grow.
    for earlier, later in zip(at_limit, at_limit[1:]):
        assert later <= earlier


def test_train_reports_are_serializable():
    entries = survival_entries(2)
    replies = [(None, valid_reply(entry.truth)) for entry in entries]
    fn = make_fn(titanic_contract(), replies)
    report = train(fn, entries, TrainerConfig(context_length_limit=5))
    data = report.to_dict()
    assert data["final_memory_size"] == 2
    assert len(data["entries"]) == 2


def test_train_custom_refiner_is_invoked_per_entry():
    entries = survival_entries(3)
    replies = [(None, valid_reply(entry.truth)) for entry in entries]
    fn = make_fn(titanic_contract(), replies)
    seen = []

    def keep_two(function, config):
        seen.append(len(function.memory.invocations))
        while len(function.memory.invocations) > 2:
            function.memory.invocations.pop(0)

    report = train(
        fn,
        entries,
        TrainerConfig(
            context_length_limit=10,
            refinement_policy=RefinementPolicy.CUSTOM,
            custom_refiner=keep_two,
        ),
    )
    assert len(seen) == 3
    assert report.final_memory_size == 2

"""Run orchestration: dataset ingestion, train/eval stages, metrics, RAG
injection, operation logging and consumption reporting.

A run is described by one JSON configuration document naming the contract,
the CSV dataset and its column mapping, the backend profiles, the trainer
settings and the output paths. Stub-backed runs use seeded ids and a logical
clock, so their artifacts are byte-identical across repetitions and a
recorded log can be replayed into the same metrics report.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import random
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from .backend import (
    BackendProfile,
    CostBreakdown,
    RemoteBackend,
    StubBackend,
    TokenUsage,
    UsageCategory,
    cost_report,
)
from .contract import FunctionContract, TaskKind, ValueType, contract_from_dict
from .errors import (
    BackendError,
    ConfigurationError,
    ContractError,
    ContractViolationError,
    DatasetError,
    FormalFailureError,
    ScriptGenerationError,
)
from .executor import InvocationOutcome, MockFunction, ServedBy
from .memory import ChatMessage, MemoryBranch, Role
from .oplog import OperationLog, read_jsonl
from .subscript import generate_script
from .trainer import (
    DataEntry,
    RefinementPolicy,
    TrainerConfig,
    TrainingReport,
    train,
)
from .util import LogicalClock, SeededIds, new_hex_id, to_json, utcnow

logger = logging.getLogger("mockfn.harness")


# ---------------------------------------------------------------------------
# Datasets


@dataclass(frozen=True)
class DatasetSpec:
    """CSV source plus the column-to-parameter mapping and split settings."""

    path: Path
    features: dict[str, str]
    label_column: str
    train_fraction: float = 0.8
    seed: int = 42
    task_kind: TaskKind = TaskKind.GENERIC

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("train_fraction must be inside (0, 1)")
        if self.label_column in self.features:
            raise ConfigurationError("the label column must be disjoint from the features")


def _parse_cell(cell: str, value_type: ValueType, column: str):
    if value_type in (ValueType.NUMBER, ValueType.INTEGER):
        try:
            number = float(cell)
        except ValueError:
            raise DatasetError(f"column {column!r}: cannot parse {cell!r} as a number") from None
        if value_type is ValueType.INTEGER:
            if not number.is_integer():
                raise DatasetError(f"column {column!r}: {cell!r} is not an integer")
            return int(number)
        return number
    if value_type is ValueType.BOOLEAN:
        lowered = cell.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise DatasetError(f"column {column!r}: cannot parse {cell!r} as a boolean")
    return cell


def load_dataset(
    spec: DatasetSpec, contract: FunctionContract
) -> tuple[list[DataEntry], list[DataEntry]]:
    """Read the CSV, map columns to typed arguments, split deterministically.

    Cells left blank are omitted from the argument document rather than sent
    as null; downstream the missing fields are tolerated.
    """
    try:
        with open(spec.path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            header = reader.fieldnames or []
            rows = list(reader)
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {spec.path}: {exc}") from exc

    missing = [c for c in [*spec.features, spec.label_column] if c not in header]
    if missing:
        raise DatasetError(f"columns not in the CSV header: {', '.join(missing)}")
    params = {p.name: p for p in contract.params}
    for column, param_name in spec.features.items():
        if param_name not in params:
            raise DatasetError(f"column {column!r} maps to unknown parameter {param_name!r}")

    entries: list[DataEntry] = []
    for row in rows:
        arguments: dict[str, Any] = {}
        for column, param_name in spec.features.items():
            cell = row.get(column)
            if cell is None or cell == "":
                continue
            arguments[param_name] = _parse_cell(cell, params[param_name].value_type, column)
        label_cell = row.get(spec.label_column)
        if label_cell is None or label_cell == "":
            raise DatasetError(f"row without a value in label column {spec.label_column!r}")
        truth = _parse_cell(label_cell, contract.return_spec.value_type, spec.label_column)
        entries.append(DataEntry(arguments=arguments, truth=truth))

    random.Random(spec.seed).shuffle(entries)
    cut = int(len(entries) * spec.train_fraction)
    return entries[:cut], entries[cut:]


# ---------------------------------------------------------------------------
# Metrics


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float | None
    rmse: float | None
    medae: float | None
    formal_correctness_ratio: float | None
    n_evaluated: int
    n_errors: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "rmse": self.rmse,
            "medae": self.medae,
            "formal_correctness_ratio": self.formal_correctness_ratio,
            "n_evaluated": self.n_evaluated,
            "n_errors": self.n_errors,
        }


def _is_numeric(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def compute_metrics(
    pairs: Sequence[tuple[Any, Any]],
    outcomes: Sequence[InvocationOutcome],
    n_errors: int = 0,
) -> MetricsReport:
    """Accuracy, RMSE, MedAE and the formal-correctness ratio.

    Classification matches compare canonical JSON renderings. Error metrics
    use only pairs where both sides are numeric; the ratio counts first-try
    schema-valid replies over all model-served invocations.
    """
    n = len(pairs)
    accuracy = None
    rmse = None
    medae = None
    if n:
        matches = sum(1 for predicted, truth in pairs if to_json(predicted) == to_json(truth))
        accuracy = matches / n
        deviations = [
            abs(predicted - truth)
            for predicted, truth in pairs
            if _is_numeric(predicted) and _is_numeric(truth)
        ]
        if deviations:
            rmse = math.sqrt(sum(d * d for d in deviations) / len(deviations))
            medae = statistics.median(deviations)
    llm_outcomes = [o for o in outcomes if o.served_by is ServedBy.LLM]
    ratio = None
    if llm_outcomes:
        ratio = sum(1 for o in llm_outcomes if o.formally_correct_first_try) / len(llm_outcomes)
    return MetricsReport(
        accuracy=accuracy,
        rmse=rmse,
        medae=medae,
        formal_correctness_ratio=ratio,
        n_evaluated=n + n_errors,
        n_errors=n_errors,
    )


# ---------------------------------------------------------------------------
# RAG injection


class RagLevel(int, Enum):
    STRONG_HINTS = 1
    NAMED_RECORDS = 2
    BACKGROUND = 3


@dataclass(frozen=True)
class RagMaterial:
    """External documents injected right after the system prompt.

    Tables are expected pre-rendered as Markdown. The material id defaults to
    a content hash so repeat injection of the same material is a no-op.
    """

    level: RagLevel
    documents: tuple[str, ...]
    material_id: str = ""

    def __post_init__(self):
        if not self.documents or any(not doc.strip() for doc in self.documents):
            raise ContractError("RAG material requires non-empty documents")
        if not self.material_id:
            digest = hashlib.sha256("\n\n".join(self.documents).encode("utf-8")).hexdigest()
            object.__setattr__(self, "material_id", digest[:24])


def inject_rag(fn: MockFunction, material: RagMaterial) -> None:
    """Append the documents as a system-adjacent block before any invocation."""
    memory = fn.memory
    if material.material_id in memory.rag_ids:
        return
    for document in material.documents:
        memory.rag_messages.append(ChatMessage(Role.SYSTEM, document))
    memory.rag_ids.add(material.material_id)


def load_rag_material(path: str | Path) -> RagMaterial:
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    return RagMaterial(
        level=RagLevel(data.get("level", 1)),
        documents=tuple(data.get("documents", [])),
        material_id=data.get("material_id", ""),
    )


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "openai"
    profile: BackendProfile = field(default_factory=BackendProfile)
    replies: tuple | None = None

    def build(self):
        if self.kind == "stub":
            if not self.replies:
                raise ConfigurationError("a stub backend requires scripted replies")
            return StubBackend(list(self.replies), profile=self.profile)
        if self.kind == "openai":
            if not self.profile.base_url:
                raise ConfigurationError("an openai backend requires a base_url")
            return RemoteBackend(self.profile)
        raise ConfigurationError(f"unknown backend kind {self.kind!r}")


@dataclass(frozen=True)
class RunConfig:
    contract: FunctionContract
    dataset: DatasetSpec
    backend: BackendConfig
    reflector: BackendConfig | None = None
    generator: BackendConfig | None = None
    context_length_limit: int = 20
    error_threshold: float = 0.0
    refinement_policy: RefinementPolicy = RefinementPolicy.REPLACE
    script_enabled: bool = False
    script_max_attempts: int = 3
    max_regeneration_attempts: int = 3
    rag_path: Path | None = None
    eval_max_entries: int | None = None
    eval_parallelism: int = 1
    output_dir: Path = Path("artifacts")
    deterministic: bool | None = None
    seed: int = 0


def _profile_from_dict(data: dict[str, Any]) -> BackendProfile:
    return BackendProfile(
        model_id=data.get("model_id", ""),
        base_url=data.get("base_url", ""),
        api_key_env=data.get("api_key_env", ""),
        supports_structured_output=data.get("supports_structured_output", False),
        input_price_per_million=data.get("input_price_per_million", 0.0),
        output_price_per_million=data.get("output_price_per_million", 0.0),
        temperature=data.get("temperature", 0.0),
    )


def _replies_from(data: dict[str, Any], base_dir: Path) -> tuple | None:
    raw = data.get("replies")
    if raw is None and "replies_path" in data:
        with open(base_dir / data["replies_path"], encoding="utf-8") as handle:
            raw = json.load(handle)
    if raw is None:
        return None
    entries = []
    for item in raw:
        if isinstance(item, str):
            entries.append((None, item))
        else:
            entries.append((item.get("match"), item["reply"], item.get("times", 1)))
    return tuple(entries)


def _backend_from_dict(data: dict[str, Any], base_dir: Path) -> BackendConfig:
    return BackendConfig(
        kind=data.get("kind", "openai"),
        profile=_profile_from_dict(data),
        replies=_replies_from(data, base_dir),
    )


def parse_config(data: dict[str, Any], base_dir: Path | str = ".") -> RunConfig:
    base_dir = Path(base_dir)
    try:
        if "contract_path" in data:
            with open(base_dir / data["contract_path"], encoding="utf-8") as handle:
                contract = contract_from_dict(json.load(handle))
        else:
            contract = contract_from_dict(data["contract"])
        dataset_data = data["dataset"]
        dataset = DatasetSpec(
            path=base_dir / dataset_data["path"],
            features=dict(dataset_data["features"]),
            label_column=dataset_data["label"],
            train_fraction=dataset_data.get("train_fraction", 0.8),
            seed=dataset_data.get("seed", 42),
            task_kind=TaskKind(dataset_data.get("task_kind", contract.task_kind.value)),
        )
        backend = _backend_from_dict(data["backend"], base_dir)
        reflector = (
            _backend_from_dict(data["reflector"], base_dir) if "reflector" in data else None
        )
        generator = (
            _backend_from_dict(data["generator"], base_dir) if "generator" in data else None
        )
        trainer_data = data.get("trainer", {})
        script_data = data.get("script", {})
        eval_data = data.get("eval", {})
        return RunConfig(
            contract=contract,
            dataset=dataset,
            backend=backend,
            reflector=reflector,
            generator=generator,
            context_length_limit=trainer_data.get("context_length_limit", 20),
            error_threshold=trainer_data.get("error_threshold", 0.0),
            refinement_policy=RefinementPolicy(trainer_data.get("refinement_policy", "replace")),
            script_enabled=script_data.get("enabled", False),
            script_max_attempts=script_data.get("max_attempts", 3),
            max_regeneration_attempts=data.get("max_regeneration_attempts", 3),
            rag_path=(base_dir / data["rag_path"]) if "rag_path" in data else None,
            eval_max_entries=eval_data.get("max_entries"),
            eval_parallelism=eval_data.get("parallelism", 1),
            output_dir=base_dir / data.get("output_dir", "artifacts"),
            deterministic=data.get("deterministic"),
            seed=data.get("seed", 0),
        )
    except (KeyError, ValueError, ContractError) as exc:
        raise ConfigurationError(f"invalid run configuration: {exc}") from exc


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as handle:
        data = json.load(handle)
    return parse_config(data, base_dir=path.parent)


# ---------------------------------------------------------------------------
# Run orchestration


@dataclass
class RunResult:
    metrics: MetricsReport | None
    training: TrainingReport | None
    costs: CostBreakdown
    artifacts: dict[str, Path]
    exit_code: int = 0


def evaluate(
    fn: MockFunction,
    entries: Sequence[DataEntry],
    *,
    max_entries: int | None = None,
    parallelism: int = 1,
) -> tuple[list[tuple[Any, Any]], list[InvocationOutcome], int]:
    """Invoke each entry on a throwaway sub-branch; memory stays frozen."""
    selected = list(entries if max_entries is None else entries[:max_entries])

    def run_one(entry: DataEntry):
        branch = fn.memory.create_branch()
        try:
            view = fn.fork(branch)
            return view.invoke(entry.arguments, ground_truth=entry.truth)
        finally:
            branch.drop()

    pairs: list[tuple[Any, Any]] = []
    outcomes: list[InvocationOutcome] = []
    errors = 0
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            futures = [pool.submit(run_one, entry) for entry in selected]
            results = []
            for future in futures:
                try:
                    results.append(future.result())
                except (FormalFailureError, BackendError, ContractViolationError) as exc:
                    logger.warning("evaluation entry failed: %s", exc)
                    results.append(None)
    else:
        results = []
        for entry in selected:
            try:
                results.append(run_one(entry))
            except (FormalFailureError, BackendError, ContractViolationError) as exc:
                logger.warning("evaluation entry failed: %s", exc)
                results.append(None)

    for entry, outcome in zip(selected, results):
        if outcome is None:
            errors += 1
            continue
        pairs.append((outcome.invocation.results, entry.truth))
        outcomes.append(outcome)
    return pairs, outcomes, errors


def _write_json(path: Path, payload: dict[str, Any]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def run(
    config: RunConfig,
    *,
    do_train: bool = True,
    do_eval: bool = True,
    memory_path: Path | None = None,
) -> RunResult:
    """Execute the configured stages and write the artifact files."""
    backend = config.backend.build()
    reflector = config.reflector.build() if config.reflector else backend
    generator = config.generator.build() if config.generator else backend

    deterministic = config.deterministic
    if deterministic is None:
        deterministic = config.backend.kind == "stub"
    if deterministic:
        # Mixing the stage combination into the seed keeps a later eval-only
        # run from regenerating the ids already stored in a loaded snapshot.
        ids = SeededIds((config.seed << 2) | (int(do_train) << 1) | int(do_eval))
        clock = LogicalClock()
    else:
        ids, clock = new_hex_id, utcnow

    op_log = OperationLog(ids=ids, clock=clock)
    fn = MockFunction(
        config.contract,
        backend,
        max_regeneration_attempts=config.max_regeneration_attempts,
        op_log=op_log,
        ids=ids,
        clock=clock,
    )
    if memory_path is not None:
        fn.memory = MemoryBranch.from_dict(
            json.loads(Path(memory_path).read_text(encoding="utf-8")), ids=ids
        )
    if config.rag_path is not None:
        inject_rag(fn, load_rag_material(config.rag_path))

    train_set, eval_set = load_dataset(config.dataset, config.contract)

    training_report: TrainingReport | None = None
    if do_train:
        trainer_config = TrainerConfig(
            context_length_limit=config.context_length_limit,
            error_threshold=config.error_threshold,
            refinement_policy=config.refinement_policy,
            reflector_backend=reflector,
        )
        training_report = train(fn, train_set, trainer_config)
        if config.script_enabled:
            try:
                generate_script(fn, generator, max_attempts=config.script_max_attempts)
            except ScriptGenerationError as exc:
                logger.warning("substitution script unavailable: %s", exc)

    metrics: MetricsReport | None = None
    if do_eval:
        pairs, outcomes, errors = evaluate(
            fn,
            eval_set,
            max_entries=config.eval_max_entries,
            parallelism=config.eval_parallelism,
        )
        metrics = compute_metrics(pairs, outcomes, n_errors=errors)

    costs = cost_report(fn.usage_ledger.usages, backend.profile)

    out = config.output_dir
    artifacts: dict[str, Path] = {}
    artifacts["log"] = op_log.write_jsonl(out / "operations.jsonl")
    artifacts["cost"] = _write_json(out / "cost.json", costs.to_dict())
    artifacts["memory"] = _write_json(out / "memory.json", fn.memory.to_dict())
    if training_report is not None:
        artifacts["training"] = _write_json(out / "training.json", training_report.to_dict())
    if metrics is not None:
        artifacts["metrics"] = _write_json(out / "metrics.json", metrics.to_dict())
    if fn.script_slot is not None:
        # Keep the generated source next to the log for audit and hand-repair.
        script_path = out / "script.txt"
        script_path.write_text(fn.script_slot.source + "\n", encoding="utf-8")
        artifacts["script"] = script_path
    return RunResult(
        metrics=metrics,
        training=training_report,
        costs=costs,
        artifacts=artifacts,
        exit_code=0,
    )


# ---------------------------------------------------------------------------
# Replay and reporting


def replay(
    config: RunConfig,
    log_path: str | Path,
    output_dir: Path | None = None,
    *,
    do_train: bool = True,
) -> RunResult:
    """Re-run the configuration with the recorded responses as the stub script.

    All backend roles are routed through one stub holding the recorded reply
    sequence, so the pipeline consumes them in the original order and the
    metrics report comes out byte-identical. Replay the same stages that
    produced the log: ``do_train=False`` for an evaluation-only log.
    """
    records = read_jsonl(log_path)
    if not records:
        raise ConfigurationError(f"operation log {log_path} holds no records")
    replies = tuple((None, record["response_text"]) for record in records)
    stub_config = BackendConfig(kind="stub", profile=config.backend.profile, replies=replies)
    replay_config = RunConfig(
        **{
            **config.__dict__,
            "backend": stub_config,
            "reflector": None,
            "generator": None,
            "deterministic": True,
            "output_dir": output_dir or (config.output_dir / "replay"),
        }
    )
    return run(replay_config, do_train=do_train)


def usage_from_log(records: Sequence[dict[str, Any]]) -> list[TokenUsage]:
    usages = []
    for record in records:
        data = record.get("usage")
        if data:
            usages.append(
                TokenUsage(
                    prompt_tokens=data["prompt_tokens"],
                    completion_tokens=data["completion_tokens"],
                    category=UsageCategory(data["category"]),
                )
            )
    return usages


def report_from_log(log_path: str | Path, profile: BackendProfile) -> dict[str, Any]:
    """Cost breakdown and per-kind counts computed from a recorded log."""
    records = read_jsonl(log_path)
    breakdown = cost_report(usage_from_log(records), profile)
    kinds: dict[str, int] = {}
    for record in records:
        kinds[record["kind"]] = kinds.get(record["kind"], 0) + 1
    return {
        "records": len(records),
        "by_kind": kinds,
        "cost": breakdown.to_dict(),
    }

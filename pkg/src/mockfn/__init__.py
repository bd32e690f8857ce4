"""mockfn: functions declared by signature and documentation, executed by an
LLM role-playing the body, with schema-enforced I/O, reflection-based
training, bounded branchable memory, and optional substitution scripts that
replace live inference."""

from .backend import (
    BackendProfile,
    ChatRequest,
    ChatResponse,
    CostBreakdown,
    RemoteBackend,
    StubBackend,
    TokenUsage,
    UsageCategory,
    UsageLedger,
    cost_report,
)
from .contract import (
    FunctionContract,
    ParamSpec,
    TaskKind,
    ValidationResult,
    ValueSpec,
    ValueType,
    Violation,
    build_parameter_schema,
    build_response_schema,
    contract_from_dict,
    load_contract,
    render_arguments,
    validate_response,
)
from .executor import InvocationOutcome, MockFunction, ServedBy, build_system_prompt
from .harness import (
    DatasetSpec,
    MetricsReport,
    RagLevel,
    RagMaterial,
    RunConfig,
    compute_metrics,
    evaluate,
    inject_rag,
    load_config,
    load_dataset,
    replay,
    run,
)
from .memory import ChatMessage, MemoryBranch, MockInvocation, Role
from .oplog import OperationLog, OperationLogRecord, read_jsonl
from .subscript import (
    SubstitutionScript,
    compile_script,
    execute_script,
    generate_script,
    invalidate,
)
from .trainer import (
    DataEntry,
    RefinementPolicy,
    ReflectionNote,
    TrainerConfig,
    TrainingReport,
    apply_reflection,
    refine_compress,
    refine_replace,
    reflect,
    should_reflect,
    train,
)

__version__ = "0.1.0"

"""efimkit: serving-layer toolkit for LLM infilling.

Session-pool prompt gateway (PSM/SPM/EFIM), block-level prefix-cache
simulator with a calibrated prefill/decode cost model, deterministic
closed-loop workloads, and the fragment-tokenization training-data pipeline.
"""

from .config import Config
from .defaults import default_vocabulary
from .engine_sim import (
    EngineConfig,
    MetricsReport,
    Scheme,
    cost_reduction,
    run,
    sweep_users,
)
from .errors import (
    CacheAccountingError,
    ConfigError,
    DocumentTooShortError,
    EfimKitError,
    InvalidTokenError,
    MalformedPromptError,
    ReportComparisonError,
    RequestError,
    TraceParseError,
    UndefinedMetricError,
)
from .fragment_data import (
    Document,
    ProcessedSample,
    SubtokenStats,
    combined_pipeline,
    fim_transform,
    fragment_tokenize,
    reconstruct,
    subtoken_stats,
)
from .kv_cache import CacheStats, CacheTree, reuse_rate
from .prompt_format import (
    PromptFormat,
    PromptLayout,
    encode_prompt,
    parse,
    render_efim,
    render_psm,
    render_spm,
)
from .session_gateway import (
    GatewayDecision,
    InfillRequest,
    Outcome,
    Session,
    SessionPool,
    longest_common_prefix,
)
from .tokenizer import (
    DEFAULT_SPECIAL_DISPLAY,
    TokenSeq,
    Vocabulary,
    is_word_interior_boundary,
    train,
)
from .workload import RoundEvent, UserScript, WorkloadSpec, from_jsonl, generate, to_jsonl

__version__ = "0.1.0"

__all__ = [
    "CacheAccountingError",
    "CacheStats",
    "CacheTree",
    "Config",
    "ConfigError",
    "DEFAULT_SPECIAL_DISPLAY",
    "Document",
    "DocumentTooShortError",
    "EfimKitError",
    "EngineConfig",
    "GatewayDecision",
    "InfillRequest",
    "InvalidTokenError",
    "MalformedPromptError",
    "MetricsReport",
    "Outcome",
    "ProcessedSample",
    "PromptFormat",
    "PromptLayout",
    "ReportComparisonError",
    "RequestError",
    "RoundEvent",
    "Scheme",
    "Session",
    "SessionPool",
    "SubtokenStats",
    "TokenSeq",
    "TraceParseError",
    "UndefinedMetricError",
    "UserScript",
    "Vocabulary",
    "WorkloadSpec",
    "combined_pipeline",
    "cost_reduction",
    "default_vocabulary",
    "encode_prompt",
    "fim_transform",
    "fragment_tokenize",
    "from_jsonl",
    "generate",
    "is_word_interior_boundary",
    "longest_common_prefix",
    "parse",
    "reconstruct",
    "render_efim",
    "render_psm",
    "render_spm",
    "reuse_rate",
    "run",
    "subtoken_stats",
    "sweep_users",
    "to_jsonl",
    "train",
]

"""ReAct runtime and benchmark harness for tool-scheduling agents in video IoT.

The package simulates an eleven-tool, city-indexed video world, runs agents
through the ReAct step protocol against any completion backend, generates
instruction datasets with gold traces, and scores traces with decision,
tool, input and whole-response accuracies.
"""

__version__ = "0.1.0"

from .agent import Outcome, SessionConfig, SessionResult, run_batch, run_session
from .backends import (
    BackendError, CompletionRequest, CorruptionConfig, DemoBackend, EndpointBackend,
    FormatBreakerBackend, ScriptedBackend, complete, format_breaker_backend, scripted_backend,
)
from .dataset import (
    DEFAULT_TEMPLATES, DatasetRecord, GenConfig, GenerationError, InstructionTemplate,
    export_sft, generate, read_dataset, split, write_dataset,
)
from .evaluation import (
    MetricReport, Metrics, ScoringError, StepJudgment, judge_step, render_report, score,
)
from .knowledge import (
    KnowledgeBase, KnowledgeBaseError, VideoEntry, WorldFixture, default_base, demo_base,
    generate_default_base, list_locations, load, lookup,
)
from .prompts import PromptContext, Query, build_prompt, history_append, make_context
from .react_format import (
    Final, FormatViolation, Step, ToolCall, Trace, ViolationReason, parse_step,
    read_trace_file, render_step, write_trace_file,
)
from .tools import (
    Observation, PipelineSpec, Registry, ToolInput, ToolSpec, canonical_registry, invoke,
    parse_tool_input,
)

"""The ReAct loop: prompt, complete, parse, invoke, repeat."""

from __future__ import annotations

import enum
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

from .backends import Backend, BackendError, CompletionRequest, DEFAULT_MAX_NEW_TEXT, complete
from .knowledge import KnowledgeBase
from .prompts import Query, build_prompt, history_append, make_context
from .react_format import (
    LENIENT, STRICT, FormatViolation, Step, Trace, ToolCall, ViolationReason,
    parse_step, with_step_index,
)
from .tools import Registry, invoke

log = logging.getLogger(__name__)

ABORT = "abort"
RETRY_ONCE = "retry-once"


class Outcome(str, enum.Enum):
    COMPLETED = "completed"
    STEP_CAP_EXCEEDED = "step-cap-exceeded"
    FORMAT_VIOLATION = "format-violation"
    BACKEND_ERROR = "backend-error"


@dataclass(frozen=True)
class SessionConfig:
    max_steps: int = 5
    parse_mode: str = LENIENT
    on_violation: str = ABORT
    max_new_text: int = DEFAULT_MAX_NEW_TEXT

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.parse_mode not in (STRICT, LENIENT):
            raise ValueError(f"unknown parse mode {self.parse_mode!r}")
        if self.on_violation not in (ABORT, RETRY_ONCE):
            raise ValueError(f"unknown violation policy {self.on_violation!r}")


@dataclass
class SessionResult:
    """Outcome of one query.

    A backend fault in the middle of a session (transport failure, bad
    status, bad body) is recorded as a format violation at the current
    step, with ``error`` carrying the backend message. ``BACKEND_ERROR`` is
    reserved for sessions the backend refused to start.
    """

    trace: Trace
    outcome: Outcome
    violation: FormatViolation | None = None
    error: str | None = None

    @property
    def is_fault(self) -> bool:
        return self.error is not None


def run_session(backend: Backend, registry: Registry, base: KnowledgeBase, query: Query,
                cfg: SessionConfig = SessionConfig()) -> SessionResult:
    if not len(registry):
        raise ValueError("registry is empty")
    trace = Trace(query.id)
    try:
        backend.start_session(query)
    except BackendError as exc:
        return SessionResult(trace, Outcome.BACKEND_ERROR, error=str(exc))

    lenient = cfg.parse_mode == LENIENT
    ctx = make_context(registry.specs, base.list_locations(), query)
    attempts = 2 if cfg.on_violation == RETRY_ONCE else 1
    tool_calls = 0
    while True:
        req = CompletionRequest(build_prompt(ctx), max_new_text=cfg.max_new_text)
        index = len(trace.steps)
        for _ in range(attempts):
            try:
                raw = complete(backend, req)
            except BackendError as exc:
                v = FormatViolation(index, "", ViolationReason.MISSING_THOUGHT_LINE)
                return SessionResult(trace, Outcome.FORMAT_VIOLATION, v, error=str(exc))
            trace.raw_outputs.append(raw)
            parsed = parse_step(raw, cfg.parse_mode)
            if not isinstance(parsed, FormatViolation):
                break
        else:
            return SessionResult(trace, Outcome.FORMAT_VIOLATION, with_step_index(parsed, index))

        if not isinstance(parsed, ToolCall):
            trace.steps.append(Step(parsed))
            return SessionResult(trace, Outcome.COMPLETED)
        if tool_calls == cfg.max_steps:
            # recorded but not executed
            trace.steps.append(Step(parsed))
            return SessionResult(trace, Outcome.STEP_CAP_EXCEEDED)
        obs = invoke(registry, base, parsed.tool_name, parsed.tool_input, lenient)
        trace.steps.append(Step(parsed, obs.text))
        ctx = history_append(ctx, parsed, obs.text)
        tool_calls += 1


def _safe_session(factory, registry, base, query, cfg) -> SessionResult:
    try:
        return run_session(factory(), registry, base, query, cfg)
    except Exception as exc:  # contain per-record failures
        log.exception("session %s crashed", query.id)
        return SessionResult(Trace(query.id), Outcome.BACKEND_ERROR, error=repr(exc))


def run_batch(backend_factory: Callable[[], Backend], registry: Registry, base: KnowledgeBase,
              dataset: Sequence, cfg: SessionConfig = SessionConfig(),
              parallelism: int = 1) -> list[SessionResult]:
    """Run one session per record (or ``Query``); results follow input order.

    Each session gets a fresh backend from ``backend_factory``.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    queries = [getattr(r, "query", r) for r in dataset]
    if parallelism == 1 or len(queries) <= 1:
        return [_safe_session(backend_factory, registry, base, q, cfg) for q in queries]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(lambda q: _safe_session(backend_factory, registry, base, q, cfg),
                             queries))

"""Textual ReAct step protocol: grammar, parser, renderer and trace files.

A tool step looks like::

    Thought: Do I need to use a tool? Yes
    Action: FaceRecognition
    Action Input: suspect_A.jpg, Cairo

and a final step like::

    Thought: Do I need to use a tool? No
    AI: The person was found in Cairo.

Free-text fields (tool input, final answer) must be whitespace-normalized:
every line stripped, no runs of spaces/tabs, no blank lines, and no
continuation line that starts a new ``Thought:`` or ``Observation:`` block.
Under that invariant rendering and strict parsing are exact inverses, and
lenient parsing agrees with strict parsing on everything strict accepts.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field, replace
from os import PathLike
from typing import Iterable, Union

THOUGHT_PREFIX = "Thought: Do I need to use a tool?"
ACTION_PREFIX = "Action:"
INPUT_PREFIX = "Action Input:"
FINAL_PREFIX = "AI:"
OBSERVATION_PREFIX = "Observation:"

YES = "Yes"
NO = "No"

# Lines that open a new block; a free-text field ends before them.
_BLOCK_STARTS = ("Thought:", OBSERVATION_PREFIX)
_SPACE_RUN = re.compile(r"[ \t]+")

STRICT = "strict"
LENIENT = "lenient"


def decision_token(value: bool) -> str:
    return YES if value else NO


def normalize_line(line: str) -> str:
    return _SPACE_RUN.sub(" ", line.strip())


def is_normalized_text(text: str) -> bool:
    """True if ``text`` survives lenient normalization unchanged."""
    if text == "":
        return True
    lines = text.split("\n")
    for i, line in enumerate(lines):
        if not line or normalize_line(line) != line:
            return False
        if i > 0 and line.startswith(_BLOCK_STARTS):
            return False
    return True


@dataclass(frozen=True)
class ToolCall:
    """A step that invokes a tool (decision is always "Yes")."""

    tool_name: str
    tool_input: str

    decision = True

    def __post_init__(self):
        if not self.tool_name or re.search(r"\s", self.tool_name):
            raise ValueError(f"invalid tool name {self.tool_name!r}")
        if not is_normalized_text(self.tool_input):
            raise ValueError(f"tool input is not whitespace-normalized: {self.tool_input!r}")


@dataclass(frozen=True)
class Final:
    """A step that ends the session with feedback for the user."""

    answer: str

    decision = False

    def __post_init__(self):
        if not is_normalized_text(self.answer):
            raise ValueError(f"final answer is not whitespace-normalized: {self.answer!r}")


Action = Union[ToolCall, Final]


class ViolationReason(str, enum.Enum):
    MISSING_THOUGHT_LINE = "missing-thought-line"
    BAD_DECISION_TOKEN = "bad-decision-token"
    MISSING_ACTION_LINE = "missing-action-line"
    MISSING_ACTION_INPUT = "missing-action-input"
    TRAILING_GARBAGE = "trailing-garbage"


@dataclass(frozen=True)
class FormatViolation:
    step_index: int
    raw_text: str
    reason: ViolationReason


@dataclass(frozen=True)
class Step:
    action: Action
    observation: str | None = None

    def __post_init__(self):
        if self.observation is not None and not isinstance(self.action, ToolCall):
            raise ValueError("only tool steps carry an observation")


@dataclass
class Trace:
    """Everything an agent produced for one query.

    ``raw_outputs`` holds every verbatim completion, including violating
    ones that never became a step, so it may be longer than ``steps``.
    """

    query_id: str
    steps: list[Step] = field(default_factory=list)
    raw_outputs: list[str] = field(default_factory=list)

    def __post_init__(self):
        for i, step in enumerate(self.steps):
            if isinstance(step.action, Final) and i != len(self.steps) - 1:
                raise ValueError(f"trace {self.query_id}: final step must be last")
        if len(self.raw_outputs) < len(self.steps):
            raise ValueError(f"trace {self.query_id}: fewer raw outputs than steps")

    @property
    def final(self) -> Final | None:
        if self.steps and isinstance(self.steps[-1].action, Final):
            return self.steps[-1].action
        return None


# --------------------------------------------------------------------------
# parsing


def _field_text(first: str, rest: list[str]) -> str:
    lines = [first]
    for line in rest:
        if line.startswith(_BLOCK_STARTS):
            break
        lines.append(line)
    return "\n".join(lines)


def _after(line: str, prefix: str, lenient: bool) -> str | None:
    """Return the text after ``prefix`` (plus its separating space) or None."""
    if lenient:
        if line.startswith(prefix):
            return line[len(prefix):].lstrip()
        return None
    if line.startswith(prefix + " "):
        return line[len(prefix) + 1:]
    return None


def parse_step(raw: str, mode: str = STRICT) -> Action | FormatViolation:
    """Parse one model completion into an action.

    Never raises on bad text: returns a ``FormatViolation`` carrying the
    first failing reason. The violation's ``step_index`` is 0; callers that
    know the step position replace it.
    """
    if mode not in (STRICT, LENIENT):
        raise ValueError(f"unknown parse mode {mode!r}")
    lenient = mode == LENIENT

    def violation(reason: ViolationReason) -> FormatViolation:
        return FormatViolation(0, raw, reason)

    lines = raw.split("\n")
    if lenient:
        lines = [normalize_line(line) for line in lines]
        lines = [line for line in lines if line]
    if not lines:
        return violation(ViolationReason.MISSING_THOUGHT_LINE)

    token = _after(lines[0], THOUGHT_PREFIX, lenient)
    if token is None:
        return violation(ViolationReason.MISSING_THOUGHT_LINE)
    if token not in (YES, NO):
        return violation(ViolationReason.BAD_DECISION_TOKEN)

    if token == YES:
        name = _after(lines[1], ACTION_PREFIX, lenient) if len(lines) > 1 else None
        if name is None or not name.strip():
            return violation(ViolationReason.MISSING_ACTION_LINE)
        if re.search(r"\s", name):
            return violation(ViolationReason.TRAILING_GARBAGE)
        first = _after(lines[2], INPUT_PREFIX, lenient) if len(lines) > 2 else None
        if first is None:
            return violation(ViolationReason.MISSING_ACTION_INPUT)
        text = _field_text(first, lines[3:])
        if not is_normalized_text(text):
            return violation(ViolationReason.TRAILING_GARBAGE)
        return ToolCall(name, text)

    if len(lines) < 2:
        return violation(ViolationReason.MISSING_ACTION_INPUT)
    first = _after(lines[1], FINAL_PREFIX, lenient)
    if first is None:
        return violation(ViolationReason.TRAILING_GARBAGE)
    text = _field_text(first, lines[2:])
    if not is_normalized_text(text):
        return violation(ViolationReason.TRAILING_GARBAGE)
    return Final(text)


def render_step(action: Action, observation: str | None = None) -> str:
    """Canonical strict-mode text of ``action``, optionally with its observation."""
    if isinstance(action, ToolCall):
        text = (
            f"{THOUGHT_PREFIX} {YES}\n"
            f"{ACTION_PREFIX} {action.tool_name}\n"
            f"{INPUT_PREFIX} {action.tool_input}"
        )
    else:
        text = f"{THOUGHT_PREFIX} {NO}\n{FINAL_PREFIX} {action.answer}"
    if observation is not None:
        text += f"\n{OBSERVATION_PREFIX} {observation}"
    return text


def with_step_index(violation: FormatViolation, index: int) -> FormatViolation:
    return replace(violation, step_index=index)


# --------------------------------------------------------------------------
# trace files


class TraceFileError(ValueError):
    """A trace file line does not match the record schema."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


_TRACE_KEYS = ("query_id", "steps", "raw")
_STEP_KEYS = ("decision", "tool", "input", "answer", "observation")


def step_to_dict(step: Step) -> dict:
    a = step.action
    if isinstance(a, ToolCall):
        return {"decision": True, "tool": a.tool_name, "input": a.tool_input,
                "answer": None, "observation": step.observation}
    return {"decision": False, "tool": None, "input": None,
            "answer": a.answer, "observation": None}


def step_from_dict(d: dict) -> Step:
    if not isinstance(d, dict) or tuple(d) != _STEP_KEYS:
        raise ValueError(f"step must have keys {list(_STEP_KEYS)}")
    if d["decision"] is True:
        if not isinstance(d["tool"], str) or not isinstance(d["input"], str):
            raise ValueError("tool step needs string tool and input")
        if d["answer"] is not None:
            raise ValueError("tool step must not carry an answer")
        obs = d["observation"]
        if obs is not None and not isinstance(obs, str):
            raise ValueError("observation must be a string or null")
        return Step(ToolCall(d["tool"], d["input"]), obs)
    if d["decision"] is False:
        if d["tool"] is not None or d["input"] is not None or d["observation"] is not None:
            raise ValueError("final step carries only an answer")
        if not isinstance(d["answer"], str):
            raise ValueError("final step needs a string answer")
        return Step(Final(d["answer"]))
    raise ValueError("decision must be a boolean")


def trace_to_dict(trace: Trace) -> dict:
    return {
        "query_id": trace.query_id,
        "steps": [step_to_dict(s) for s in trace.steps],
        "raw": list(trace.raw_outputs),
    }


def trace_from_dict(d: dict) -> Trace:
    if not isinstance(d, dict) or tuple(d) != _TRACE_KEYS:
        raise ValueError(f"record must have keys {list(_TRACE_KEYS)}")
    if not isinstance(d["query_id"], str):
        raise ValueError("query_id must be a string")
    if not isinstance(d["steps"], list) or not isinstance(d["raw"], list):
        raise ValueError("steps and raw must be arrays")
    if not all(isinstance(r, str) for r in d["raw"]):
        raise ValueError("raw entries must be strings")
    return Trace(d["query_id"], [step_from_dict(s) for s in d["steps"]], list(d["raw"]))


def dumps_record(obj: dict) -> str:
    """Canonical single-line JSON used by every line-delimited file here."""
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path: str | PathLike) -> list[tuple[int, object]]:
    with open(path, encoding="utf-8", newline="") as fh:
        content = fh.read()
    if content == "":
        return []
    if not content.endswith("\n"):
        content += "\n"
    out = []
    for lineno, line in enumerate(content.split("\n")[:-1], start=1):
        try:
            out.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise TraceFileError(lineno, f"invalid JSON ({exc.msg})") from None
    return out


def write_jsonl(records: Iterable[dict], path: str | PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps_record(rec))
            fh.write("\n")


def read_trace_file(path: str | PathLike) -> list[Trace]:
    traces = []
    for lineno, obj in read_jsonl(path):
        try:
            traces.append(trace_from_dict(obj))
        except ValueError as exc:
            raise TraceFileError(lineno, str(exc)) from None
    return traces


def write_trace_file(traces: Iterable[Trace], path: str | PathLike) -> None:
    write_jsonl((trace_to_dict(t) for t in traces), path)

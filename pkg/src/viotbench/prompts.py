"""Prompt assembly: tools, knowledge listing, query, and step history.

Wording lives in the constants below. Any change to them changes model
behavior, so bump ``PROMPT_VERSION`` with it.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .react_format import (
    ACTION_PREFIX, FINAL_PREFIX, INPUT_PREFIX, NO, THOUGHT_PREFIX, YES,
    Step, ToolCall, render_step,
)
from .tools import ToolSpec

PROMPT_VERSION = "1.0"

PREAMBLE = (
    "VIoT Assistant is designed to help with video surveillance tasks over a "
    "network of city cameras. VIoT Assistant cannot watch videos directly, but it "
    "has access to the following vision tools:"
)

FORMAT_INSTRUCTIONS = f"""To use a tool, please use the following format:

{THOUGHT_PREFIX} {YES}
{ACTION_PREFIX} the tool to use, exactly one of [{{tool_names}}]
{INPUT_PREFIX} the input to the tool

The result of the tool is then given back to you, and you continue from there.
When you have a response for the Human, or if you do not need a tool, you MUST use the format:

{THOUGHT_PREFIX} {NO}
{FINAL_PREFIX} your response here"""

KNOWLEDGE_PREAMBLE = (
    "Videos are indexed by city-level location. Tool inputs must name one of "
    "these locations:"
)
NO_LOCATIONS = "(no locations are indexed)"

QUERY_PREFIX = "Human:"
MEDIA_TEMPLATE = " [media: {ref}]"


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    media_ref: str | None = None


@dataclass(frozen=True)
class PromptContext:
    tool_specs: tuple[ToolSpec, ...]
    location_names: tuple[str, ...]
    query: Query
    history: tuple[Step, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "tool_specs", tuple(self.tool_specs))
        object.__setattr__(self, "location_names", tuple(self.location_names))
        object.__setattr__(self, "history", tuple(self.history))
        for step in self.history:
            if not isinstance(step.action, ToolCall) or step.observation is None:
                raise ValueError("history holds executed tool steps only")


def make_context(specs: Sequence[ToolSpec], locations: Sequence[str], query: Query,
                 history: Sequence[Step] = ()) -> PromptContext:
    return PromptContext(tuple(specs), tuple(locations), query, tuple(history))


def render_history(history: Sequence[Step]) -> str:
    return "\n".join(render_step(s.action, s.observation) for s in history)


def build_prompt(ctx: PromptContext) -> str:
    """Render the full prompt; a pure function of ``ctx``."""
    if not ctx.tool_specs:
        raise ValueError("prompt needs at least one tool")
    tool_lines = "\n".join(f"> {t.name}: {t.description}" for t in ctx.tool_specs)
    names = ", ".join(t.name for t in ctx.tool_specs)
    locations = ", ".join(ctx.location_names) if ctx.location_names else NO_LOCATIONS
    query = f"{QUERY_PREFIX} {ctx.query.text}"
    if ctx.query.media_ref:
        query += MEDIA_TEMPLATE.format(ref=ctx.query.media_ref)
    sections = [
        PREAMBLE,
        tool_lines,
        FORMAT_INSTRUCTIONS.format(tool_names=names),
        f"{KNOWLEDGE_PREAMBLE}\n{locations}",
        query,
    ]
    text = "\n\n".join(sections)
    if ctx.history:
        text += "\n" + render_history(ctx.history)
    return text


def history_append(ctx: PromptContext, action: ToolCall, observation: str) -> PromptContext:
    """New context with one more executed step; ``ctx`` is left unchanged."""
    if not isinstance(action, ToolCall):
        raise TypeError("only tool calls enter the history")
    return replace(ctx, history=ctx.history + (Step(action, observation),))

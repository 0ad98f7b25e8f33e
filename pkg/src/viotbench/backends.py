"""Completion backends: the text-in/text-out boundary of the agent.

Every backend is session-affine: the agent calls ``start_session`` once per
query and then ``complete`` once per step. Implementations here:

* ``ScriptedBackend`` replays gold traces, optionally corrupting fields
  with seeded probabilities so metric values can be predicted analytically.
* ``FormatBreakerBackend`` never follows the step grammar.
* ``EndpointBackend`` posts each step to a remote completion server.
* ``DemoBackend`` routes free-form queries by keyword, for the REPL.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .knowledge import KnowledgeBase
from .prompts import QUERY_PREFIX, Query
from .react_format import OBSERVATION_PREFIX, Final, ToolCall, render_step
from .tools import CONFUSABLE_GROUPS, LOCATION_ONLY, Registry

log = logging.getLogger(__name__)

OBSERVATION_STOP = "\n" + OBSERVATION_PREFIX
DEFAULT_MAX_NEW_TEXT = 8192
ENDPOINT_ENV = "VIOT_ENDPOINT"
WRONG_FINAL = "I could not find anything relevant."


class BackendError(RuntimeError):
    def __init__(self, message: str, retries: int = 0):
        super().__init__(message)
        self.retries = retries


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    stop_sequences: tuple[str, ...] = (OBSERVATION_STOP,)
    max_new_text: int = DEFAULT_MAX_NEW_TEXT

    def __post_init__(self):
        stops = tuple(self.stop_sequences)
        if OBSERVATION_STOP not in stops:
            stops = (OBSERVATION_STOP,) + stops
        object.__setattr__(self, "stop_sequences", stops)
        if self.max_new_text < 1:
            raise ValueError("max_new_text must be positive")


def truncate(text: str, stops: Iterable[str], budget: int) -> str:
    """Cut ``text`` at the earliest stop sequence, then to ``budget`` characters."""
    cut = len(text)
    for s in stops:
        if s:
            i = text.find(s)
            if i != -1:
                cut = min(cut, i)
    return text[:min(cut, budget)]


class Backend:
    def start_session(self, query: Query) -> None:
        pass

    def complete(self, req: CompletionRequest) -> str:
        raise NotImplementedError


def complete(backend: Backend, req: CompletionRequest) -> str:
    if not req.prompt:
        raise ValueError("prompt must be non-empty")
    return backend.complete(req)


# --------------------------------------------------------------------------
# scripted oracle


@dataclass(frozen=True)
class CorruptionConfig:
    p_decision: float = 0.0
    p_tool: float = 0.0
    p_input: float = 0.0
    p_final: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("p_decision", "p_tool", "p_input", "p_final"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {p}")


class ScriptedBackend(Backend):
    """Replays each record's gold steps, then its final answer.

    Calls past the end of the gold trace keep emitting the final step.
    Every step draws its four corruption coins up front from an RNG seeded
    by ``(rng_seed, query_id)``, so results do not depend on which
    instance or thread serves a session.

    ``corrupt_where(record, step_index)`` optionally restricts corruption
    to selected steps; coins are drawn either way.
    """

    def __init__(self, gold, corruption: CorruptionConfig | None = None, *,
                 tool_names: Sequence[str] = (), locations: Sequence[str] = (),
                 corrupt_where: Callable[[object, int], bool] | None = None):
        self.gold = {r.query.id: r for r in gold}
        self.corruption = corruption or CorruptionConfig()
        self.corrupt_where = corrupt_where
        self.tool_names = list(tool_names)
        self.locations = list(locations)
        self._record = None
        self._rng: random.Random | None = None
        self._t = 0

    def start_session(self, query: Query) -> None:
        record = self.gold.get(query.id)
        if record is None:
            raise BackendError(f"no gold record for query {query.id!r}")
        self._record = record
        self._rng = random.Random(f"{self.corruption.rng_seed}:{query.id}")
        self._t = 0

    def next_action(self):
        if self._record is None:
            raise BackendError("complete() called before start_session()")
        rec, t = self._record, self._t
        self._t += 1
        gold = rec.gold_steps[t] if t < len(rec.gold_steps) else Final(rec.gold_final)
        action = self._corrupt(gold)
        if self.corrupt_where is not None and not self.corrupt_where(rec, t):
            return gold
        return action

    def complete(self, req: CompletionRequest) -> str:
        return truncate(render_step(self.next_action()), req.stop_sequences, req.max_new_text)

    def _corrupt(self, gold):
        c, rng = self.corruption, self._rng
        u_decision, u_tool, u_input, u_final = (rng.random() for _ in range(4))
        if isinstance(gold, ToolCall):
            if u_decision < c.p_decision:
                return Final(WRONG_FINAL)
            name = self._other_tool(gold.tool_name) if u_tool < c.p_tool else gold.tool_name
            text = self._other_location(gold.tool_input) if u_input < c.p_input else gold.tool_input
            return ToolCall(name, text)
        if u_decision < c.p_decision:
            if self._record.gold_steps:
                return self._record.gold_steps[-1]
            return ToolCall(rng.choice(self.tool_names), rng.choice(self.locations))
        return Final(WRONG_FINAL) if u_final < c.p_final else gold

    def _other_tool(self, name: str) -> str:
        rng = self._rng
        group = next((g for g in CONFUSABLE_GROUPS if name in g), None)
        if group is not None and rng.random() < 0.5:
            return rng.choice([n for n in group if n != name])
        others = [n for n in self.tool_names if n != name]
        if not others:
            raise BackendError("tool corruption needs at least two registered tools")
        return rng.choice(others)

    def _other_location(self, text: str) -> str:
        head, sep, loc = text.rpartition(",")
        loc = loc.strip()
        others = [l for l in self.locations if l.casefold() != loc.casefold()]
        if not others:
            return text
        new = self._rng.choice(others)
        return f"{head}, {new}" if sep else new


def scripted_backend(gold, corruption: CorruptionConfig | None = None, *,
                     registry: Registry, base: KnowledgeBase, corrupt_where=None) -> ScriptedBackend:
    return ScriptedBackend(gold, corruption, tool_names=registry.names,
                           locations=base.list_locations(), corrupt_where=corrupt_where)


# --------------------------------------------------------------------------
# format breaker

BREAKER_TEXT = (
    "Sure! I would be happy to help you with the surveillance videos. "
    "To answer your question I would need to look at the cameras myself, "
    "so please describe the footage and I will do my best."
)


class FormatBreakerBackend(Backend):
    """Chatty prose with no step grammar, like an untuned base model."""

    def complete(self, req: CompletionRequest) -> str:
        return truncate(BREAKER_TEXT, req.stop_sequences, req.max_new_text)


def format_breaker_backend() -> FormatBreakerBackend:
    return FormatBreakerBackend()


# --------------------------------------------------------------------------
# remote endpoint


class EndpointBackend(Backend):
    """Blocking JSON client: ``{"prompt", "stop", "max_tokens"}`` -> ``{"text"}``."""

    def __init__(self, url: str, timeout: float = 30.0, retries: int = 2,
                 backoff: float = 0.5, sleep: Callable[[float], None] = time.sleep):
        if not url:
            raise ValueError(f"endpoint URL missing (pass --endpoint or set {ENDPOINT_ENV})")
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep

    @classmethod
    def from_env(cls, url: str | None = None, **kwargs) -> "EndpointBackend":
        return cls(url or os.environ.get(ENDPOINT_ENV, ""), **kwargs)

    def _post(self, req: CompletionRequest) -> str:
        body = json.dumps({"prompt": req.prompt, "stop": list(req.stop_sequences),
                           "max_tokens": req.max_new_text}).encode("utf-8")
        http_req = urllib.request.Request(
            self.url, data=body, method="POST",
            headers={"Content-Type": "application/json"})
        with urllib.request.urlopen(http_req, timeout=self.timeout) as resp:
            payload = resp.read()
        try:
            doc = json.loads(payload.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            raise ValueError("response body is not JSON") from None
        if not isinstance(doc, dict) or not isinstance(doc.get("text"), str):
            raise ValueError('response body lacks a string "text" field')
        return doc["text"]

    def complete(self, req: CompletionRequest) -> str:
        last = None
        for attempt in range(self.retries + 1):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                text = self._post(req)
            except urllib.error.HTTPError as exc:
                last = f"HTTP {exc.code}"
            except (urllib.error.URLError, OSError) as exc:
                last = f"transport failure: {getattr(exc, 'reason', exc)}"
            except ValueError as exc:
                last = f"malformed body: {exc}"
            else:
                return truncate(text, req.stop_sequences, req.max_new_text)
            log.debug("endpoint attempt %d failed: %s", attempt + 1, last)
        raise BackendError(f"{self.url}: {last} after {self.retries} retries", self.retries)


# --------------------------------------------------------------------------
# keyword demo

_MEDIA_TOKEN = re.compile(r"[\w./\\-]+\.(?:jpg|jpeg|png|bmp|mp4|avi|mov)\b", re.IGNORECASE)

# First matching rule wins.
_ROUTES = (
    (("anomal", "abnormal", "unusual", "suspicious"), ("SceneRecognition", "ViolenceDetection")),
    (("how many", "crowd", "count"), ("CrowdCounting",)),
    (("fire", "smoke", "burn"), ("FireSmokeDetection",)),
    (("violen", "fight", "assault"), ("ViolenceDetection",)),
    (("scene", "kind of place", "environment"), ("SceneRecognition",)),
    (("doing", "action", "behavio"), ("PoseEstimation", "ActionRecognition")),
    (("pose", "keypoint", "skeleton"), ("PoseEstimation",)),
    (("plate",), ("LicensePlateRecognition",)),
    (("vehicle", "car", "truck"), ("VehicleReidentification",)),
    (("gait", "walking", "walk"), ("GaitRecognition",)),
    (("face",), ("FaceRecognition",)),
    (("person", "pedestrian", "someone", "find", "who"), ("PersonReidentification",)),
)


class DemoBackend(Backend):
    """Keyword router over the query text; good enough for interactive demos."""

    def __init__(self, registry: Registry, base: KnowledgeBase):
        self.registry = registry
        self.locations = sorted(base.list_locations(), key=len, reverse=True)
        self._plan: list[ToolCall] = []
        self._t = 0
        self._problem: str | None = None

    def start_session(self, query: Query) -> None:
        self._t = 0
        self._plan, self._problem = self._route(query)

    def _route(self, query: Query):
        text = query.text.lower()
        tools = next((t for keys, t in _ROUTES if any(k in text for k in keys)), None)
        if tools is None:
            return [], "I am not sure which vision tool fits this request."
        location = next((l for l in self.locations
                         if re.search(rf"\b{re.escape(l.lower())}\b", text)), None)
        if location is None:
            return [], "Please tell me which location's videos to search."
        m = _MEDIA_TOKEN.search(query.text)
        media = query.media_ref or (m.group(0) if m else None)
        plan = []
        for name in tools:
            if self.registry.spec(name).input_shape == LOCATION_ONLY:
                plan.append(ToolCall(name, location))
            elif media is None:
                return [], "Please attach the query image or video."
            else:
                plan.append(ToolCall(name, f"{media}, {location}"))
        return plan, None

    def complete(self, req: CompletionRequest) -> str:
        t = self._t
        self._t += 1
        if self._problem is not None:
            action = Final(self._problem)
        elif t < len(self._plan):
            action = self._plan[t]
        else:
            action = Final(_summarize(req.prompt))
        return truncate(render_step(action), req.stop_sequences, req.max_new_text)


def _summarize(prompt: str) -> str:
    lines = prompt.split("\n")
    start = max((i for i, l in enumerate(lines) if l.startswith(QUERY_PREFIX)), default=0)
    obs = [l[len(OBSERVATION_PREFIX):].strip() for l in lines[start:]
           if l.startswith(OBSERVATION_PREFIX)]
    if not obs:
        return WRONG_FINAL
    return "; ".join(obs) + "."

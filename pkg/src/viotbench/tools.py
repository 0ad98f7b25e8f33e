"""Simulated VIoT vision tools and the registry that names them.

The eleven tools are deterministic functions of a location's
``WorldFixture``: nothing is decoded or inferred. Tool failures (unknown
tool, unknown location, malformed input) come back as observations so the
agent can see them and re-plan.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from types import MappingProxyType
from typing import Mapping

from .knowledge import KnowledgeBase

HUMAN = "human"
VEHICLE = "vehicle"
EVENT = "event"
CATEGORIES = (HUMAN, VEHICLE, EVENT)

WITH_MEDIA = "with-query-media"
LOCATION_ONLY = "location-only"

CANONICAL_TOOLS = {
    HUMAN: ("FaceRecognition", "PersonReidentification", "GaitRecognition", "CrowdCounting"),
    VEHICLE: ("VehicleReidentification", "LicensePlateRecognition"),
    EVENT: ("FireSmokeDetection", "PoseEstimation", "ActionRecognition",
            "SceneRecognition", "ViolenceDetection"),
}

# Tools with near-identical purpose; corrupted backends confuse within these.
CONFUSABLE_GROUPS = (
    ("FaceRecognition", "PersonReidentification", "GaitRecognition"),
    ("VehicleReidentification", "LicensePlateRecognition"),
)

SHAPE_ERROR = "error: expected '<media>, <location>'"


@dataclass(frozen=True)
class ToolSpec:
    name: str
    category: str
    description: str
    input_shape: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"{self.name}: unknown category {self.category!r}")
        if self.input_shape not in (WITH_MEDIA, LOCATION_ONLY):
            raise ValueError(f"{self.name}: unknown input shape {self.input_shape!r}")


@dataclass(frozen=True)
class ToolInput:
    location: str
    media_ref: str | None = None


@dataclass(frozen=True)
class Observation:
    text: str
    structured: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class PipelineSpec:
    name: str
    stages: tuple[str, ...]


class InputShapeError(ValueError):
    pass


class Registry:
    def __init__(self, tools, pipelines=(), version: str = "unversioned"):
        self.version = version
        by_name: dict[str, ToolSpec] = {}
        for spec in tools:
            if spec.name in by_name:
                raise ValueError(f"duplicate tool {spec.name!r}")
            by_name[spec.name] = spec
        self._tools = MappingProxyType(by_name)
        self._folded = {n.casefold(): n for n in by_name}
        pipes: dict[str, PipelineSpec] = {}
        for p in pipelines:
            if len(p.stages) < 2:
                raise ValueError(f"pipeline {p.name} needs at least two stages")
            unknown = [s for s in p.stages if s not in by_name]
            if unknown:
                raise ValueError(f"pipeline {p.name} has unregistered stages {unknown}")
            pipes[p.name] = p
        self._pipelines = MappingProxyType(pipes)

    def __len__(self):
        return len(self._tools)

    def __contains__(self, name):
        return name in self._tools

    @property
    def names(self) -> list[str]:
        return list(self._tools)

    @property
    def specs(self) -> list[ToolSpec]:
        return list(self._tools.values())

    @property
    def pipelines(self) -> Mapping[str, PipelineSpec]:
        return self._pipelines

    def spec(self, name: str) -> ToolSpec:
        return self._tools[name]

    def resolve(self, name: str, lenient: bool = False) -> str | None:
        """Canonical name for ``name``, or None if it is not registered."""
        if name in self._tools:
            return name
        if lenient:
            return self._folded.get(name.casefold())
        return None

    def pipeline_for(self, stages) -> PipelineSpec | None:
        stages = tuple(stages)
        for p in self._pipelines.values():
            if p.stages == stages:
                return p
        return None


def _load_tool_file():
    text = resources.files("viotbench").joinpath("data", "tools.json").read_text("utf-8")
    return json.loads(text)


def canonical_registry() -> Registry:
    """The eleven tools across three categories plus the two pipelines."""
    data = _load_tool_file()
    tools = [ToolSpec(t["name"], t["category"], t["description"], t["input_shape"])
             for t in data["tools"]]
    expected = {(n, cat) for cat, names in CANONICAL_TOOLS.items() for n in names}
    if {(t.name, t.category) for t in tools} != expected:
        raise RuntimeError("tools.json does not match the canonical tool set")
    pipes = [PipelineSpec(p["name"], tuple(p["stages"])) for p in data["pipelines"]]
    return Registry(tools, pipes, version=data["version"])


def parse_tool_input(raw: str, spec: ToolSpec) -> ToolInput:
    """Split a raw ``Action Input`` into media reference and location.

    Media tools split at the last comma, so media refs may contain commas.
    """
    text = raw.strip()
    if spec.input_shape == LOCATION_ONLY:
        return ToolInput(location=text)
    head, sep, tail = text.rpartition(",")
    media, location = head.strip(), tail.strip()
    if not sep or not media or not location:
        raise InputShapeError(SHAPE_ERROR)
    return ToolInput(location=location, media_ref=media)


def subject_id(media_ref: str) -> str:
    """Identity/plate/vehicle encoded by a media ref: ``suspect_A.jpg`` -> ``suspect_A``."""
    name = media_ref.replace("\\", "/").rsplit("/", 1)[-1]
    return name.split(".", 1)[0]


def _match(kind: str, pool, ident: str, location: str) -> Observation:
    if ident in pool:
        return Observation(f"{kind} {ident} found in {location}",
                           {"match": True, "subject": ident, "location": location})
    return Observation(f"no match in {location}",
                       {"match": False, "subject": ident, "location": location})


def _simulate(tool: str, inp: ToolInput, location: str, fx) -> Observation:
    ident = subject_id(inp.media_ref) if inp.media_ref is not None else None
    if tool in ("FaceRecognition", "PersonReidentification", "GaitRecognition"):
        return _match("identity", fx.identities, ident, location)
    if tool == "VehicleReidentification":
        return _match("vehicle", fx.vehicles, ident, location)
    if tool == "LicensePlateRecognition":
        return _match("plate", fx.plates, ident, location)
    if tool == "CrowdCounting":
        return Observation(f"counted {fx.crowd_count} people in {location}",
                           {"count": fx.crowd_count, "location": location})
    if tool == "SceneRecognition":
        return Observation(f"scene: {fx.scene_label}", {"scene": fx.scene_label})
    if tool == "FireSmokeDetection":
        text = "fire/smoke detected" if fx.fire_present else "no fire or smoke"
        return Observation(text, {"detected": fx.fire_present})
    if tool == "ViolenceDetection":
        text = "violence detected" if fx.violence_present else "no violence detected"
        return Observation(text, {"detected": fx.violence_present})
    if tool == "PoseEstimation":
        if fx.poses_available:
            return Observation(f"keypoints extracted for {location}", {"keypoints": True})
        return Observation(f"no keypoints found in {location}", {"keypoints": False})
    if tool == "ActionRecognition":
        label = fx.actions.get(ident)
        if label is None:
            return Observation("no action found", {"subject": ident, "action": None})
        return Observation(f"action: {label}", {"subject": ident, "action": label})
    raise KeyError(tool)


def invoke(registry: Registry, base: KnowledgeBase, tool_name: str, raw_input: str,
           lenient: bool = False) -> Observation:
    """Run a simulated tool. Pure in all arguments; errors come back as observations."""
    name = registry.resolve(tool_name.strip(), lenient)
    if name is None:
        return Observation(f"error: unknown tool {tool_name}", {"error": "unknown-tool"})
    spec = registry.spec(name)
    try:
        inp = parse_tool_input(raw_input, spec)
    except InputShapeError as exc:
        return Observation(str(exc), {"error": "input-shape"})
    entry = base.lookup(inp.location, lenient)
    if entry is None:
        return Observation(f"error: unknown location {inp.location}",
                           {"error": "unknown-location"})
    return _simulate(name, inp, entry.location, entry.fixture)

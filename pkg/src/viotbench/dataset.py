"""Instruction dataset generation with gold traces.

Queries are instantiated from per-task phrasing banks over the fixture
world; gold steps are synthesized from the task's tool (or pipeline
stages) and the gold final answer from replaying those steps through the
simulated tools. The same fixtures therefore make every gold trace valid
by construction.

Locations and phrasings are partitioned into a train pool and a held-out
test pool, so test records never share either with training data.
"""

from __future__ import annotations

import random
import string
from collections import defaultdict
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from os import PathLike
from typing import Callable, Sequence

from .knowledge import KnowledgeBase
from .prompts import Query, build_prompt, history_append, make_context
from .react_format import (
    Final, ToolCall, TraceFileError, read_jsonl, render_step, write_jsonl,
)
from .tools import Registry, canonical_registry, invoke

TRAIN, VAL, TEST = "train", "val", "test"

IDENTITY, VEHICLE_ID, PLATE, PLACE = "identity", "vehicle", "plate", "place"

# Slots a phrasing may use, by the kind of subject its task queries.
SLOTS = {
    IDENTITY: {"identity", "media", "location"},
    VEHICLE_ID: {"vehicle", "media", "location"},
    PLATE: {"plate", "media", "location"},
    PLACE: {"location"},
}


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class InstructionTemplate:
    tool_or_pipeline: str
    category: str
    subject: str
    phrasings: tuple[str, ...]
    held_out: tuple[str, ...] = ()
    media_ext: str = ".jpg"

    def slots(self) -> set[str]:
        out = set()
        for p in self.phrasings + self.held_out:
            out |= {f for _, f, _, _ in string.Formatter().parse(p) if f}
        return out


@dataclass(frozen=True)
class DatasetRecord:
    query: Query
    category: str
    gold_steps: tuple[ToolCall, ...]
    gold_final: str
    split: str = TRAIN

    def __post_init__(self):
        object.__setattr__(self, "gold_steps", tuple(self.gold_steps))
        if self.split not in (TRAIN, VAL, TEST):
            raise ValueError(f"unknown split {self.split!r}")

    @property
    def gold_actions(self) -> list:
        return [*self.gold_steps, Final(self.gold_final)]

    @property
    def task(self) -> str:
        return task_name(self.gold_steps)


@lru_cache(maxsize=1)
def _pipelines_by_stages():
    return {p.stages: p.name for p in canonical_registry().pipelines.values()}


def task_name(gold_steps: Sequence[ToolCall]) -> str:
    """Tool name for single-step records, pipeline name for multi-step ones."""
    stages = tuple(s.tool_name for s in gold_steps)
    if len(stages) == 1:
        return stages[0]
    return _pipelines_by_stages().get(stages, "+".join(stages))


def is_interrelated(task: str) -> bool:
    return task in _pipelines_by_stages().values() or "+" in task


# --------------------------------------------------------------------------
# phrasing bank


def _t(task, category, subject, phrasings, held_out, media_ext=".jpg"):
    return InstructionTemplate(task, category, subject, tuple(phrasings), tuple(held_out),
                               media_ext)


DEFAULT_TEMPLATES = (
    _t("FaceRecognition", "human", IDENTITY, [
        "Can you find the person whose face is shown in {media} in {location}?",
        "Please check whether the face in {media} appears in the videos of {location}.",
        "Search the {location} cameras for the face in this photo.",
        "Is the person in {media} recorded anywhere in {location}? Use the face.",
        "Recognize this face in the {location} footage.",
        "I have a face picture ({media}). Was this person seen in {location}?",
        "Look for this face among the surveillance videos of {location}.",
        "Match the facial image {media} against the {location} video gallery.",
        "Who is this? Check the face against the videos from {location}.",
        "Find {identity} by face in {location}; the photo is attached.",
    ], [
        "A witness gave us headshot {media}. Does that face show up on {location} cameras?",
        "Run a facial match of the attached portrait over {location}.",
        "Tell me if the face from {media} was captured in {location}.",
    ]),
    _t("PersonReidentification", "human", IDENTITY, [
        "Track the pedestrian in {media} across the cameras of {location}.",
        "Re-identify the person in this full-body image in {location}.",
        "Did the person shown in {media} pass through {location}?",
        "Find this pedestrian in the {location} surveillance network.",
        "Search {location} for someone matching the outfit in {media}.",
        "Re-identify {identity} in the videos of {location}.",
        "Is the walker in this picture visible on any camera in {location}?",
        "Match the person crop {media} to the {location} cameras.",
        "Please look for this pedestrian across {location}.",
        "Find where the person in the attached image appears in {location}.",
    ], [
        "We lost sight of the person in {media}. Which {location} camera picked them up?",
        "Cross-camera search in {location} for the individual pictured.",
        "Could you spot the pedestrian from {media} somewhere in {location}?",
    ]),
    _t("GaitRecognition", "human", IDENTITY, [
        "Identify the person walking in {media} by gait in {location}.",
        "Use the walking style in this clip to find the person in {location}.",
        "Does the gait in {media} match anyone in the {location} videos?",
        "Recognize this person from how they walk, searching {location}.",
        "Find {identity} in {location} using gait recognition on {media}.",
        "The face is hidden in {media}; match the walking posture in {location}.",
        "Compare the gait in this video with the footage of {location}.",
        "Search {location} for the walker in the attached clip.",
        "Gait-match {media} against the {location} cameras.",
        "Is the person walking in this video recorded in {location}?",
    ], [
        "From the stride in {media}, can you tell whether that person was in {location}?",
        "The suspect wore a mask; identify them by walking pattern in {location}.",
        "Check the {location} recordings for someone who walks like the person in {media}.",
    ], ".mp4"),
    _t("CrowdCounting", "human", PLACE, [
        "How many people are in {location}?",
        "Count the crowd in the videos of {location}.",
        "Tell me the number of people on the {location} cameras.",
        "Estimate how crowded {location} is right now.",
        "What is the head count in {location}?",
        "Please count the pedestrians in {location}.",
        "How large is the crowd at {location}?",
        "Give me a people count for {location}.",
        "Count everyone visible in the {location} footage.",
        "Is {location} busy? Count the people there.",
    ], [
        "Roughly how many individuals can be seen in {location} at the moment?",
        "I need the crowd size for {location}.",
        "Number of persons present in {location}, please.",
    ]),
    _t("VehicleReidentification", "vehicle", VEHICLE_ID, [
        "Find the vehicle in {media} in the cameras of {location}.",
        "Re-identify this car across {location}.",
        "Did the vehicle shown in {media} drive through {location}?",
        "Search the {location} traffic cameras for this vehicle.",
        "Track {vehicle} in the videos of {location}.",
        "Match the car image {media} against {location}.",
        "Is the vehicle in this photo visible in {location}?",
        "Look for the attached vehicle in {location}.",
        "Where in {location} does the car from {media} appear?",
        "Please re-identify the vehicle in {media} in {location}.",
    ], [
        "A getaway car was photographed ({media}). Was it seen in {location}?",
        "Search {location} for a vehicle matching the attached picture.",
        "Can you spot the car from {media} on the {location} road cameras?",
    ]),
    _t("LicensePlateRecognition", "vehicle", PLATE, [
        "Read the plate in {media} and find it in {location}.",
        "Recognize the license plate in this picture in {location}.",
        "Was the plate {plate} recorded in {location}?",
        "Find the car with the plate shown in {media} in {location}.",
        "Search {location} for the license plate in the attached image.",
        "Check the plate numbers in {location} against {media}.",
        "Is the license plate from {media} visible in {location}?",
        "Look up plate {plate} in the {location} videos.",
        "Identify this license plate in {location}.",
        "Please find the plate in {media} on the {location} cameras.",
    ], [
        "A camera caught a plate ({media}). Has {location} seen that registration?",
        "Match the registration number in the attached photo with {location}.",
        "Does plate {plate} appear in any {location} recording?",
    ]),
    _t("FireSmokeDetection", "event", PLACE, [
        "Is there a fire in {location}?",
        "Check {location} for fire or smoke.",
        "Do the videos of {location} show any smoke?",
        "Detect fire in the {location} footage.",
        "Is anything burning in {location}?",
        "Please scan {location} for fire hazards.",
        "Are there signs of smoke in {location}?",
        "Check whether a fire broke out in {location}.",
        "Look for flames or smoke on the {location} cameras.",
        "Run fire and smoke detection for {location}.",
    ], [
        "Someone reported a burning smell near {location}. Any visible fire?",
        "Is {location} safe from fire at the moment?",
        "Scan the {location} feeds for smoke plumes.",
    ]),
    _t("PoseEstimation", "event", PLACE, [
        "Estimate the human poses in {location}.",
        "Extract body keypoints from the {location} videos.",
        "Get the skeletons of people in {location}.",
        "Run pose estimation on {location}.",
        "Where are the joints of the people in {location}?",
        "Detect human keypoints in the {location} footage.",
        "Give me the body poses visible in {location}.",
        "Please estimate poses for the cameras of {location}.",
        "Compute keypoints for everyone in {location}.",
        "Extract pose information from {location}.",
    ], [
        "I need skeleton data for the people filmed in {location}.",
        "Locate heads, hands and elbows of people in {location}.",
        "Produce keypoint annotations for {location}.",
    ]),
    _t("ActionRecognition", "event", IDENTITY, [
        "What action is the person in {media} performing in {location}?",
        "Recognize the activity of the person in this clip in {location}.",
        "What is {identity} doing in {location}?",
        "Classify the action of the person in {media} at {location}.",
        "Tell me the behavior of the person shown in {media} in {location}.",
        "Recognize what the person in the attached video does in {location}.",
        "Which action does the person from {media} take in {location}?",
        "Identify the activity of this person in {location}.",
        "Is the person in {media} doing anything notable in {location}?",
        "Please recognize the action in {media} for {location}.",
    ], [
        "Describe what the individual in {media} was up to in {location}.",
        "What kind of movement does the person in the clip make in {location}?",
        "Label the activity of the person from {media} seen in {location}.",
    ], ".mp4"),
    _t("SceneRecognition", "event", PLACE, [
        "What kind of scene is shown in {location}?",
        "Recognize the environment in the videos of {location}.",
        "What place do the {location} cameras show?",
        "Classify the scene at {location}.",
        "Describe the type of location filmed in {location}.",
        "Is {location} an indoor or outdoor scene? Recognize it.",
        "What is the setting of the {location} footage?",
        "Identify the scene category for {location}.",
        "Please run scene recognition on {location}.",
        "What sort of place is visible in {location}?",
    ], [
        "Tell me what environment the {location} feed is looking at.",
        "Which scene type best describes {location}?",
        "Characterize the background of the {location} videos.",
    ]),
    _t("ViolenceDetection", "event", PLACE, [
        "Is there any violence in {location}?",
        "Detect violent behavior in the videos of {location}.",
        "Are people fighting in {location}?",
        "Check {location} for violence.",
        "Is anyone being attacked in {location}?",
        "Scan the {location} footage for violent incidents.",
        "Please run violence detection for {location}.",
        "Do the cameras of {location} show any assault?",
        "Look for fights on the {location} cameras.",
        "Has any violent act happened in {location}?",
    ], [
        "We got a report of a brawl in {location}. Can you confirm it?",
        "Is the situation in {location} peaceful or violent?",
        "Flag any aggressive behavior seen in {location}.",
    ]),
    _t("AnomalyDetection", "event", PLACE, [
        "Is anything abnormal happening in {location}?",
        "Detect anomalies in the videos of {location}.",
        "Check {location} for unusual events.",
        "Analyze {location} for abnormal behavior in its scene.",
        "Is there an anomaly at {location}?",
        "Look for suspicious events in {location}.",
        "Please run anomaly detection on {location}.",
        "Does anything look wrong in the {location} footage?",
        "Find abnormal incidents in {location}.",
        "Inspect {location} for anomalies given its environment.",
    ], [
        "Anything out of the ordinary on the {location} cameras today?",
        "Give me an anomaly report for {location}.",
        "Is the {location} feed showing any irregular event?",
    ]),
    _t("ActionAnalysis", "event", IDENTITY, [
        "Analyze the actions of the person in {media} in {location}.",
        "What is the person in {media} doing in {location}? Analyze the pose first.",
        "Analyze the behavior of {identity} in {location}.",
        "Perform action analysis for the person in this clip in {location}.",
        "Extract poses and recognize the action of the person in {media} at {location}.",
        "Analyze what the person from {media} does in {location}.",
        "Break down the movement of the person in {media} in {location}.",
        "Run a full action analysis on {location} for the attached person.",
        "Use skeletons to analyze the activity of the person in {media} in {location}.",
        "Study the actions of this person in {location}.",
    ], [
        "Give me a behavior analysis of the individual in {media} around {location}.",
        "How is the person from the clip acting in {location}? Analyze it step by step.",
        "Analyze body movement and action of the person in {media} filmed in {location}.",
    ], ".mp4"),
)


# --------------------------------------------------------------------------
# generation


@dataclass(frozen=True)
class GenConfig:
    per_tool_count: int = 10
    pipeline_count: int = 10
    seed: int = 0
    split_ratio: tuple[int, int] = (49, 1)
    hit_rate: float = 0.5
    pool: str = TRAIN

    def __post_init__(self):
        if self.per_tool_count < 0 or self.pipeline_count < 0:
            raise ValueError("counts must be non-negative")
        if len(self.split_ratio) != 2 or min(self.split_ratio) <= 0:
            raise ValueError("split ratio parts must be positive")
        if not 0.0 <= self.hit_rate <= 1.0:
            raise ValueError("hit_rate must be in [0, 1]")
        if self.pool not in (TRAIN, TEST):
            raise ValueError("pool must be 'train' or 'test'")


def partition_locations(base: KnowledgeBase) -> tuple[list[str], list[str]]:
    """Split locations into (train, test) pools: every fifth sorted name is held out."""
    names = base.list_locations()
    test = [n for i, n in enumerate(names) if i % 5 == 4]
    train = [n for i, n in enumerate(names) if i % 5 != 4]
    return train, test


# Hit predicates per task over a fixture (None: the task has no miss outcome).
def _has_action(fx):
    return bool(fx.actions)


_HIT = {
    "FaceRecognition": lambda fx: bool(fx.identities),
    "PersonReidentification": lambda fx: bool(fx.identities),
    "GaitRecognition": lambda fx: bool(fx.identities),
    "ActionRecognition": _has_action,
    "ActionAnalysis": lambda fx: fx.poses_available and _has_action(fx),
    "VehicleReidentification": lambda fx: bool(fx.vehicles),
    "LicensePlateRecognition": lambda fx: bool(fx.plates),
    "FireSmokeDetection": lambda fx: fx.fire_present,
    "ViolenceDetection": lambda fx: fx.violence_present,
    "AnomalyDetection": lambda fx: fx.violence_present,
    "PoseEstimation": lambda fx: fx.poses_available,
    "CrowdCounting": None,
    "SceneRecognition": None,
}


def _hit_subjects(task, subject, fx) -> list[str]:
    if subject == IDENTITY:
        return sorted(fx.actions) if task in ("ActionRecognition", "ActionAnalysis") \
            else sorted(fx.identities)
    if subject == VEHICLE_ID:
        return sorted(fx.vehicles)
    if subject == PLATE:
        return sorted(fx.plates)
    return []


class _Generator:
    def __init__(self, base, registry, templates, cfg, paraphrase):
        self.base, self.registry, self.cfg = base, registry, cfg
        self.rng = random.Random(cfg.seed)
        self.paraphrase = paraphrase
        by_task = {t.tool_or_pipeline: t for t in templates}
        tasks = list(registry.names) + list(registry.pipelines)
        missing = [t for t in tasks if t not in by_task]
        if missing:
            raise GenerationError(f"no templates for {missing}")
        self.templates = by_task
        train, test = partition_locations(base)
        self.locations = test if cfg.pool == TEST else train
        if not self.locations:
            raise GenerationError(f"no locations in the {cfg.pool} pool")
        pools = {IDENTITY: set(), VEHICLE_ID: set(), PLATE: set()}
        for e in base:
            pools[IDENTITY] |= e.fixture.identities
            pools[VEHICLE_ID] |= e.fixture.vehicles
            pools[PLATE] |= e.fixture.plates
        self.subject_pool = {k: sorted(v) for k, v in pools.items()}

    def stages(self, task) -> tuple[str, ...]:
        pipe = self.registry.pipelines.get(task)
        return pipe.stages if pipe else (task,)

    def _miss_subject(self, subject, fx, task):
        present = set(_hit_subjects(task, subject, fx))
        candidates = [s for s in self.subject_pool[subject] if s not in present]
        if candidates:
            return self.rng.choice(candidates)
        return f"unknown_{self.rng.randrange(10_000):04d}"

    def record(self, task: str):
        tpl = self.templates[task]
        rng = self.rng
        want_hit = rng.random() < self.cfg.hit_rate
        hit_fn = _HIT.get(task)
        entries = [self.base.lookup(l) for l in self.locations]
        if hit_fn is not None:
            matching = [e for e in entries if bool(hit_fn(e.fixture)) == want_hit]
            if matching:
                entries = matching
        entry = rng.choice(entries)
        fx, location = entry.fixture, entry.location

        slots = {"location": location}
        media = None
        if tpl.subject != PLACE:
            hits = _hit_subjects(task, tpl.subject, fx)
            if want_hit and hits:
                ident = rng.choice(hits)
            else:
                ident = self._miss_subject(tpl.subject, fx, task)
            media = ident + tpl.media_ext
            slots.update({tpl.subject: ident, "media": media})
        bank = tpl.held_out if self.cfg.pool == TEST else tpl.phrasings
        if not bank:
            raise GenerationError(f"template {task}: empty phrasing bank for {self.cfg.pool}")
        phrasing = rng.choice(bank)
        try:
            text = phrasing.format(**{k: slots[k] for k in SLOTS[tpl.subject] if k in slots})
        except KeyError as exc:
            raise GenerationError(
                f"template {task}: slot {{{exc.args[0]}}} in {phrasing!r} cannot be filled") from None
        if self.paraphrase is not None:
            text = self.paraphrase(text, rng)

        steps = []
        observations = []
        for name in self.stages(task):
            spec = self.registry.spec(name)
            needs_media = spec.input_shape != "location-only"
            tool_input = f"{media}, {location}" if needs_media else location
            if needs_media and media is None:
                raise GenerationError(f"template {task}: stage {name} needs query media")
            steps.append(ToolCall(name, tool_input))
            observations.append(invoke(self.registry, self.base, name, tool_input).text)
        final = f"Results for {location}: " + "; ".join(observations) + "."
        return text, media, tpl.category, steps, final


def generate(base: KnowledgeBase, registry: Registry, templates=DEFAULT_TEMPLATES,
             cfg: GenConfig = GenConfig(),
             paraphrase: Callable[[str, random.Random], str] | None = None) -> list[DatasetRecord]:
    """Generate ``11 * per_tool_count + 2 * pipeline_count`` records, seed-deterministic.

    ``paraphrase`` optionally rewrites each instantiated query (e.g. an
    external LLM paraphraser); it receives the generator RNG.
    """
    gen = _Generator(base, registry, templates, cfg, paraphrase)
    tasks = [n for n in registry.names for _ in range(cfg.per_tool_count)]
    tasks += [p for p in registry.pipelines for _ in range(cfg.pipeline_count)]
    gen.rng.shuffle(tasks)
    split = TEST if cfg.pool == TEST else TRAIN
    out = []
    for i, task in enumerate(tasks):
        text, media, category, steps, final = gen.record(task)
        query = Query(f"{cfg.pool}-{cfg.seed}-{i:06d}", text, media)
        out.append(DatasetRecord(query, category, tuple(steps), final, split))
    return out


def _round_half_up(x: Fraction) -> int:
    return int(x + Fraction(1, 2))


def split(records: Sequence[DatasetRecord], ratio: tuple[int, int] = (49, 1),
          seed: int = 0) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Stratified train/validation split.

    The validation size is ``round(n * val / (train + val))``. It is shared
    across tasks by largest remainder, with every task getting at least one
    validation record whenever the validation slice has room for all tasks.
    """
    t, v = ratio
    if t <= 0 or v <= 0:
        raise ValueError("ratio parts must be positive")
    n = len(records)
    n_val = _round_half_up(Fraction(n * v, t + v))
    strata: dict[str, list[int]] = defaultdict(list)
    for i, r in enumerate(records):
        strata[r.task].append(i)
    names = sorted(strata)

    exact = {s: Fraction(len(strata[s]) * n_val, n) if n else Fraction(0) for s in names}
    alloc = {s: int(exact[s]) for s in names}
    leftover = n_val - sum(alloc.values())
    by_remainder = sorted(names, key=lambda s: (-(exact[s] - alloc[s]), s))
    for s in by_remainder[:leftover]:
        alloc[s] += 1
    if n_val >= len(names):
        for s in names:
            while alloc[s] == 0:
                donor = max((d for d in names if alloc[d] > 1), key=lambda d: (alloc[d], d))
                alloc[donor] -= 1
                alloc[s] += 1

    rng = random.Random(seed)
    val_idx = set()
    for s in names:
        val_idx.update(rng.sample(strata[s], alloc[s]))
    train = [replace(r, split=TRAIN) for i, r in enumerate(records) if i not in val_idx]
    val = [replace(r, split=VAL) for i, r in enumerate(records) if i in val_idx]
    return train, val


# --------------------------------------------------------------------------
# files


def record_to_dict(r: DatasetRecord) -> dict:
    return {
        "query_id": r.query.id,
        "query_text": r.query.text,
        "media_ref": r.query.media_ref,
        "category": r.category,
        "gold_steps": [{"decision": True, "tool": s.tool_name, "input": s.tool_input}
                       for s in r.gold_steps],
        "gold_final": r.gold_final,
        "split": r.split,
    }


_RECORD_KEYS = ("query_id", "query_text", "media_ref", "category", "gold_steps",
                "gold_final", "split")


def record_from_dict(d: dict) -> DatasetRecord:
    if not isinstance(d, dict) or set(d) != set(_RECORD_KEYS):
        raise ValueError(f"record must have keys {list(_RECORD_KEYS)}")
    steps = []
    for s in d["gold_steps"]:
        if not isinstance(s, dict) or s.get("decision") is not True or set(s) != {"decision", "tool", "input"}:
            raise ValueError("gold steps are {decision: true, tool, input}")
        steps.append(ToolCall(s["tool"], s["input"]))
    if d["media_ref"] is not None and not isinstance(d["media_ref"], str):
        raise ValueError("media_ref must be a string or null")
    return DatasetRecord(Query(d["query_id"], d["query_text"], d["media_ref"]),
                         d["category"], tuple(steps), d["gold_final"], d["split"])


def write_dataset(records, path: str | PathLike) -> None:
    write_jsonl((record_to_dict(r) for r in records), path)


def read_dataset(path: str | PathLike) -> list[DatasetRecord]:
    out = []
    for lineno, obj in read_jsonl(path):
        try:
            out.append(record_from_dict(obj))
        except (ValueError, TypeError, KeyError) as exc:
            raise TraceFileError(lineno, str(exc)) from None
    return out


def sft_pairs(record: DatasetRecord, registry: Registry, base: KnowledgeBase) -> list[dict]:
    """One (prompt, target) pair per gold step and one for the final step."""
    ctx = make_context(registry.specs, base.list_locations(), record.query)
    pairs = []
    for action in record.gold_actions:
        pairs.append({"input": build_prompt(ctx), "target": render_step(action)})
        if isinstance(action, ToolCall):
            obs = invoke(registry, base, action.tool_name, action.tool_input)
            ctx = history_append(ctx, action, obs.text)
    return pairs


def export_sft(records, path: str | PathLike, registry: Registry, base: KnowledgeBase) -> int:
    """Write supervised fine-tuning pairs; returns the number written."""
    count = 0

    def rows():
        nonlocal count
        for r in records:
            for pair in sft_pairs(r, registry, base):
                count += 1
                yield pair

    write_jsonl(rows(), path)
    return count

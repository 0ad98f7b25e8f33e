"""Video knowledge base: city-level locations mapped to synthetic fixtures.

Each location stands for the surveillance footage recorded there. Instead
of video, a location carries a ``WorldFixture`` that fixes what every
simulated vision tool will report for it.

Fixture files are JSON Lines, one location per line::

    {"location": "Cairo", "media_ref": "video/cairo.mp4",
     "identities": ["suspect_A"], "plates": ["AB123"], "vehicles": ["car_9"],
     "crowd_count": 42, "scene_label": "street", "fire_present": false,
     "violence_present": true, "actions": {"suspect_A": "running"},
     "poses_available": true}

All fields are required. Lists are written sorted.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from importlib import resources
from os import PathLike
from types import MappingProxyType
from typing import Mapping

from .react_format import TraceFileError, read_jsonl, write_jsonl

DEFAULT_SEED = 2024
DEFAULT_SIZE = 125

SCENE_LABELS = (
    "street", "mall", "parking lot", "subway station", "park", "office",
    "airport terminal", "campus", "highway", "market",
)
ACTION_LABELS = (
    "running", "walking", "fighting", "falling", "waving", "sitting",
    "jumping", "climbing",
)


class KnowledgeBaseError(ValueError):
    pass


@dataclass(frozen=True)
class WorldFixture:
    identities: frozenset[str] = frozenset()
    plates: frozenset[str] = frozenset()
    vehicles: frozenset[str] = frozenset()
    crowd_count: int = 0
    scene_label: str = "street"
    fire_present: bool = False
    violence_present: bool = False
    actions: Mapping[str, str] = field(default_factory=dict)
    poses_available: bool = False

    def __post_init__(self):
        for name in ("identities", "plates", "vehicles"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        object.__setattr__(self, "actions", MappingProxyType(dict(self.actions)))
        if not isinstance(self.crowd_count, int) or isinstance(self.crowd_count, bool):
            raise ValueError("crowd_count must be an integer")
        if self.crowd_count < len(self.identities):
            raise ValueError("crowd_count is smaller than the number of identities")
        stray = set(self.actions) - self.identities
        if stray:
            raise ValueError(f"actions for unknown identities {sorted(stray)}")
        for ident in self.identities | self.plates | self.vehicles:
            # media refs name their subject by the text before the first '.'
            if not ident or "." in ident or "," in ident or ident != ident.strip():
                raise ValueError(f"invalid subject id {ident!r}")

    def __hash__(self):
        return hash((self.identities, self.plates, self.vehicles, self.crowd_count,
                     self.scene_label, self.fire_present, self.violence_present,
                     tuple(sorted(self.actions.items())), self.poses_available))

    def __eq__(self, other):
        if not isinstance(other, WorldFixture):
            return NotImplemented
        return fixture_to_dict(self) == fixture_to_dict(other)


@dataclass(frozen=True)
class VideoEntry:
    location: str
    media_ref: str
    fixture: WorldFixture


class KnowledgeBase:
    """Immutable index of video entries keyed by location name."""

    def __init__(self, entries=()):
        by_loc: dict[str, VideoEntry] = {}
        refs: set[str] = set()
        for e in entries:
            if e.location in by_loc:
                raise KnowledgeBaseError(f"duplicate location {e.location!r}")
            if e.media_ref in refs:
                raise KnowledgeBaseError(f"duplicate media_ref {e.media_ref!r} ({e.location})")
            by_loc[e.location] = e
            refs.add(e.media_ref)
        self._entries = MappingProxyType(by_loc)
        self._folded = {loc.casefold(): e for loc, e in by_loc.items()}
        self._sorted = tuple(sorted(by_loc))

    def __len__(self):
        return len(self._entries)

    def __iter__(self):
        return (self._entries[loc] for loc in self._sorted)

    def __contains__(self, location):
        return location in self._entries

    def __eq__(self, other):
        if not isinstance(other, KnowledgeBase):
            return NotImplemented
        return dict(self._entries) == dict(other._entries)

    def __repr__(self):
        return f"KnowledgeBase({len(self)} locations)"

    def lookup(self, location: str, lenient: bool = False) -> VideoEntry | None:
        loc = location.strip()
        entry = self._entries.get(loc)
        if entry is None and lenient:
            entry = self._folded.get(loc.casefold())
        return entry

    def list_locations(self) -> list[str]:
        return list(self._sorted)


def lookup(base: KnowledgeBase, location: str, lenient: bool = False) -> VideoEntry | None:
    return base.lookup(location, lenient)


def list_locations(base: KnowledgeBase) -> list[str]:
    return base.list_locations()


# --------------------------------------------------------------------------
# serialization

_FIELDS = ("location", "media_ref", "identities", "plates", "vehicles", "crowd_count",
           "scene_label", "fire_present", "violence_present", "actions", "poses_available")


def fixture_to_dict(fx: WorldFixture) -> dict:
    return {
        "identities": sorted(fx.identities),
        "plates": sorted(fx.plates),
        "vehicles": sorted(fx.vehicles),
        "crowd_count": fx.crowd_count,
        "scene_label": fx.scene_label,
        "fire_present": fx.fire_present,
        "violence_present": fx.violence_present,
        "actions": dict(sorted(fx.actions.items())),
        "poses_available": fx.poses_available,
    }


def entry_to_dict(entry: VideoEntry) -> dict:
    return {"location": entry.location, "media_ref": entry.media_ref,
            **fixture_to_dict(entry.fixture)}


def _check_types(d: dict) -> None:
    def strings(name):
        v = d[name]
        if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
            raise ValueError(f"{name} must be a list of strings")
    for name in ("identities", "plates", "vehicles"):
        strings(name)
    for name in ("location", "media_ref", "scene_label"):
        if not isinstance(d[name], str) or not d[name].strip():
            raise ValueError(f"{name} must be a non-empty string")
    for name in ("fire_present", "violence_present", "poses_available"):
        if not isinstance(d[name], bool):
            raise ValueError(f"{name} must be a boolean")
    acts = d["actions"]
    if not isinstance(acts, dict) or not all(isinstance(v, str) for v in acts.values()):
        raise ValueError("actions must map identity ids to strings")
    if d["location"] != d["location"].strip() or "," in d["location"]:
        raise ValueError("location must be trimmed and contain no comma")


def entry_from_dict(d: dict) -> VideoEntry:
    if not isinstance(d, dict):
        raise ValueError("record must be an object")
    missing = [f for f in _FIELDS if f not in d]
    extra = [k for k in d if k not in _FIELDS]
    if missing or extra:
        raise ValueError(f"missing fields {missing}, unknown fields {extra}")
    _check_types(d)
    fx = WorldFixture(
        identities=d["identities"], plates=d["plates"], vehicles=d["vehicles"],
        crowd_count=d["crowd_count"], scene_label=d["scene_label"],
        fire_present=d["fire_present"], violence_present=d["violence_present"],
        actions=d["actions"], poses_available=d["poses_available"],
    )
    return VideoEntry(d["location"], d["media_ref"], fx)


def load(path: str | PathLike) -> KnowledgeBase:
    """Load a fixture file, verifying every invariant.

    Raises ``KnowledgeBaseError`` naming the offending line and location.
    """
    entries = []
    seen: set[str] = set()
    try:
        rows = read_jsonl(path)
    except TraceFileError as exc:
        raise KnowledgeBaseError(str(exc)) from None
    for lineno, obj in rows:
        name = obj.get("location", "?") if isinstance(obj, dict) else "?"
        try:
            entry = entry_from_dict(obj)
        except (ValueError, TypeError) as exc:
            raise KnowledgeBaseError(f"line {lineno} ({name}): {exc}") from None
        if entry.location in seen:
            raise KnowledgeBaseError(f"line {lineno}: duplicate location {entry.location!r}")
        seen.add(entry.location)
        entries.append(entry)
    return KnowledgeBase(entries)


def write(base: KnowledgeBase, path: str | PathLike) -> None:
    write_jsonl((entry_to_dict(e) for e in base), path)


# --------------------------------------------------------------------------
# shipped bases

CAIRO = WorldFixture(
    identities={"suspect_A"}, plates={"AB123"}, vehicles={"car_9"}, crowd_count=42,
    scene_label="street", fire_present=False, violence_present=True,
    actions={"suspect_A": "running"}, poses_available=True,
)
PARIS = WorldFixture(
    crowd_count=7, scene_label="mall", fire_present=True, violence_present=False,
    poses_available=True,
)


def _media_ref(location: str) -> str:
    return "video/" + location.lower().replace(" ", "_").replace("'", "") + ".mp4"


def demo_base() -> KnowledgeBase:
    """Two-city world (Cairo, Paris) used by the examples and tests."""
    return KnowledgeBase([
        VideoEntry("Cairo", _media_ref("Cairo"), CAIRO),
        VideoEntry("Paris", _media_ref("Paris"), PARIS),
    ])


# Real city names; the fixtures attached to them are invented.
CITY_NAMES = (
    "Abu Dhabi", "Accra", "Addis Ababa", "Adelaide", "Algiers", "Almaty", "Amsterdam",
    "Ankara", "Athens", "Auckland", "Baghdad", "Baku", "Bangkok", "Barcelona", "Beijing",
    "Beirut", "Belgrade", "Berlin", "Bogota", "Boston", "Brasilia", "Brisbane", "Brussels",
    "Bucharest", "Budapest", "Buenos Aires", "Cairo", "Calgary", "Cape Town", "Caracas",
    "Casablanca", "Chengdu", "Chicago", "Chongqing", "Copenhagen", "Dakar", "Dallas",
    "Damascus", "Delhi", "Denver", "Dhaka", "Doha", "Dubai", "Dublin", "Edinburgh",
    "Florence", "Frankfurt", "Geneva", "Guangzhou", "Hamburg", "Hangzhou", "Hanoi",
    "Havana", "Helsinki", "Hong Kong", "Houston", "Istanbul", "Jakarta", "Jerusalem",
    "Johannesburg", "Kabul", "Karachi", "Kathmandu", "Kiev", "Kuala Lumpur", "Kyoto",
    "Lagos", "Lahore", "Lima", "Lisbon", "London", "Los Angeles", "Lyon", "Madrid",
    "Manila", "Marseille", "Melbourne", "Mexico City", "Miami", "Milan", "Montreal",
    "Moscow", "Mumbai", "Munich", "Nairobi", "Nanjing", "Naples", "New York", "Osaka",
    "Oslo", "Ottawa", "Paris", "Perth", "Philadelphia", "Prague", "Quito", "Riga",
    "Rio de Janeiro", "Riyadh", "Rome", "San Francisco", "Santiago", "Sao Paulo",
    "Seattle", "Seoul", "Shanghai", "Shenzhen", "Singapore", "Sofia", "Stockholm",
    "Sydney", "Taipei", "Tashkent", "Tehran", "Tianjin", "Tokyo", "Toronto", "Tunis",
    "Vancouver", "Venice", "Vienna", "Warsaw", "Wuhan", "Xian", "Zurich",
)


def _random_fixture(rng: random.Random, serial: int) -> WorldFixture:
    n_people = rng.choice((0, 0, 1, 2, 3))
    identities = {f"person_{serial:03d}{chr(97 + i)}" for i in range(n_people)}
    n_plates = rng.choice((0, 0, 1, 2))
    plates = {f"{chr(65 + rng.randrange(26))}{chr(65 + rng.randrange(26))}"
              f"{rng.randrange(1000):03d}" for _ in range(n_plates)}
    n_cars = rng.choice((0, 0, 1, 2))
    vehicles = {f"car_{serial:03d}{chr(97 + i)}" for i in range(n_cars)}
    actions = {i: rng.choice(ACTION_LABELS) for i in sorted(identities) if rng.random() < 0.6}
    return WorldFixture(
        identities=identities, plates=plates, vehicles=vehicles,
        crowd_count=len(identities) + rng.randrange(200),
        scene_label=rng.choice(SCENE_LABELS),
        fire_present=rng.random() < 0.3,
        violence_present=rng.random() < 0.3,
        actions=actions,
        poses_available=rng.random() < 0.75,
    )


def generate_default_base(seed: int = DEFAULT_SEED, size: int = DEFAULT_SIZE) -> KnowledgeBase:
    """Seeded synthetic base; Cairo and Paris always carry the demo fixtures."""
    if not 2 <= size <= len(CITY_NAMES):
        raise ValueError(f"size must be in [2, {len(CITY_NAMES)}]")
    rng = random.Random(seed)
    others = [c for c in CITY_NAMES if c not in ("Cairo", "Paris")]
    chosen = sorted(rng.sample(others, size - 2) + ["Cairo", "Paris"])
    entries = []
    for serial, city in enumerate(chosen):
        if city == "Cairo":
            fx = CAIRO
        elif city == "Paris":
            fx = PARIS
        else:
            fx = _random_fixture(rng, serial)
        entries.append(VideoEntry(city, _media_ref(city), fx))
    return KnowledgeBase(entries)


DEFAULT_BASE_FILE = "knowledge_base.jsonl"


def default_base_path():
    return resources.files("viotbench").joinpath("data", DEFAULT_BASE_FILE)


def default_base() -> KnowledgeBase:
    """The shipped 125-location base (regenerable with ``generate_default_base``)."""
    with resources.as_file(default_base_path()) as p:
        return load(p)

import json

import pytest
from hypothesis import given, strategies as st

from viotbench.knowledge import (
    DEFAULT_SIZE, KnowledgeBase, KnowledgeBaseError, VideoEntry, WorldFixture,
    default_base, default_base_path, generate_default_base, list_locations, load,
    lookup, write,
)


def test_default_base_has_125_locations(world):
    assert len(world) == DEFAULT_SIZE == 125


def test_shipped_file_matches_generator(world):
    assert world == generate_default_base()


def test_generator_is_seed_deterministic():
    assert generate_default_base(5) == generate_default_base(5)
    assert generate_default_base(5) != generate_default_base(6)


def test_demo_fixture_lookups(demo):
    cairo = lookup(demo, "Cairo")
    assert cairo.fixture.violence_present is True
    assert cairo.fixture.identities == {"suspect_A"}
    assert cairo.fixture.actions == {"suspect_A": "running"}
    assert lookup(demo, "Paris").fixture.fire_present is True
    assert lookup(demo, "Atlantis") is None
    assert lookup(demo, "  Cairo ") is cairo


def test_lenient_lookup(demo):
    assert lookup(demo, "cairo") is None
    assert lookup(demo, "cairo", lenient=True) is lookup(demo, "Cairo")


def test_list_locations(demo, world):
    assert list_locations(KnowledgeBase()) == []
    assert list_locations(demo) == ["Cairo", "Paris"]
    names = list_locations(world)
    assert names == sorted(names) and len(names) == len(world)
    assert "Cairo" in names and "Paris" in names
    assert all(lookup(world, n) is not None for n in names)


def test_empty_file(tmp_path):
    p = tmp_path / "kb.jsonl"
    p.write_text("")
    assert len(load(p)) == 0


def _cairo_line():
    return json.dumps({"location": "Cairo", "media_ref": "v/c.mp4", "identities": [],
                       "plates": [], "vehicles": [], "crowd_count": 1, "scene_label": "street",
                       "fire_present": False, "violence_present": False, "actions": {},
                       "poses_available": True})


def test_duplicate_location_is_an_error(tmp_path):
    p = tmp_path / "kb.jsonl"
    p.write_text(_cairo_line() + "\n" + _cairo_line().replace("v/c.mp4", "v/d.mp4") + "\n")
    with pytest.raises(KnowledgeBaseError, match="Cairo"):
        load(p)


@pytest.mark.parametrize("patch,msg", [
    ({"crowd_count": -1}, "crowd_count"),
    ({"identities": ["a", "b"], "crowd_count": 1}, "crowd_count"),
    ({"actions": {"ghost": "running"}}, "unknown identities"),
    ({"fire_present": "yes"}, "boolean"),
    ({"identities": ["bad.id"], "crowd_count": 5}, "subject id"),
])
def test_malformed_fixture_names_entry(tmp_path, patch, msg):
    rec = json.loads(_cairo_line())
    rec.update(patch)
    p = tmp_path / "kb.jsonl"
    p.write_text(json.dumps(rec) + "\n")
    with pytest.raises(KnowledgeBaseError, match=msg) as exc:
        load(p)
    assert "Cairo" in str(exc.value)


def test_missing_field(tmp_path):
    rec = json.loads(_cairo_line())
    del rec["scene_label"]
    p = tmp_path / "kb.jsonl"
    p.write_text(json.dumps(rec) + "\n")
    with pytest.raises(KnowledgeBaseError, match="scene_label"):
        load(p)


def test_file_round_trip(tmp_path, world, demo):
    for base in (world, demo, KnowledgeBase()):
        p = tmp_path / "kb.jsonl"
        write(base, p)
        assert load(p) == base


@given(st.integers(0, 10_000), st.integers(2, 125))
def test_round_trip_generated(tmp_path_factory, seed, size):
    base = generate_default_base(seed, size)
    p = tmp_path_factory.mktemp("kb") / "kb.jsonl"
    write(base, p)
    assert load(p) == base


def test_fixture_invariants_hold_on_default_base(world):
    for e in world:
        assert e.fixture.crowd_count >= len(e.fixture.identities)
        assert set(e.fixture.actions) <= e.fixture.identities


def test_duplicate_media_ref_rejected():
    fx = WorldFixture()
    with pytest.raises(KnowledgeBaseError):
        KnowledgeBase([VideoEntry("A", "m", fx), VideoEntry("B", "m", fx)])


def test_default_base_path_exists():
    assert default_base_path().is_file()
    assert default_base() == generate_default_base()

import json

import pytest

from narrative_apprentice import (
    StorySyntaxError,
    StoryValidationError,
    load_world,
    serialize_world,
)
from conftest import make_world


def test_sample_story_has_the_two_endings(sample_world):
    assert sample_world.endings == ("End1_FindEvilGod", "End2_DiscoverBookInSewers")


def test_sample_story_matches_schema(sample_world):
    import jsonschema
    from importlib import resources
    import narrative_apprentice

    schema = json.loads(resources.files("narrative_apprentice")
                        .joinpath("data/story.schema.v1.json").read_text("utf-8"))
    doc = json.loads(narrative_apprentice.sample_story_text())
    jsonschema.validate(doc, schema)


def test_minimal_world_is_valid(minimal_world):
    assert minimal_world.endings == ("END_Here",)
    assert len(minimal_world.locations) == 1


def test_round_trip_identity(sample_world, toy_world, chain_world, minimal_world):
    for w in (sample_world, toy_world, chain_world, minimal_world):
        assert load_world(serialize_world(w)) == w


def test_bad_json_reports_line():
    with pytest.raises(StorySyntaxError) as e:
        load_world('{\n  "schema_version": "1",\n  oops\n}')
    assert e.value.line == 3


def test_missing_key_is_syntax_error():
    with pytest.raises(StorySyntaxError, match="start_location"):
        load_world(json.dumps({
            "schema_version": "1", "locations": [], "objects": [],
            "characters": [], "topics": [], "plot_points": []}))


def test_wrong_schema_version_rejected():
    with pytest.raises(StorySyntaxError, match="schema_version"):
        load_world(json.dumps({"schema_version": "2"}))


def _tiny(**overrides):
    doc = {
        "start_location": "a",
        "locations": [{"id": "a", "adjacent": ["b"]}, {"id": "b", "adjacent": ["a"]}],
        "objects": [],
        "characters": [],
        "topics": [],
        "plot_points": [{"id": "E", "trigger": {"at_location": "b"}, "is_ending": True}],
    }
    doc.update(overrides)
    return doc


def test_prerequisite_cycle_detected():
    doc = _tiny(plot_points=[
        {"id": "A", "trigger": {"at_location": "a"}, "prerequisites": ["B"]},
        {"id": "B", "trigger": {"at_location": "b"}, "prerequisites": ["A"]},
        {"id": "E", "trigger": {"at_location": "b"}, "is_ending": True},
    ])
    with pytest.raises(StoryValidationError, match="cyclic"):
        make_world(doc)


def test_asymmetric_adjacency_detected():
    doc = _tiny(locations=[
        {"id": "a", "adjacent": ["b"]},
        {"id": "b", "adjacent": []},
    ])
    with pytest.raises(StoryValidationError, match="asymmetric"):
        make_world(doc)


def test_dangling_reference_named():
    doc = _tiny(plot_points=[
        {"id": "E", "trigger": {"object_seen": "ghost"}, "is_ending": True},
    ])
    with pytest.raises(StoryValidationError, match="ghost"):
        make_world(doc)


def test_locked_without_key_rejected():
    doc = _tiny(objects=[{"id": "box", "location": "a", "can_open": True, "locked": True}])
    with pytest.raises(StoryValidationError, match="key"):
        make_world(doc)


def test_duplicate_id_rejected():
    doc = _tiny(objects=[{"id": "box", "location": "a"}, {"id": "box", "location": "b"}])
    with pytest.raises(StoryValidationError, match="duplicate"):
        make_world(doc)


def test_no_ending_rejected():
    doc = _tiny(plot_points=[{"id": "P", "trigger": {"at_location": "b"}}])
    with pytest.raises(StoryValidationError, match="ending"):
        make_world(doc)


def test_object_in_two_containers_rejected():
    doc = _tiny(objects=[
        {"id": "box1", "location": "a", "can_open": True, "contents": ["coin"]},
        {"id": "box2", "location": "b", "can_open": True, "contents": ["coin"]},
        {"id": "coin", "can_take": True},
    ])
    with pytest.raises(StoryValidationError, match="coin"):
        make_world(doc)


def test_sold_object_must_be_held_by_seller():
    doc = _tiny(
        objects=[{"id": "lamp", "location": "a"}],
        characters=[{"id": "m", "location": "a", "sells": ["lamp"]}],
    )
    with pytest.raises(StoryValidationError, match="lamp"):
        make_world(doc)


def test_validation_is_total_no_partial_world():
    # A malformed doc never yields a WorldSpec: either StorySyntaxError or
    # StoryValidationError, and nothing else.
    bad_docs = [
        "not json at all",
        json.dumps({"schema_version": "1"}),
        json.dumps(_tiny(start_location="nowhere", schema_version="1")),
    ]
    for src in bad_docs:
        with pytest.raises((StorySyntaxError, StoryValidationError)):
            load_world(src)

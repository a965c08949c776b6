import json

import pytest

from narrative_apprentice import load_sample_story, load_world


@pytest.fixture(scope="session")
def sample_world():
    return load_sample_story()


def make_world(doc: dict):
    base = {"schema_version": "1"}
    base.update(doc)
    return load_world(json.dumps(base))


@pytest.fixture(scope="session")
def chain_world():
    """Three rooms in a line; a mid plot point at B and an ending at C.
    Small enough for by-hand soft-value arithmetic."""
    return make_world({
        "start_location": "A",
        "locations": [
            {"id": "A", "adjacent": ["B"]},
            {"id": "B", "adjacent": ["A", "C"]},
            {"id": "C", "adjacent": ["B"]},
        ],
        "objects": [],
        "characters": [],
        "topics": [],
        "plot_points": [
            {"id": "MID", "trigger": {"at_location": "B"}},
            {"id": "END", "trigger": {"at_location": "C"}, "is_ending": True},
        ],
    })


@pytest.fixture(scope="session")
def toy_world():
    """Four rooms, a key/box/biscuit chain and one character; small enough to
    enumerate every reachable state exhaustively."""
    return make_world({
        "start_location": "yard",
        "locations": [
            {"id": "yard", "adjacent": ["porch"]},
            {"id": "porch", "adjacent": ["yard", "kitchen"]},
            {"id": "kitchen", "adjacent": ["porch", "pantry"]},
            {"id": "pantry", "adjacent": ["kitchen"]},
        ],
        "objects": [
            {"id": "brass_key", "location": "porch", "can_take": True},
            {"id": "tin_box", "location": "kitchen", "can_open": True,
             "locked": True, "key_id": "brass_key", "contents": ["biscuit"]},
            {"id": "biscuit", "can_take": True},
        ],
        "characters": [
            {"id": "cook", "location": "kitchen", "topics_responded": ["weather"]},
        ],
        "topics": [
            {"id": "weather"},
        ],
        "plot_points": [
            {"id": "PP_KeyFound", "trigger": {"in_inventory": "brass_key"}},
            {"id": "PP_Snack", "trigger": {"in_inventory": "biscuit"},
             "prerequisites": ["PP_KeyFound"]},
            {"id": "END_Fed", "trigger": {"last_action": {"kind": "give", "target": "biscuit"}},
             "prerequisites": ["PP_Snack"], "is_ending": True},
        ],
    })


@pytest.fixture(scope="session")
def minimal_world():
    return make_world({
        "start_location": "room",
        "locations": [{"id": "room", "adjacent": []}],
        "objects": [],
        "characters": [],
        "topics": [],
        "plot_points": [
            {"id": "END_Here", "trigger": {"at_location": "room"}, "is_ending": True},
        ],
    })

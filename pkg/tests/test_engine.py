import pytest

from narrative_apprentice import (
    ActionInstance as A,
    NotApplicableError,
    ReplayError,
    applicable_actions,
    apply_action,
    initial_state,
    replay,
    serialize_state,
)
from narrative_apprentice.engine import (
    ending_reached,
    inventory,
    is_terminal,
    is_visible,
    known_topics,
    locations_available,
    state_key,
)

END1_PATH = [
    A("goto", "manor_hall"), A("goto", "study"), A("open", "writing_desk"),
    A("take", "silver_locket"), A("goto", "manor_hall"), A("goto", "harbor_square"),
    A("give", "silver_locket"), A("take", "iron_key"), A("goto", "manor_hall"),
    A("goto", "cellar"), A("unlock", "black_chest", key="iron_key"),
    A("open", "black_chest"), A("take", "idol_of_the_deep"), A("use", "idol_of_the_deep"),
]

END2_PATH = [
    A("say", "old_family"), A("buy", "storm_lantern"), A("goto", "manor_hall"),
    A("goto", "study"), A("open", "writing_desk"), A("take", "silver_locket"),
    A("goto", "manor_hall"), A("goto", "harbor_square"), A("give", "silver_locket"),
    A("take", "iron_key"), A("goto", "manor_hall"), A("goto", "cellar"),
    A("unlock", "black_chest", key="iron_key"), A("open", "black_chest"),
    A("examine", "harrow_journal"), A("goto", "manor_hall"), A("goto", "harbor_square"),
    A("say", "hidden_sewer"), A("goto", "manor_hall"), A("goto", "cellar"),
    A("goto", "sewer_tunnel"), A("use", "storm_lantern"), A("examine", "mildewed_book"),
]


def test_initial_state(sample_world):
    s = initial_state(sample_world)
    assert s.current_location == "harbor_square"
    assert inventory(sample_world, s) == ()
    assert s.visited_plots == frozenset()
    assert set(locations_available(sample_world, s)) == {"harbor_square", "manor_hall"}


def test_initial_state_minimal(minimal_world):
    s = initial_state(minimal_world)
    assert locations_available(minimal_world, s) == ("room",)
    assert applicable_actions(minimal_world, s) == []


def test_goto_moves_and_discovers(sample_world):
    s = initial_state(sample_world)
    out = apply_action(sample_world, s, A("goto", "manor_hall"))
    assert out.next_state.current_location == "manor_hall"
    assert "study" in locations_available(sample_world, out.next_state)
    assert out.newly_visited_plot_points == ("PP_EnterManor",)


def test_take_moves_to_inventory(sample_world):
    r = replay(sample_world, END1_PATH[:4])
    assert inventory(sample_world, r.final_state) == ("silver_locket",)
    idx = [o.id for o in sample_world.objects].index("silver_locket")
    assert r.final_state.objects[idx].place == "@inventory"


def test_unlock_then_open_reveals_contents(sample_world):
    r = replay(sample_world, END1_PATH[:12])
    s = r.final_state
    assert is_visible(sample_world, s, "idol_of_the_deep")
    assert is_visible(sample_world, s, "harrow_journal")
    opened = [st for st in r.steps if st.action == A("open", "black_chest")]
    assert opened and "PP_OpenChest" in opened[0].outcome.newly_visited_plot_points


def test_invisible_objects_not_actionable(sample_world):
    s = initial_state(sample_world)
    acts = applicable_actions(sample_world, s)
    for a in acts:
        assert a.target != "iron_key"  # hidden until the trade
    with pytest.raises(NotApplicableError):
        apply_action(sample_world, s, A("examine", "iron_key"))


def test_unlock_requires_visible_target_and_held_key(sample_world):
    # At the cellar without the key: chest visible but unlock not applicable.
    r = replay(sample_world, [A("goto", "manor_hall"), A("goto", "cellar")])
    acts = applicable_actions(sample_world, r.final_state)
    assert A("unlock", "black_chest", key="iron_key") not in acts
    # With the key in hand it appears.
    r = replay(sample_world, END1_PATH[:10])
    acts = applicable_actions(sample_world, r.final_state)
    assert A("unlock", "black_chest", key="iron_key") in acts


def test_no_characters_no_social_actions(sample_world):
    r = replay(sample_world, [A("goto", "manor_hall")])
    acts = applicable_actions(sample_world, r.final_state)
    assert not [a for a in acts if a.kind in ("say", "buy", "give")]


def test_say_requires_known_topic(sample_world):
    s = initial_state(sample_world)
    acts = applicable_actions(sample_world, s)
    says = [a.target for a in acts if a.kind == "say"]
    assert says == ["old_family"]  # hidden_sewer not yet known
    assert known_topics(sample_world, s) == ("old_family",)


def test_buy_only_while_seller_holds_it(sample_world):
    s = initial_state(sample_world)
    assert A("buy", "storm_lantern") in applicable_actions(sample_world, s)
    out = apply_action(sample_world, s, A("buy", "storm_lantern"))
    assert "storm_lantern" in inventory(sample_world, out.next_state)
    assert A("buy", "storm_lantern") not in applicable_actions(sample_world, out.next_state)


def test_end1_path_terminates(sample_world):
    r = replay(sample_world, END1_PATH)
    assert r.steps[-1].outcome.is_terminal
    assert ending_reached(sample_world, r.final_state) == "End1_FindEvilGod"
    assert r.plot_points() == (
        "PP_EnterManor", "PP_FindLocket", "PP_KeeperTrade", "PP_TakeKey",
        "PP_UnlockChest", "PP_OpenChest", "PP_TakeIdol", "End1_FindEvilGod")


def test_end2_path_terminates(sample_world):
    r = replay(sample_world, END2_PATH)
    assert r.steps[-1].outcome.is_terminal
    assert ending_reached(sample_world, r.final_state) == "End2_DiscoverBookInSewers"


def test_terminal_absorption(sample_world):
    r = replay(sample_world, END1_PATH)
    s = r.final_state
    assert is_terminal(sample_world, s)
    assert applicable_actions(sample_world, s) == []
    with pytest.raises(NotApplicableError):
        apply_action(sample_world, s, A("goto", "manor_hall"))


def test_replay_empty(sample_world):
    r = replay(sample_world, [])
    assert r.steps == ()
    assert r.final_state == initial_state(sample_world)


def test_replay_error_carries_index(sample_world):
    actions = END1_PATH[:2] + [A("take", "mildewed_book")] + END1_PATH[2:]
    with pytest.raises(ReplayError) as e:
        replay(sample_world, actions)
    assert e.value.index == 2


def test_monotone_counters(sample_world):
    r = replay(sample_world, END2_PATH)
    seen, known, plots = -1, -1, -1
    for step in r.steps:
        s = step.outcome.next_state
        n_seen = sum(1 for st in s.objects if st.seen)
        n_known = len(known_topics(sample_world, s))
        n_plots = len(s.visited_plots)
        assert n_seen >= seen and n_known >= known and n_plots >= plots
        seen, known, plots = n_seen, n_known, n_plots


def test_replay_is_bit_deterministic(sample_world):
    blob1 = "".join(serialize_state(sample_world, st.outcome.next_state)
                    for st in replay(sample_world, END2_PATH).steps)
    blob2 = "".join(serialize_state(sample_world, st.outcome.next_state)
                    for st in replay(sample_world, END2_PATH).steps)
    assert blob1 == blob2


def test_action_ordering_is_deterministic(sample_world):
    s = initial_state(sample_world)
    acts = applicable_actions(sample_world, s)
    assert acts == sorted(acts, key=lambda a: a.sort_key())


def _candidate_universe(w):
    objs = [o.id for o in w.objects]
    locs = [x.id for x in w.locations]
    topics = [t.id for t in w.topics]
    for loc in locs:
        yield A("goto", loc)
    for kind in ("examine", "take", "use", "open", "buy", "give"):
        for o in objs:
            yield A(kind, o)
    for o in objs:
        for k in objs:
            yield A("unlock", o, key=k)
    for t in topics:
        yield A("say", t)


def _all_reachable_states(w, cap=50):
    from collections import deque
    start = initial_state(w)
    seen = {state_key(w, start)}
    queue = deque([start])
    states = [start]
    while queue:
        s = queue.popleft()
        for a in applicable_actions(w, s):
            nxt = apply_action(w, s, a).next_state
            key = state_key(w, nxt)
            if key not in seen:
                seen.add(key)
                queue.append(nxt)
                states.append(nxt)
    return states


def test_applicability_soundness_exhaustive(toy_world):
    """For every reachable state: listed actions apply cleanly, everything
    else raises NotApplicableError."""
    states = _all_reachable_states(toy_world)
    assert len(states) > 50
    universe = list(_candidate_universe(toy_world))
    for s in states:
        listed = set(applicable_actions(toy_world, s))
        for a in universe:
            if a in listed:
                apply_action(toy_world, s, a)
            else:
                with pytest.raises(NotApplicableError):
                    apply_action(toy_world, s, a)

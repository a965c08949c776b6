"""Reachability diagnostics for story worlds.

Breadth-first search over the engine's transition function answers, per
ending, whether any action sequence of bounded length reaches it (and returns
a shortest one), and which plot points stay undiscovered under the cap: the
ingredients of a plot-gap report.

Deduplication uses an exact dynamics-relevant projection of the state: the
``seen`` flag of an object no trigger mentions, the ``mentioned`` flag of a
topic neither a trigger nor a topic prerequisite mentions, and the derived
locations-available set cannot influence any future transition or trigger, so
states differing only there are interchangeable.  The projection provably
preserves shortest action sequences; ``exhaustive=True`` switches to full
state keys for cross-checking on small worlds.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .engine import (
    ActionInstance,
    GameState,
    applicable_actions,
    apply_action,
    initial_state,
    state_key,
)
from .story import WorldSpec


@dataclass(frozen=True)
class EndingReachability:
    ending_id: str
    reachable: bool
    shortest_length: int | None
    shortest_actions: tuple[ActionInstance, ...] | None


@dataclass(frozen=True)
class ReachabilityReport:
    cap: int
    endings: tuple[EndingReachability, ...]
    unreachable_plot_points: tuple[str, ...]
    plot_point_depths: dict
    states_explored: int

    def ending(self, ending_id: str) -> EndingReachability:
        for e in self.endings:
            if e.ending_id == ending_id:
                return e
        raise KeyError(ending_id)


def _relevant_sets(w: WorldSpec) -> tuple[frozenset[str], frozenset[str]]:
    seen_relevant: set[str] = set()
    mentioned_relevant: set[str] = set()
    for pp in w.plot_points:
        for atom in pp.trigger.atoms():
            if atom.kind == "object_seen":
                seen_relevant.add(atom.ref)
            elif atom.kind == "topic_mentioned":
                mentioned_relevant.add(atom.ref)
    for t in w.topics:
        mentioned_relevant.update(t.prereq_topics)
    return frozenset(seen_relevant), frozenset(mentioned_relevant)


def _projection_key(w: WorldSpec, s: GameState,
                    seen_relevant: frozenset[str], mentioned_relevant: frozenset[str]):
    objs = tuple(
        (st.place, st.locked, st.open, st.revealed,
         st.seen if o.id in seen_relevant else False)
        for o, st in zip(w.objects, s.objects)
    )
    return (s.current_location, objs,
            frozenset(s.mentioned_topics & mentioned_relevant), s.visited_plots)


def validate_reachability(w: WorldSpec, cap: int = 200,
                          exhaustive: bool = False) -> ReachabilityReport:
    """BFS from the initial state, depth-capped at ``cap`` actions.  Stops
    early once every plot point has been discovered (depths already minimal
    under BFS order)."""
    seen_rel, mentioned_rel = _relevant_sets(w)

    def key(s: GameState):
        if exhaustive:
            return state_key(w, s)
        return _projection_key(w, s, seen_rel, mentioned_rel)

    start = initial_state(w)
    start_key = key(start)
    parents: dict = {start_key: None}   # key -> (parent_key, action)
    depth_of: dict = {start_key: 0}
    plot_depths: dict[str, int] = {}
    plot_keys: dict[str, tuple] = {}
    all_plots = {p.id for p in w.plot_points}
    for pid in start.visited_plots:
        plot_depths[pid] = 0
        plot_keys[pid] = start_key

    queue = deque([(start, start_key)])
    explored = 0
    while queue and len(plot_depths) < len(all_plots):
        s, k = queue.popleft()
        depth = depth_of[k]
        if depth >= cap:
            continue
        explored += 1
        for a in applicable_actions(w, s):
            outcome = apply_action(w, s, a)
            nk = key(outcome.next_state)
            if nk in parents:
                continue
            parents[nk] = (k, a)
            depth_of[nk] = depth + 1
            for pid in outcome.newly_visited_plot_points:
                if pid not in plot_depths:
                    plot_depths[pid] = depth + 1
                    plot_keys[pid] = nk
            if not outcome.is_terminal:
                queue.append((outcome.next_state, nk))

    def path_to(target_key) -> tuple[ActionInstance, ...]:
        actions: list[ActionInstance] = []
        k = target_key
        while parents[k] is not None:
            k, a = parents[k]
            actions.append(a)
        return tuple(reversed(actions))

    endings = []
    for e in w.endings:
        if e in plot_depths:
            endings.append(EndingReachability(
                ending_id=e, reachable=True, shortest_length=plot_depths[e],
                shortest_actions=path_to(plot_keys[e])))
        else:
            endings.append(EndingReachability(
                ending_id=e, reachable=False, shortest_length=None, shortest_actions=None))

    unreachable = tuple(p.id for p in w.plot_points if p.id not in plot_depths)
    return ReachabilityReport(
        cap=cap, endings=tuple(endings), unreachable_plot_points=unreachable,
        plot_point_depths=dict(sorted(plot_depths.items())), states_explored=explored)

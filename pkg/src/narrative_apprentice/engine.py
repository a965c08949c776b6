"""The interactive-narrative MDP: states, the nine parameterized actions,
deterministic transitions, plot-point triggering and trace replay.

Transitions are pure functions of (world, state, action); GameState is
value-semantic, so sessions and rollouts can run concurrently without
shared mutable state.  All enumeration orders are deterministic: actions by
kind order then target id then key id, everything else by world declaration
order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .story import Condition, WorldSpec

ACTION_KINDS = ("goto", "examine", "take", "use", "unlock", "open", "say", "buy", "give")
_KIND_INDEX = {k: i for i, k in enumerate(ACTION_KINDS)}

INVENTORY = "@inventory"  # placement marker inside ObjState.place


class NotApplicableError(Exception):
    """The action's applicability condition does not hold in this state."""


class TerminalStateError(Exception):
    """Operation requires a non-terminal state."""


class ReplayError(Exception):
    def __init__(self, index: int, reason: str):
        self.index = index
        self.reason = reason
        super().__init__(f"action {index}: {reason}")


@dataclass(frozen=True, slots=True)
class ActionInstance:
    """One parameterized action: kind, target id, plus a key id for unlock."""

    kind: str
    target: str
    key: str = ""

    def sort_key(self):
        return (_KIND_INDEX[self.kind], self.target, self.key)

    def to_doc(self) -> dict:
        d = {"kind": self.kind, "target": self.target}
        if self.key:
            d["key"] = self.key
        return d

    @staticmethod
    def from_doc(doc: dict) -> "ActionInstance":
        return ActionInstance(kind=doc["kind"], target=doc["target"], key=doc.get("key", ""))


@dataclass(frozen=True, slots=True)
class ObjState:
    """Where an object is and its mutable flags.

    ``place`` is a location id, a container object id prefixed "in:", a
    character id prefixed "char:", or INVENTORY.
    """

    place: str
    locked: bool
    open: bool
    revealed: bool
    seen: bool


@dataclass(frozen=True, slots=True)
class GameState:
    current_location: str
    visited_locations: frozenset[str]
    objects: tuple[ObjState, ...]          # indexed by world object order
    mentioned_topics: frozenset[str]
    visited_plots: frozenset[str]


@dataclass(frozen=True)
class TransitionOutcome:
    next_state: GameState
    newly_visited_plot_points: tuple[str, ...]
    is_terminal: bool
    narration: str


@dataclass(frozen=True)
class ReplayStep:
    state: GameState
    action: ActionInstance
    outcome: TransitionOutcome


@dataclass(frozen=True)
class ReplayResult:
    initial_state: GameState
    steps: tuple[ReplayStep, ...]

    @property
    def final_state(self) -> GameState:
        return self.steps[-1].outcome.next_state if self.steps else self.initial_state

    @property
    def pairs(self) -> list[tuple[GameState, ActionInstance]]:
        return [(s.state, s.action) for s in self.steps]

    def plot_points(self) -> tuple[str, ...]:
        out: list[str] = []
        for step in self.steps:
            out.extend(step.outcome.newly_visited_plot_points)
        return tuple(out)


# ---------------------------------------------------------------------------
# State construction and derived views


def initial_state(w: WorldSpec) -> GameState:
    objects = []
    for o in w.objects:
        if o.holder:
            place = "char:" + o.holder
        elif o.container:
            place = "in:" + o.container
        else:
            place = o.location
        objects.append(ObjState(place=place, locked=o.locked, open=o.open,
                                revealed=o.revealed, seen=False))
    return GameState(
        current_location=w.start_location,
        visited_locations=frozenset({w.start_location}),
        objects=tuple(objects),
        mentioned_topics=frozenset(),
        visited_plots=frozenset(),
    )


def _obj_index(w: WorldSpec) -> dict[str, int]:
    # Cached on the world instance; WorldSpec is immutable after load.
    idx = getattr(w, "_obj_index", None)
    if idx is None:
        idx = {o.id: i for i, o in enumerate(w.objects)}
        object.__setattr__(w, "_obj_index", idx)
    return idx


def locations_available(w: WorldSpec, s: GameState) -> tuple[str, ...]:
    """Locations discovered so far: every visited location plus adjacency."""
    avail = set(s.visited_locations)
    for loc in s.visited_locations:
        avail.update(w.location_by_id[loc].adjacent)
    return tuple(x.id for x in w.locations if x.id in avail)


def is_visible(w: WorldSpec, s: GameState, object_id: str) -> bool:
    idx = _obj_index(w)
    visiting: set[str] = set()

    def vis(oid: str) -> bool:
        if oid in visiting:
            return False
        visiting.add(oid)
        st = s.objects[idx[oid]]
        if st.place == INVENTORY:
            return True
        if not st.revealed:
            return False
        if st.place.startswith("char:"):
            return character_visible(w, s, st.place[5:])
        if st.place.startswith("in:"):
            container = st.place[3:]
            return s.objects[idx[container]].open and vis(container)
        return st.place == s.current_location

    return vis(object_id)


def character_visible(w: WorldSpec, s: GameState, character_id: str) -> bool:
    return w.character_by_id[character_id].location == s.current_location


def visible_characters(w: WorldSpec, s: GameState) -> list[str]:
    return [c.id for c in w.characters if character_visible(w, s, c.id)]


def inventory(w: WorldSpec, s: GameState) -> tuple[str, ...]:
    return tuple(o.id for i, o in enumerate(w.objects) if s.objects[i].place == INVENTORY)


def contents_of(w: WorldSpec, s: GameState, container_id: str) -> tuple[str, ...]:
    marker = "in:" + container_id
    return tuple(o.id for i, o in enumerate(w.objects) if s.objects[i].place == marker)


def known_topics(w: WorldSpec, s: GameState) -> tuple[str, ...]:
    """A topic is known once its prerequisite topics have been mentioned and
    its prerequisite plot points visited; no-prerequisite topics are known
    from the start."""
    return tuple(
        t.id for t in w.topics
        if all(p in s.mentioned_topics for p in t.prereq_topics)
        and all(p in s.visited_plots for p in t.prereq_plots)
    )


def is_terminal(w: WorldSpec, s: GameState) -> bool:
    return any(e in s.visited_plots for e in w.endings)


def ending_reached(w: WorldSpec, s: GameState) -> str | None:
    for e in w.endings:
        if e in s.visited_plots:
            return e
    return None


# ---------------------------------------------------------------------------
# Applicability (Table-1 conditions conjoined with the state flags)


def _applicable(w: WorldSpec, s: GameState, a: ActionInstance) -> bool:
    idx = _obj_index(w)
    kind = a.kind
    if kind == "goto":
        return a.target in w.location_by_id[s.current_location].adjacent
    if kind == "examine":
        return a.target in idx and is_visible(w, s, a.target)
    if kind == "take":
        if a.target not in idx:
            return False
        st = s.objects[idx[a.target]]
        return (w.object_by_id[a.target].can_take and st.place != INVENTORY
                and is_visible(w, s, a.target))
    if kind == "use":
        return a.target in idx and is_visible(w, s, a.target)
    if kind == "unlock":
        if a.target not in idx or a.key not in idx:
            return False
        st = s.objects[idx[a.target]]
        return (st.locked and w.object_by_id[a.target].key_id == a.key
                and s.objects[idx[a.key]].place == INVENTORY
                and is_visible(w, s, a.target))
    if kind == "open":
        if a.target not in idx:
            return False
        st = s.objects[idx[a.target]]
        return (w.object_by_id[a.target].can_open and not st.locked and not st.open
                and is_visible(w, s, a.target))
    if kind == "say":
        return (a.target in w.topic_by_id and a.target in known_topics(w, s)
                and bool(visible_characters(w, s)))
    if kind == "buy":
        if a.target not in idx:
            return False
        st = s.objects[idx[a.target]]
        for c in visible_characters(w, s):
            if a.target in w.character_by_id[c].sells and st.place == "char:" + c:
                return True
        return False
    if kind == "give":
        return (a.target in idx and s.objects[idx[a.target]].place == INVENTORY
                and bool(visible_characters(w, s)))
    return False


def applicable_actions(w: WorldSpec, s: GameState) -> list[ActionInstance]:
    """All applicable action instances, in deterministic order (kind, target,
    key).  Terminal states accept no further actions and yield []."""
    if is_terminal(w, s):
        return []
    out: list[ActionInstance] = []
    here = w.location_by_id[s.current_location]
    for loc in sorted(here.adjacent):
        out.append(ActionInstance("goto", loc))
    visible = [o.id for o in w.objects if is_visible(w, s, o.id)]
    for kind in ("examine", "take", "use"):
        for oid in sorted(visible):
            a = ActionInstance(kind, oid)
            if _applicable(w, s, a):
                out.append(a)
    for oid in sorted(visible):
        o = w.object_by_id[oid]
        if o.key_id:
            a = ActionInstance("unlock", oid, key=o.key_id)
            if _applicable(w, s, a):
                out.append(a)
    for oid in sorted(visible):
        a = ActionInstance("open", oid)
        if _applicable(w, s, a):
            out.append(a)
    chars = visible_characters(w, s)
    if chars:
        for tid in sorted(known_topics(w, s)):
            out.append(ActionInstance("say", tid))
        buyable = sorted({oid for c in chars for oid in w.character_by_id[c].sells})
        for oid in buyable:
            a = ActionInstance("buy", oid)
            if _applicable(w, s, a):
                out.append(a)
        for oid in sorted(inventory(w, s)):
            out.append(ActionInstance("give", oid))
    out.sort(key=ActionInstance.sort_key)
    return out


# ---------------------------------------------------------------------------
# Transitions


def _eval_condition(w: WorldSpec, s: GameState, c: Condition, last: ActionInstance) -> bool:
    if c.kind == "all":
        return all(_eval_condition(w, s, x, last) for x in c.children)
    if c.kind == "any":
        return any(_eval_condition(w, s, x, last) for x in c.children)
    if c.kind == "not":
        return not _eval_condition(w, s, c.children[0], last)
    if c.kind == "plot_visited":
        return c.ref in s.visited_plots
    if c.kind == "object_seen":
        return s.objects[_obj_index(w)[c.ref]].seen
    if c.kind == "in_inventory":
        return s.objects[_obj_index(w)[c.ref]].place == INVENTORY
    if c.kind == "topic_mentioned":
        return c.ref in s.mentioned_topics
    if c.kind == "at_location":
        return s.current_location == c.ref
    if c.kind == "last_action":
        return last.kind == c.action_kind and last.target == c.ref
    raise ValueError(f"unknown condition kind {c.kind!r}")


def _fire_plot_points(w: WorldSpec, s: GameState, last: ActionInstance) -> tuple[GameState, tuple[str, ...]]:
    """Mark every plot point whose trigger holds and whose prerequisites are
    all visited; cascades re-evaluate to a fixed point within the transition."""
    fired: list[str] = []
    visited = set(s.visited_plots)
    changed = True
    while changed:
        changed = False
        for pp in w.plot_points:
            if pp.id in visited:
                continue
            if not all(pre in visited for pre in pp.prerequisites):
                continue
            probe = replace(s, visited_plots=frozenset(visited))
            if _eval_condition(w, probe, pp.trigger, last):
                visited.add(pp.id)
                fired.append(pp.id)
                changed = True
    if fired:
        s = replace(s, visited_plots=frozenset(visited))
    return s, tuple(fired)


def _set_obj(s: GameState, i: int, **changes) -> GameState:
    objs = list(s.objects)
    objs[i] = replace(objs[i], **changes)
    return replace(s, objects=tuple(objs))


def apply_action(w: WorldSpec, s: GameState, a: ActionInstance) -> TransitionOutcome:
    """Deterministic transition.  Raises NotApplicableError when the action's
    condition does not hold (a corrupt trace or a buggy policy)."""
    if is_terminal(w, s):
        raise NotApplicableError(f"{a.kind}({a.target}): the story has ended")
    if a.kind not in _KIND_INDEX:
        raise NotApplicableError(f"unknown action kind {a.kind!r}")
    if not _applicable(w, s, a):
        raise NotApplicableError(f"{a.kind}({a.target}{', ' + a.key if a.key else ''}) is not applicable")

    idx = _obj_index(w)
    lines: list[str] = []
    if a.kind == "goto":
        loc = w.location_by_id[a.target]
        s = replace(s, current_location=a.target,
                    visited_locations=s.visited_locations | {a.target})
        lines.append(f"You go to {loc.name}." + (f" {loc.description}" if loc.description else ""))
    elif a.kind == "examine":
        o = w.object_by_id[a.target]
        s = _set_obj(s, idx[a.target], seen=True)
        lines.append(f"You examine {o.name}." + (f" {o.description}" if o.description else ""))
        held = contents_of(w, s, a.target)
        if held and s.objects[idx[a.target]].open:
            names = ", ".join(w.object_by_id[c].name for c in held)
            lines.append(f"Inside you can see: {names}.")
    elif a.kind == "take":
        s = _set_obj(s, idx[a.target], place=INVENTORY)
        lines.append(f"You take {w.object_by_id[a.target].name}.")
    elif a.kind == "use":
        o = w.object_by_id[a.target]
        lines.append(f"You use {o.name}.")
        if o.use_effect:
            for rid in o.use_effect.reveals:
                i = idx[rid]
                if not s.objects[i].revealed:
                    s = _set_obj(s, i, revealed=True)
                    lines.append(f"{w.object_by_id[rid].name} is revealed.")
    elif a.kind == "unlock":
        s = _set_obj(s, idx[a.target], locked=False)
        lines.append(f"You unlock {w.object_by_id[a.target].name} with {w.object_by_id[a.key].name}.")
    elif a.kind == "open":
        s = _set_obj(s, idx[a.target], open=True)
        lines.append(f"You open {w.object_by_id[a.target].name}.")
        held = contents_of(w, s, a.target)
        if held:
            names = ", ".join(w.object_by_id[c].name for c in held)
            lines.append(f"Inside you find: {names}.")
    elif a.kind == "say":
        topic = w.topic_by_id[a.target]
        s = replace(s, mentioned_topics=s.mentioned_topics | {a.target})
        responders = [c for c in visible_characters(w, s)
                      if a.target in w.character_by_id[c].topics_responded]
        if responders:
            name = w.character_by_id[responders[0]].name
            lines.append(f'You bring up {topic.name}. {name} has something to say about it.')
        else:
            lines.append(f"You bring up {topic.name}, but nobody here has anything to add.")
    elif a.kind == "buy":
        s = _set_obj(s, idx[a.target], place=INVENTORY)
        lines.append(f"You buy {w.object_by_id[a.target].name}.")
    elif a.kind == "give":
        recipient = visible_characters(w, s)[0]
        ch = w.character_by_id[recipient]
        s = _set_obj(s, idx[a.target], place="char:" + recipient)
        lines.append(f"You give {w.object_by_id[a.target].name} to {ch.name}.")
        for want in ch.wants:
            if want.object_id == a.target:
                for rid in want.reveals:
                    i = idx[rid]
                    if not s.objects[i].revealed:
                        s = _set_obj(s, i, revealed=True)
                        lines.append(f"In return, {ch.name} produces {w.object_by_id[rid].name}.")

    s, fired = _fire_plot_points(w, s, a)
    for pid in fired:
        pp = w.plot_by_id[pid]
        if pp.narration:
            lines.append(pp.narration)
    terminal = is_terminal(w, s)
    if terminal:
        lines.append("THE END.")
    return TransitionOutcome(next_state=s, newly_visited_plot_points=fired,
                             is_terminal=terminal, narration=" ".join(lines))


def replay(w: WorldSpec, actions: list[ActionInstance]) -> ReplayResult:
    """Fold apply_action from the initial state; the (state, action) pairs are
    the demonstration pairs.  Raises ReplayError at the first inapplicable
    action."""
    s0 = initial_state(w)
    s = s0
    steps: list[ReplayStep] = []
    for i, a in enumerate(actions):
        try:
            outcome = apply_action(w, s, a)
        except NotApplicableError as e:
            raise ReplayError(i, str(e)) from e
        steps.append(ReplayStep(state=s, action=a, outcome=outcome))
        s = outcome.next_state
    return ReplayResult(initial_state=s0, steps=tuple(steps))


# ---------------------------------------------------------------------------
# Canonical serialization and fast state keys


def state_key(w: WorldSpec, s: GameState) -> tuple:
    """Hashable value identifying the full state (used for dedup/caching)."""
    return (s.current_location, s.visited_locations, s.objects,
            s.mentioned_topics, s.visited_plots)


def state_to_doc(w: WorldSpec, s: GameState) -> dict:
    """Full structured view of the state: every field of the paper-shaped
    representation (per-object details, inventory, characters, plot points,
    topics), with derived flags filled in."""
    idx = _obj_index(w)
    known = set(known_topics(w, s))
    objects = {}
    for o in w.objects:
        st = s.objects[idx[o.id]]
        cont = contents_of(w, s, o.id)
        place = st.place
        if place.startswith("in:"):
            place_doc = {"in": place[3:]}
        elif place.startswith("char:"):
            place_doc = {"character": place[5:]}
        elif place == INVENTORY:
            place_doc = "inventory"
        else:
            place_doc = place
        objects[o.id] = {
            "name": o.name,
            "location": place_doc,
            "locked": st.locked,
            "open": st.open,
            "empty": len(cont) == 0,
            "contents": list(cont),
            "can_open": o.can_open,
            "can_take": o.can_take,
            "visible": is_visible(w, s, o.id),
            "seen": st.seen,
        }
    return {
        "current_location": s.current_location,
        "locations_available": list(locations_available(w, s)),
        "objects": objects,
        "inventory": list(inventory(w, s)),
        "characters": {c.id: {"name": c.name, "visible": character_visible(w, s, c.id)}
                       for c in w.characters},
        "plot_points": {p.id: {"visited": p.id in s.visited_plots} for p in w.plot_points},
        "topics": {t.id: {"name": t.name, "known": t.id in known,
                          "mentioned": t.id in s.mentioned_topics} for t in w.topics},
    }


def serialize_state(w: WorldSpec, s: GameState) -> str:
    return json.dumps(state_to_doc(w, s), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Presentation helpers shared by the REPL and the session service


def label_action(w: WorldSpec, a: ActionInstance) -> str:
    if a.kind == "goto":
        return f"go to {w.location_by_id[a.target].name}"
    if a.kind == "say":
        return f"ask about {w.topic_by_id[a.target].name}"
    name = w.object_by_id[a.target].name
    if a.kind == "unlock":
        return f"unlock {name} with {w.object_by_id[a.key].name}"
    return f"{a.kind} {name}"


def describe_state(w: WorldSpec, s: GameState) -> str:
    loc = w.location_by_id[s.current_location]
    lines = [f"You are at {loc.name}." + (f" {loc.description}" if loc.description else "")]
    visible = [o.name for o in w.objects
               if is_visible(w, s, o.id) and s.objects[_obj_index(w)[o.id]].place != INVENTORY]
    if visible:
        lines.append("You can see: " + ", ".join(visible) + ".")
    chars = [w.character_by_id[c].name for c in visible_characters(w, s)]
    if chars:
        lines.append("Here: " + ", ".join(chars) + ".")
    exits = [w.location_by_id[x].name for x in sorted(loc.adjacent)]
    if exits:
        lines.append("Exits: " + ", ".join(exits) + ".")
    return " ".join(lines)

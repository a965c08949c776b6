"""Declarative story worlds: the static half of the interactive-narrative MDP.

A world is a set of locations, objects, characters, conversation topics and
plot points loaded from a versioned JSON document.  Plot points carry a
declarative trigger condition plus precedence prerequisites; the engine marks
them visited as play unfolds.  The world is immutable after loading and safe
to share across sessions and training workers.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = "1"

# Atom kinds a trigger condition may test, plus the three combinators.
_COMBINATORS = ("all", "any", "not")
_ATOMS = (
    "plot_visited",
    "object_seen",
    "in_inventory",
    "topic_mentioned",
    "at_location",
    "last_action",
)


class StorySyntaxError(Exception):
    """Malformed story document (bad JSON or bad structure)."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class StoryValidationError(Exception):
    """Well-formed document that violates a world invariant."""

    def __init__(self, message: str, offending_id: str | None = None):
        self.offending_id = offending_id
        super().__init__(message)


@dataclass(frozen=True)
class Condition:
    """One node of a trigger expression tree.

    ``kind`` is either a combinator (all/any/not, with ``children``) or an
    atom (with ``ref`` and, for last_action, ``action_kind``).
    """

    kind: str
    children: tuple["Condition", ...] = ()
    ref: str = ""
    action_kind: str = ""

    def atoms(self) -> list["Condition"]:
        if self.kind in _COMBINATORS:
            out: list[Condition] = []
            for child in self.children:
                out.extend(child.atoms())
            return out
        return [self]


@dataclass(frozen=True)
class LocationDef:
    id: str
    name: str
    adjacent: tuple[str, ...]
    description: str = ""


@dataclass(frozen=True)
class UseEffect:
    reveals: tuple[str, ...] = ()


@dataclass(frozen=True)
class WantDef:
    object_id: str
    reveals: tuple[str, ...] = ()


@dataclass(frozen=True)
class ObjectDef:
    """A world object.  Placement is exactly one of: a location, inside a
    container object, or held by a character (expressed via ``location`` of
    the forms ``"<loc>"``, ``{"in": id}``, ``{"character": id}`` in the file;
    contained objects may instead be listed in the container's ``contents``).
    """

    id: str
    name: str
    location: str = ""          # location id, or "" when contained/held
    container: str = ""         # containing object id, or ""
    holder: str = ""            # holding character id, or ""
    can_open: bool = False
    can_take: bool = False
    locked: bool = False
    open: bool = False
    revealed: bool = True       # conspicuous from the start
    key_id: str = ""
    contents: tuple[str, ...] = ()
    price: float | None = None
    use_effect: UseEffect | None = None
    description: str = ""


@dataclass(frozen=True)
class CharacterDef:
    id: str
    name: str
    location: str
    topics_responded: tuple[str, ...] = ()
    sells: tuple[str, ...] = ()
    wants: tuple[WantDef, ...] = ()
    description: str = ""


@dataclass(frozen=True)
class TopicDef:
    id: str
    name: str
    prereq_topics: tuple[str, ...] = ()
    prereq_plots: tuple[str, ...] = ()


@dataclass(frozen=True)
class PlotPointDef:
    id: str
    trigger: Condition
    prerequisites: tuple[str, ...] = ()
    is_ending: bool = False
    narration: str = ""


@dataclass(frozen=True)
class WorldSpec:
    locations: tuple[LocationDef, ...]
    objects: tuple[ObjectDef, ...]
    characters: tuple[CharacterDef, ...]
    topics: tuple[TopicDef, ...]
    plot_points: tuple[PlotPointDef, ...]
    start_location: str
    title: str = ""

    # Lookup tables, derived; excluded from equality and repr.
    location_by_id: dict = field(init=False, repr=False, compare=False, default_factory=dict)
    object_by_id: dict = field(init=False, repr=False, compare=False, default_factory=dict)
    character_by_id: dict = field(init=False, repr=False, compare=False, default_factory=dict)
    topic_by_id: dict = field(init=False, repr=False, compare=False, default_factory=dict)
    plot_by_id: dict = field(init=False, repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "location_by_id", {x.id: x for x in self.locations})
        object.__setattr__(self, "object_by_id", {x.id: x for x in self.objects})
        object.__setattr__(self, "character_by_id", {x.id: x for x in self.characters})
        object.__setattr__(self, "topic_by_id", {x.id: x for x in self.topics})
        object.__setattr__(self, "plot_by_id", {x.id: x for x in self.plot_points})

    @property
    def endings(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.plot_points if p.is_ending)

    def fingerprint(self) -> str:
        """Content hash of the canonical serialized form."""
        return hashlib.sha256(serialize_world(self).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Parsing


def _parse_condition(node, path: str) -> Condition:
    if not isinstance(node, dict) or len(node) != 1:
        raise StorySyntaxError(f"{path}: a trigger node must be a single-key object")
    kind, value = next(iter(node.items()))
    if kind in ("all", "any"):
        if not isinstance(value, list) or not value:
            raise StorySyntaxError(f"{path}.{kind}: expected a non-empty list")
        children = tuple(_parse_condition(v, f"{path}.{kind}[{i}]") for i, v in enumerate(value))
        return Condition(kind, children=children)
    if kind == "not":
        return Condition(kind, children=(_parse_condition(value, f"{path}.not"),))
    if kind == "last_action":
        if not isinstance(value, dict) or set(value) != {"kind", "target"}:
            raise StorySyntaxError(f"{path}.last_action: expected {{kind, target}}")
        return Condition(kind, ref=str(value["target"]), action_kind=str(value["kind"]))
    if kind in _ATOMS:
        if not isinstance(value, str):
            raise StorySyntaxError(f"{path}.{kind}: expected an id string")
        return Condition(kind, ref=value)
    raise StorySyntaxError(f"{path}: unknown trigger kind {kind!r}")


def _condition_to_json(c: Condition):
    if c.kind in ("all", "any"):
        return {c.kind: [_condition_to_json(x) for x in c.children]}
    if c.kind == "not":
        return {"not": _condition_to_json(c.children[0])}
    if c.kind == "last_action":
        return {"last_action": {"kind": c.action_kind, "target": c.ref}}
    return {c.kind: c.ref}


def _require(doc: dict, key: str, typ, path: str):
    if key not in doc:
        raise StorySyntaxError(f"{path}: missing required key {key!r}")
    value = doc[key]
    if not isinstance(value, typ):
        raise StorySyntaxError(f"{path}.{key}: expected {typ.__name__}")
    return value


def _opt(doc: dict, key: str, typ, default, path: str):
    if key not in doc:
        return default
    value = doc[key]
    if not isinstance(value, typ):
        raise StorySyntaxError(f"{path}.{key}: expected {typ.__name__}")
    return value


def _str_list(doc: dict, key: str, path: str, default=()) -> tuple[str, ...]:
    raw = _opt(doc, key, list, list(default), path)
    out = []
    for i, v in enumerate(raw):
        if not isinstance(v, str):
            raise StorySyntaxError(f"{path}.{key}[{i}]: expected an id string")
        out.append(v)
    return tuple(out)


def _parse_object(doc: dict, path: str) -> ObjectDef:
    oid = _require(doc, "id", str, path)
    location, container, holder = "", "", ""
    raw_loc = doc.get("location")
    if isinstance(raw_loc, str):
        location = raw_loc
    elif isinstance(raw_loc, dict) and set(raw_loc) == {"in"}:
        container = str(raw_loc["in"])
    elif isinstance(raw_loc, dict) and set(raw_loc) == {"character"}:
        holder = str(raw_loc["character"])
    elif raw_loc is not None:
        raise StorySyntaxError(f"{path}.location: expected a location id, {{'in': id}} or {{'character': id}}")
    use_effect = None
    if "use_effect" in doc:
        ue = _require(doc, "use_effect", dict, path)
        use_effect = UseEffect(reveals=_str_list(ue, "reveals", f"{path}.use_effect"))
    price = doc.get("price")
    if price is not None and not isinstance(price, (int, float)):
        raise StorySyntaxError(f"{path}.price: expected a number")
    return ObjectDef(
        id=oid,
        name=_opt(doc, "name", str, oid, path),
        location=location,
        container=container,
        holder=holder,
        can_open=_opt(doc, "can_open", bool, False, path),
        can_take=_opt(doc, "can_take", bool, False, path),
        locked=_opt(doc, "locked", bool, False, path),
        open=_opt(doc, "open", bool, False, path),
        revealed=_opt(doc, "revealed", bool, True, path),
        key_id=_opt(doc, "key_id", str, "", path),
        contents=_str_list(doc, "contents", path),
        price=float(price) if price is not None else None,
        use_effect=use_effect,
        description=_opt(doc, "description", str, "", path),
    )


def _parse_want(doc, path: str) -> WantDef:
    if isinstance(doc, str):
        return WantDef(object_id=doc)
    if isinstance(doc, dict):
        return WantDef(
            object_id=_require(doc, "object", str, path),
            reveals=_str_list(doc, "reveals", path),
        )
    raise StorySyntaxError(f"{path}: expected an object id or {{object, reveals}}")


def parse_world(doc: dict) -> WorldSpec:
    """Build a WorldSpec from an already-parsed JSON document."""
    if not isinstance(doc, dict):
        raise StorySyntaxError("top level: expected an object")
    version = _require(doc, "schema_version", str, "top level")
    if version != SCHEMA_VERSION:
        raise StorySyntaxError(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION!r})")

    locations = []
    for i, loc in enumerate(_require(doc, "locations", list, "top level")):
        path = f"locations[{i}]"
        if not isinstance(loc, dict):
            raise StorySyntaxError(f"{path}: expected an object")
        locations.append(LocationDef(
            id=_require(loc, "id", str, path),
            name=_opt(loc, "name", str, loc.get("id", ""), path),
            adjacent=_str_list(loc, "adjacent", path),
            description=_opt(loc, "description", str, "", path),
        ))

    objects = []
    for i, obj in enumerate(_require(doc, "objects", list, "top level")):
        path = f"objects[{i}]"
        if not isinstance(obj, dict):
            raise StorySyntaxError(f"{path}: expected an object")
        objects.append(_parse_object(obj, path))

    characters = []
    for i, ch in enumerate(_require(doc, "characters", list, "top level")):
        path = f"characters[{i}]"
        if not isinstance(ch, dict):
            raise StorySyntaxError(f"{path}: expected an object")
        characters.append(CharacterDef(
            id=_require(ch, "id", str, path),
            name=_opt(ch, "name", str, ch.get("id", ""), path),
            location=_require(ch, "location", str, path),
            topics_responded=_str_list(ch, "topics_responded", path),
            sells=_str_list(ch, "sells", path),
            wants=tuple(_parse_want(w, f"{path}.wants[{j}]")
                        for j, w in enumerate(_opt(ch, "wants", list, [], path))),
            description=_opt(ch, "description", str, "", path),
        ))

    topics = []
    for i, tp in enumerate(_require(doc, "topics", list, "top level")):
        path = f"topics[{i}]"
        if not isinstance(tp, dict):
            raise StorySyntaxError(f"{path}: expected an object")
        topics.append(TopicDef(
            id=_require(tp, "id", str, path),
            name=_opt(tp, "name", str, tp.get("id", ""), path),
            prereq_topics=_str_list(tp, "prereq_topics", path),
            prereq_plots=_str_list(tp, "prereq_plots", path),
        ))

    # Normalize placement: an object listed in some container's contents gets
    # its container field set, so downstream code has a single placement view.
    contained_by: dict[str, str] = {}
    for obj in objects:
        for c in obj.contents:
            contained_by.setdefault(c, obj.id)
    objects = [
        o if o.container or o.id not in contained_by or o.location or o.holder
        else dataclasses.replace(o, container=contained_by[o.id])
        for o in objects
    ]

    plot_points = []
    for i, pp in enumerate(_require(doc, "plot_points", list, "top level")):
        path = f"plot_points[{i}]"
        if not isinstance(pp, dict):
            raise StorySyntaxError(f"{path}: expected an object")
        plot_points.append(PlotPointDef(
            id=_require(pp, "id", str, path),
            trigger=_parse_condition(_require(pp, "trigger", dict, path), f"{path}.trigger"),
            prerequisites=_str_list(pp, "prerequisites", path),
            is_ending=_opt(pp, "is_ending", bool, False, path),
            narration=_opt(pp, "narration", str, "", path),
        ))

    world = WorldSpec(
        locations=tuple(locations),
        objects=tuple(objects),
        characters=tuple(characters),
        topics=tuple(topics),
        plot_points=tuple(plot_points),
        start_location=_require(doc, "start_location", str, "top level"),
        title=_opt(doc, "title", str, "", "top level"),
    )
    validate_world(world)
    return world


def load_world(source: str) -> WorldSpec:
    """Parse and validate a story JSON document.

    Raises StorySyntaxError (with line info for JSON-level problems) or
    StoryValidationError naming the offending id.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as e:
        raise StorySyntaxError(f"invalid JSON: {e.msg}", line=e.lineno, column=e.colno) from e
    return parse_world(doc)


def load_world_file(path) -> WorldSpec:
    with open(path, "r", encoding="utf-8") as f:
        return load_world(f.read())


# ---------------------------------------------------------------------------
# Validation


def _check_unique(ids: list[str], category: str):
    seen = set()
    for i in ids:
        if i in seen:
            raise StoryValidationError(f"duplicate {category} id {i!r}", offending_id=i)
        seen.add(i)


def _check_acyclic(edges: dict[str, tuple[str, ...]], category: str):
    state: dict[str, int] = {}  # 0 visiting, 1 done

    def visit(node: str, stack: list[str]):
        mark = state.get(node)
        if mark == 1:
            return
        if mark == 0:
            cycle = " -> ".join(stack[stack.index(node):] + [node])
            raise StoryValidationError(f"cyclic {category}: {cycle}", offending_id=node)
        state[node] = 0
        stack.append(node)
        for nxt in edges.get(node, ()):
            visit(nxt, stack)
        stack.pop()
        state[node] = 1

    for node in edges:
        visit(node, [])


def validate_world(w: WorldSpec) -> None:
    _check_unique([x.id for x in w.locations], "location")
    _check_unique([x.id for x in w.objects], "object")
    _check_unique([x.id for x in w.characters], "character")
    _check_unique([x.id for x in w.topics], "topic")
    _check_unique([x.id for x in w.plot_points], "plot point")

    loc_ids = set(w.location_by_id)
    obj_ids = set(w.object_by_id)
    char_ids = set(w.character_by_id)
    topic_ids = set(w.topic_by_id)
    plot_ids = set(w.plot_by_id)

    if w.start_location not in loc_ids:
        raise StoryValidationError(f"start_location {w.start_location!r} is not a location",
                                   offending_id=w.start_location)

    for loc in w.locations:
        for adj in loc.adjacent:
            if adj not in loc_ids:
                raise StoryValidationError(f"location {loc.id!r} lists unknown neighbour {adj!r}",
                                           offending_id=adj)
            if loc.id not in w.location_by_id[adj].adjacent:
                raise StoryValidationError(
                    f"asymmetric adjacency: {loc.id!r} lists {adj!r} but not vice versa",
                    offending_id=loc.id)
            if adj == loc.id:
                raise StoryValidationError(f"location {loc.id!r} adjacent to itself", offending_id=loc.id)

    contained_by: dict[str, str] = {}
    for obj in w.objects:
        for c in obj.contents:
            if c not in obj_ids:
                raise StoryValidationError(f"object {obj.id!r} contains unknown object {c!r}",
                                           offending_id=c)
            if c in contained_by:
                raise StoryValidationError(f"object {c!r} listed in two containers", offending_id=c)
            contained_by[c] = obj.id

    for obj in w.objects:
        places = [bool(obj.location), bool(obj.container), bool(obj.holder), obj.id in contained_by]
        if obj.container and contained_by.get(obj.id) not in ("", None, obj.container):
            raise StoryValidationError(f"object {obj.id!r} placement conflicts with a contents list",
                                       offending_id=obj.id)
        if obj.container and obj.id in contained_by and contained_by[obj.id] != obj.container:
            raise StoryValidationError(f"object {obj.id!r} placed in two containers", offending_id=obj.id)
        if sum(1 for p in places if p) == 0:
            raise StoryValidationError(f"object {obj.id!r} has no placement", offending_id=obj.id)
        if bool(obj.location) + bool(obj.container or obj.id in contained_by) + bool(obj.holder) > 1:
            raise StoryValidationError(f"object {obj.id!r} has more than one placement", offending_id=obj.id)
        if obj.location and obj.location not in loc_ids:
            raise StoryValidationError(f"object {obj.id!r} placed in unknown location {obj.location!r}",
                                       offending_id=obj.id)
        if obj.container and obj.container not in obj_ids:
            raise StoryValidationError(f"object {obj.id!r} placed in unknown container {obj.container!r}",
                                       offending_id=obj.id)
        if obj.holder and obj.holder not in char_ids:
            raise StoryValidationError(f"object {obj.id!r} held by unknown character {obj.holder!r}",
                                       offending_id=obj.id)
        if obj.locked and not obj.key_id:
            raise StoryValidationError(f"locked object {obj.id!r} has no key_id", offending_id=obj.id)
        if obj.locked and not obj.can_open:
            raise StoryValidationError(f"locked object {obj.id!r} is not openable", offending_id=obj.id)
        if obj.key_id and obj.key_id not in obj_ids:
            raise StoryValidationError(f"object {obj.id!r} has unknown key {obj.key_id!r}",
                                       offending_id=obj.id)
        if obj.open and not obj.can_open:
            raise StoryValidationError(f"object {obj.id!r} is open but not openable", offending_id=obj.id)
        if obj.use_effect:
            for r in obj.use_effect.reveals:
                if r not in obj_ids:
                    raise StoryValidationError(f"object {obj.id!r} use_effect reveals unknown {r!r}",
                                               offending_id=obj.id)

    # Containment must be acyclic (an object inside itself is meaningless).
    _check_acyclic({o.id: tuple(c for c in (contained_by.get(o.id),) if c) for o in w.objects},
                   "containment")

    for ch in w.characters:
        if ch.location not in loc_ids:
            raise StoryValidationError(f"character {ch.id!r} at unknown location {ch.location!r}",
                                       offending_id=ch.id)
        for t in ch.topics_responded:
            if t not in topic_ids:
                raise StoryValidationError(f"character {ch.id!r} responds to unknown topic {t!r}",
                                           offending_id=ch.id)
        for s in ch.sells:
            if s not in obj_ids:
                raise StoryValidationError(f"character {ch.id!r} sells unknown object {s!r}",
                                           offending_id=ch.id)
            if w.object_by_id[s].holder != ch.id:
                raise StoryValidationError(
                    f"character {ch.id!r} sells {s!r} but does not hold it", offending_id=s)
        for want in ch.wants:
            if want.object_id not in obj_ids:
                raise StoryValidationError(f"character {ch.id!r} wants unknown object {want.object_id!r}",
                                           offending_id=ch.id)
            for r in want.reveals:
                if r not in obj_ids:
                    raise StoryValidationError(f"character {ch.id!r} would reveal unknown {r!r}",
                                               offending_id=ch.id)

    for tp in w.topics:
        for t in tp.prereq_topics:
            if t not in topic_ids:
                raise StoryValidationError(f"topic {tp.id!r} requires unknown topic {t!r}",
                                           offending_id=tp.id)
        for p in tp.prereq_plots:
            if p not in plot_ids:
                raise StoryValidationError(f"topic {tp.id!r} requires unknown plot point {p!r}",
                                           offending_id=tp.id)
    _check_acyclic({t.id: t.prereq_topics for t in w.topics}, "topic prerequisites")

    for pp in w.plot_points:
        for pre in pp.prerequisites:
            if pre not in plot_ids:
                raise StoryValidationError(f"plot point {pp.id!r} requires unknown {pre!r}",
                                           offending_id=pp.id)
        for atom in pp.trigger.atoms():
            ok = {
                "plot_visited": plot_ids,
                "object_seen": obj_ids,
                "in_inventory": obj_ids,
                "topic_mentioned": topic_ids,
                "at_location": loc_ids,
            }
            if atom.kind == "last_action":
                from .engine import ACTION_KINDS  # local import avoids a cycle at module load
                if atom.action_kind not in ACTION_KINDS:
                    raise StoryValidationError(
                        f"plot point {pp.id!r} trigger uses unknown action kind {atom.action_kind!r}",
                        offending_id=pp.id)
                if atom.ref not in obj_ids | loc_ids | topic_ids:
                    raise StoryValidationError(
                        f"plot point {pp.id!r} trigger targets unknown id {atom.ref!r}",
                        offending_id=pp.id)
            elif atom.ref not in ok[atom.kind]:
                raise StoryValidationError(
                    f"plot point {pp.id!r} trigger references unknown id {atom.ref!r}",
                    offending_id=pp.id)

    _check_acyclic({p.id: p.prerequisites for p in w.plot_points}, "plot-point prerequisites")

    if not any(p.is_ending for p in w.plot_points):
        raise StoryValidationError("story has no ending plot point")


# ---------------------------------------------------------------------------
# Serialization (canonical; load_world(serialize_world(w)) == w)


def world_to_doc(w: WorldSpec) -> dict:
    def obj_doc(o: ObjectDef) -> dict:
        d: dict = {"id": o.id, "name": o.name}
        if o.location:
            d["location"] = o.location
        elif o.container:
            d["location"] = {"in": o.container}
        elif o.holder:
            d["location"] = {"character": o.holder}
        for key, val, default in (
            ("can_open", o.can_open, False), ("can_take", o.can_take, False),
            ("locked", o.locked, False), ("open", o.open, False), ("revealed", o.revealed, True),
        ):
            if val != default:
                d[key] = val
        if o.key_id:
            d["key_id"] = o.key_id
        if o.contents:
            d["contents"] = list(o.contents)
        if o.price is not None:
            d["price"] = o.price
        if o.use_effect is not None:
            d["use_effect"] = {"reveals": list(o.use_effect.reveals)}
        if o.description:
            d["description"] = o.description
        return d

    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "start_location": w.start_location,
        "locations": [
            {"id": x.id, "name": x.name, "adjacent": list(x.adjacent),
             **({"description": x.description} if x.description else {})}
            for x in w.locations
        ],
        "objects": [obj_doc(o) for o in w.objects],
        "characters": [
            {"id": c.id, "name": c.name, "location": c.location,
             "topics_responded": list(c.topics_responded), "sells": list(c.sells),
             "wants": [{"object": wd.object_id, "reveals": list(wd.reveals)} for wd in c.wants],
             **({"description": c.description} if c.description else {})}
            for c in w.characters
        ],
        "topics": [
            {"id": t.id, "name": t.name, "prereq_topics": list(t.prereq_topics),
             "prereq_plots": list(t.prereq_plots)}
            for t in w.topics
        ],
        "plot_points": [
            {"id": p.id, "trigger": _condition_to_json(p.trigger),
             "prerequisites": list(p.prerequisites), "is_ending": p.is_ending,
             **({"narration": p.narration} if p.narration else {})}
            for p in w.plot_points
        ],
    }
    if w.title:
        doc["title"] = w.title
    return doc


def serialize_world(w: WorldSpec) -> str:
    return json.dumps(world_to_doc(w), indent=2, sort_keys=True)

"""Trace persistence and grouping.

Traces are single JSON documents (one per trace) under
``<root>/traces/<source>/<trace_id>.json``.  Each carries the fingerprint of
the story it was played on, so a trace can never silently replay against the
wrong world.  Groups are formed either by the ending reached or by one
binarized player-profile factor with the other three factors matched.
"""

from __future__ import annotations

import json
import os
import tempfile
from collections import Counter
from dataclasses import dataclass

from .engine import ActionInstance, ReplayError, replay
from .learning import Demonstration
from .policy import GeneratedTrace, TrainedPolicy, rollout
from .rewards import RewardModel
from .story import WorldSpec

TRACE_SCHEMA_VERSION = "1"
SOURCES = ("human", "policy", "synthetic-expert")
PROFILE_FACTORS = ("familiarity", "gaming_experience", "preference_explore", "persistence")


class TraceStoreError(Exception):
    pass


@dataclass(frozen=True)
class PlayerProfile:
    familiarity: float
    gaming_experience: float
    preference_explore: float
    persistence: float

    def __post_init__(self):
        for name in PROFILE_FACTORS:
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.familiarity, self.gaming_experience,
                self.preference_explore, self.persistence)


def binarize(p: PlayerProfile) -> tuple[int, int, int, int]:
    """Factor >= 0.5 maps to 1, else 0 (ties go high)."""
    return tuple(1 if v >= 0.5 else 0 for v in p.as_tuple())


@dataclass(frozen=True)
class TimedAction:
    action: ActionInstance
    t_ms: int


@dataclass(frozen=True)
class Trace:
    trace_id: str
    player_id: str
    source: str
    story_fingerprint: str
    actions: tuple[TimedAction, ...]
    profile: PlayerProfile | None = None
    end_reached: str | None = None

    def action_list(self) -> list[ActionInstance]:
        return [t.action for t in self.actions]

    def to_doc(self) -> dict:
        doc: dict = {
            "schema_version": TRACE_SCHEMA_VERSION,
            "trace_id": self.trace_id,
            "player_id": self.player_id,
            "source": self.source,
            "story_fingerprint": self.story_fingerprint,
            "actions": [{**t.action.to_doc(), "t_ms": t.t_ms} for t in self.actions],
        }
        if self.profile is not None:
            doc["profile"] = {name: getattr(self.profile, name) for name in PROFILE_FACTORS}
        if self.end_reached is not None:
            doc["end_reached"] = self.end_reached
        return doc

    @staticmethod
    def from_doc(doc: dict) -> "Trace":
        if doc.get("schema_version") != TRACE_SCHEMA_VERSION:
            raise TraceStoreError(f"unsupported trace schema_version {doc.get('schema_version')!r}")
        profile = None
        if "profile" in doc:
            profile = PlayerProfile(**{name: doc["profile"][name] for name in PROFILE_FACTORS})
        return Trace(
            trace_id=doc["trace_id"],
            player_id=doc["player_id"],
            source=doc["source"],
            story_fingerprint=doc["story_fingerprint"],
            actions=tuple(TimedAction(ActionInstance.from_doc(a), int(a["t_ms"]))
                          for a in doc["actions"]),
            profile=profile,
            end_reached=doc.get("end_reached"),
        )


@dataclass(frozen=True)
class TraceGroup:
    group_id: str
    criterion: str                 # "end:<ending>" or "profile:<factor>:<low|high>"
    members: tuple[Trace, ...]

    @property
    def member_ids(self) -> tuple[str, ...]:
        return tuple(t.trace_id for t in self.members)


class TraceStore:
    """Append-only corpus of traces, one JSON file per trace, written
    atomically (temp file + rename)."""

    def __init__(self, root):
        self.root = os.fspath(root)

    def _dir(self, source: str) -> str:
        return os.path.join(self.root, "traces", source)

    def path_for(self, trace: Trace) -> str:
        return os.path.join(self._dir(trace.source), f"{trace.trace_id}.json")

    def save(self, trace: Trace) -> str:
        if trace.source not in SOURCES:
            raise TraceStoreError(f"unknown trace source {trace.source!r}")
        d = self._dir(trace.source)
        os.makedirs(d, exist_ok=True)
        path = self.path_for(trace)
        fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump(trace.to_doc(), f, indent=2, sort_keys=True)
                f.write("\n")
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return path

    def load_all(self, source: str | None = None) -> list[Trace]:
        sources = [source] if source else list(SOURCES)
        out: list[Trace] = []
        for src in sources:
            d = self._dir(src)
            if not os.path.isdir(d):
                continue
            for name in sorted(os.listdir(d)):
                if name.endswith(".json"):
                    with open(os.path.join(d, name), "r", encoding="utf-8") as f:
                        out.append(Trace.from_doc(json.load(f)))
        return out

    def load(self, trace_id: str) -> Trace:
        for t in self.load_all():
            if t.trace_id == trace_id:
                return t
        raise TraceStoreError(f"no trace {trace_id!r} in {self.root}")


# ---------------------------------------------------------------------------
# Grouping


def group_by_end(traces: list[Trace]) -> list[TraceGroup]:
    """One group per ending observed among the traces; traces that reached no
    ending belong to no group."""
    endings: list[str] = []
    for t in traces:
        if t.end_reached and t.end_reached not in endings:
            endings.append(t.end_reached)
    return [
        TraceGroup(group_id=f"end:{e}", criterion=f"end:{e}",
                   members=tuple(t for t in traces if t.end_reached == e))
        for e in sorted(endings)
    ]


def group_by_profile(traces: list[Trace], factor: str) -> tuple[TraceGroup, TraceGroup]:
    """Split by one binarized profile factor, holding the other three factors
    constant: only traces whose other-factor combination is the modal one are
    considered.  Either side may be empty."""
    if factor not in PROFILE_FACTORS:
        raise ValueError(f"unknown profile factor {factor!r}")
    fi = PROFILE_FACTORS.index(factor)
    profiled = [t for t in traces if t.profile is not None]
    others = {}
    for t in profiled:
        bits = binarize(t.profile)
        others[t.trace_id] = tuple(b for i, b in enumerate(bits) if i != fi)
    low_members, high_members = [], []
    if profiled:
        counts = Counter(others.values())
        top = max(counts.values())
        modal = min(c for c, n in counts.items() if n == top)  # deterministic tie-break
        for t in profiled:
            if others[t.trace_id] != modal:
                continue
            if binarize(t.profile)[fi] == 1:
                high_members.append(t)
            else:
                low_members.append(t)
    return (
        TraceGroup(f"profile:{factor}:low", f"profile:{factor}:low", tuple(low_members)),
        TraceGroup(f"profile:{factor}:high", f"profile:{factor}:high", tuple(high_members)),
    )


# ---------------------------------------------------------------------------
# Conversion and synthesis


def to_demonstrations(w: WorldSpec, g: TraceGroup) -> list[Demonstration]:
    """Replay each member trace into its (state, action) pairs."""
    out = []
    fp = w.fingerprint()
    for t in g.members:
        if t.story_fingerprint != fp:
            raise TraceStoreError(
                f"trace {t.trace_id!r} was recorded on a different story "
                f"(fingerprint {t.story_fingerprint[:12]}... != {fp[:12]}...)")
        try:
            result = replay(w, t.action_list())
        except ReplayError as e:
            raise TraceStoreError(f"trace {t.trace_id!r} does not replay: {e}") from e
        out.append(Demonstration(pairs=tuple(result.pairs), source_trace_id=t.trace_id))
    return out


def trace_from_generated(w: WorldSpec, gen: GeneratedTrace, trace_id: str,
                         source: str = "policy", player_id: str = "policy") -> Trace:
    return Trace(
        trace_id=trace_id,
        player_id=player_id,
        source=source,
        story_fingerprint=w.fingerprint(),
        actions=tuple(TimedAction(a, i) for i, a in enumerate(gen.actions)),
        end_reached=gen.end_reached,
    )


def synthesize_expert_traces(w: WorldSpec, rm: RewardModel, n: int, beta: float,
                             seed: int, h: int = 4, cap: int = 100) -> list[Trace]:
    """n sampled-mode rollouts under the given reward; stands in for human
    demonstrations when none are available.  Deterministic given the seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    from .learning import PlanningGraph  # shared across the n rollouts

    graph = PlanningGraph(w, rm.feature_map)
    out = []
    for i in range(n):
        p = TrainedPolicy(reward_model=rm, h=h, beta=beta, mode="sampled",
                          seed=seed * 100003 + i)
        gen = rollout(p, w, cap=cap, graph=graph)
        out.append(trace_from_generated(
            w, gen, trace_id=f"expert-{seed}-{i:03d}",
            source="synthetic-expert", player_id=f"expert-{seed}-{i:03d}"))
    return out

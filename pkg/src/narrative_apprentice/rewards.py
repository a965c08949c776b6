"""Linear reward over bounded state features.

The reward is R(s) = w . phi(s), with phi mapping states into [0,1]^k and the
weight vector constrained to the L1 ball of radius 1.  The feature set is
dominated by per-plot-point indicators (plot points being the currency the
trace-similarity metric is measured in), plus per-ending indicators and four
exploration fractions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .engine import GameState, inventory, known_topics, locations_available
from .story import WorldSpec


class DimensionMismatchError(Exception):
    pass


FRACTION_FEATURES = (
    "objects_seen_fraction",
    "topics_known_fraction",
    "locations_available_fraction",
    "inventory_fraction",
)


@dataclass(frozen=True)
class FeatureMap:
    """Ordered feature descriptors for one world.

    Descriptors, in order: ``plot:<id>`` for every plot point (world order),
    ``ending:<id>`` for every ending (world order), then the four fractions.
    Every component is in [0,1] for every reachable state; the indicators are
    exactly 0/1.
    """

    descriptors: tuple[str, ...]
    world_fingerprint: str

    @property
    def k(self) -> int:
        return len(self.descriptors)

    def fingerprint(self) -> str:
        basis = json.dumps({"descriptors": self.descriptors, "world": self.world_fingerprint})
        return hashlib.sha256(basis.encode("utf-8")).hexdigest()

    @staticmethod
    def for_world(w: WorldSpec) -> "FeatureMap":
        names = [f"plot:{p.id}" for p in w.plot_points]
        names += [f"ending:{e}" for e in w.endings]
        names += list(FRACTION_FEATURES)
        return FeatureMap(descriptors=tuple(names), world_fingerprint=w.fingerprint())


def phi(w: WorldSpec, s: GameState, fm: FeatureMap) -> np.ndarray:
    """Feature vector of a state; deterministic, every component in [0,1]."""
    n_plots = len(w.plot_points)
    endings = w.endings
    out = np.zeros(fm.k)
    for i, p in enumerate(w.plot_points):
        if p.id in s.visited_plots:
            out[i] = 1.0
    for j, e in enumerate(endings):
        if e in s.visited_plots:
            out[n_plots + j] = 1.0
    base = n_plots + len(endings)
    n_objects = len(w.objects)
    out[base + 0] = (sum(1 for o in s.objects if o.seen) / n_objects) if n_objects else 0.0
    n_topics = len(w.topics)
    out[base + 1] = (len(known_topics(w, s)) / n_topics) if n_topics else 0.0
    out[base + 2] = len(locations_available(w, s)) / len(w.locations)
    acquirable = {o.id for o in w.objects if o.can_take}
    for c in w.characters:
        acquirable.update(c.sells)
    out[base + 3] = (len(inventory(w, s)) / len(acquirable)) if acquirable else 0.0
    return out


@dataclass(frozen=True)
class RewardModel:
    weights: np.ndarray
    feature_map: FeatureMap

    def __post_init__(self):
        arr = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", arr)
        if arr.shape != (self.feature_map.k,):
            raise DimensionMismatchError(
                f"weights shape {arr.shape} does not match k={self.feature_map.k}")

    def __eq__(self, other):
        return (isinstance(other, RewardModel)
                and self.feature_map == other.feature_map
                and np.array_equal(self.weights, other.weights))


def reward(rm: RewardModel, w: WorldSpec, s: GameState) -> float:
    """w . phi(s); bounded by ||w||_1 * max|phi| <= 1."""
    return float(rm.weights @ phi(w, s, rm.feature_map))


def project_l1(v: np.ndarray, radius: float = 1.0) -> np.ndarray:
    """Euclidean projection onto the L1 ball {x : ||x||_1 <= radius}.

    Sort-based algorithm: find the soft threshold theta so the shrunk vector
    lands on the simplex of the right radius; inside-ball inputs pass through
    unchanged.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    v = np.asarray(v, dtype=float)
    mags = np.abs(v)
    if mags.sum() <= radius:
        return v.copy()
    u = np.sort(mags)[::-1]
    cssv = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(u) + 1) > (cssv - radius))[0][-1]
    theta = (cssv[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(mags - theta, 0.0)


# ---------------------------------------------------------------------------
# Weight documents (descriptor name -> weight, plus compatibility fingerprint)


def weights_to_doc(rm: RewardModel) -> dict:
    return {
        "schema_version": "1",
        "feature_map_fingerprint": rm.feature_map.fingerprint(),
        "weights": {name: float(x) for name, x in zip(rm.feature_map.descriptors, rm.weights)},
    }


def weights_from_doc(doc: dict, fm: FeatureMap) -> RewardModel:
    if doc.get("feature_map_fingerprint") != fm.fingerprint():
        raise DimensionMismatchError("weights document was produced for a different feature map")
    table = doc["weights"]
    missing = [n for n in fm.descriptors if n not in table]
    if missing:
        raise DimensionMismatchError(f"weights document missing descriptors: {missing[:3]}")
    return RewardModel(weights=np.array([table[n] for n in fm.descriptors]), feature_map=fm)


def save_weights(rm: RewardModel, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(weights_to_doc(rm), f, indent=2, sort_keys=True)
        f.write("\n")


def load_weights(path, fm: FeatureMap) -> RewardModel:
    with open(path, "r", encoding="utf-8") as f:
        return weights_from_doc(json.load(f), fm)


def ending_seeker_weights(w: WorldSpec, fm: FeatureMap, ending_id: str) -> RewardModel:
    """Reward that pulls toward one ending: the ending indicator plus the
    indicators of its prerequisite closure, L1-normalized.  Used to synthesize
    expert traces when no human corpus is on hand; a bare ending indicator
    gives a bounded-horizon planner no signal until the whole prerequisite
    chain is within the lookahead."""
    if ending_id not in w.endings:
        raise ValueError(f"{ending_id!r} is not an ending of this world")
    chain: set[str] = set()
    stack = [ending_id]
    while stack:
        pid = stack.pop()
        if pid in chain:
            continue
        chain.add(pid)
        stack.extend(w.plot_by_id[pid].prerequisites)
    weights = np.zeros(fm.k)
    for i, name in enumerate(fm.descriptors):
        if name == f"ending:{ending_id}":
            weights[i] = 2.0  # the ending counts double
        elif name.startswith("plot:") and name[5:] in chain:
            weights[i] = 1.0
    weights /= np.abs(weights).sum()
    return RewardModel(weights=weights, feature_map=fm)

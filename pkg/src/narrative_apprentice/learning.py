"""Receding-horizon maximum-likelihood IRL.

The learner scores demonstrated actions with a Boltzmann policy over
finite-horizon soft action values:

    Q_d(s, a) = R(s') + V_{d-1}(s'),   s' = T(s, a)
    V_0 = 0,  V_j(s) = sum_a pi_j(a|s) Q_j(s, a),  pi_j = softmax(beta Q_j)

with terminal successors contributing V = 0 at every depth and policies taken
over applicable actions only.  The demonstration log-likelihood is
sum log pi_h(a_i | s_i); its gradient in the reward weights is exact, by
chain rule through the recursion (softmax Jacobian included), and is checked
against central finite differences in the test suite.

All transition and feature lookups are cached in a PlanningGraph so repeated
evaluations during training and rollouts are pure array work.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    ActionInstance,
    GameState,
    TerminalStateError,
    applicable_actions,
    apply_action,
    is_terminal,
    state_key,
)
from .rewards import FeatureMap, RewardModel, phi, project_l1
from .story import WorldSpec


class EmptyActionSetError(Exception):
    pass


class DemonstrationMismatchError(Exception):
    def __init__(self, trace_id: str, index: int, message: str):
        self.trace_id = trace_id
        self.index = index
        super().__init__(f"demonstration {trace_id!r}, pair {index}: {message}")


@dataclass(frozen=True)
class LearnerConfig:
    h: int
    beta: float
    max_iterations: int = 10
    step_size: float = 0.1
    backtracking: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("horizon must be >= 1")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


@dataclass(frozen=True)
class Demonstration:
    pairs: tuple[tuple[GameState, ActionInstance], ...]
    source_trace_id: str = ""


@dataclass(frozen=True)
class IterationEntry:
    iteration: int
    log_likelihood: float
    step_size_used: float
    wall_clock_s: float


@dataclass(frozen=True)
class TrainingRecord:
    entries: tuple[IterationEntry, ...]
    final_model: RewardModel
    config: LearnerConfig

    @property
    def log_likelihoods(self) -> list[float]:
        return [e.log_likelihood for e in self.entries]

    def to_csv(self) -> str:
        lines = ["iteration,log_likelihood,step_size_used"]
        for e in self.entries:
            lines.append(f"{e.iteration},{e.log_likelihood!r},{e.step_size_used!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Transition/feature cache


class PlanningGraph:
    """Lazily expanded graph of engine states.

    Per expanded node it caches the ordered applicable actions, successor node
    ids, successor feature vectors and terminal flags, padded into flat arrays
    so soft-value recursions vectorize across the whole graph.  Transitions
    and features do not depend on the reward weights, so one graph serves any
    number of likelihood evaluations, training runs and rollouts.
    """

    def __init__(self, world: WorldSpec, fm: FeatureMap):
        self.world = world
        self.fm = fm
        self.k = fm.k
        self._key2idx: dict = {}
        self._states: list[GameState] = []
        self._terminal: list[bool] = []
        self._expanded: list[bool] = []
        self._actions: list[list[ActionInstance] | None] = []
        cap, a_cap = 256, 8
        self._succ = np.zeros((cap, a_cap), dtype=np.int32)
        self._phi = np.zeros((cap, a_cap, self.k))
        self._term = np.zeros((cap, a_cap), dtype=bool)
        self._mask = np.zeros((cap, a_cap), dtype=bool)

    @property
    def n_nodes(self) -> int:
        return len(self._states)

    def state_of(self, idx: int) -> GameState:
        return self._states[idx]

    def actions_of(self, idx: int) -> list[ActionInstance]:
        acts = self._actions[idx]
        if acts is None:
            raise ValueError("node not expanded")
        return acts

    def successor(self, idx: int, a_idx: int) -> int:
        return int(self._succ[idx, a_idx])

    def is_terminal_node(self, idx: int) -> bool:
        return self._terminal[idx]

    def _grow_nodes(self, need: int):
        cap = self._succ.shape[0]
        if need <= cap:
            return
        new = max(need, cap * 2)
        self._succ = np.vstack([self._succ, np.zeros((new - cap, self._succ.shape[1]), np.int32)])
        self._phi = np.concatenate(
            [self._phi, np.zeros((new - cap, self._phi.shape[1], self.k))], axis=0)
        self._term = np.vstack([self._term, np.zeros((new - cap, self._term.shape[1]), bool)])
        self._mask = np.vstack([self._mask, np.zeros((new - cap, self._mask.shape[1]), bool)])

    def _grow_actions(self, need: int):
        a_cap = self._succ.shape[1]
        if need <= a_cap:
            return
        new = max(need, a_cap * 2)
        pad = new - a_cap
        n = self._succ.shape[0]
        self._succ = np.hstack([self._succ, np.zeros((n, pad), np.int32)])
        self._phi = np.concatenate([self._phi, np.zeros((n, pad, self.k))], axis=1)
        self._term = np.hstack([self._term, np.zeros((n, pad), bool)])
        self._mask = np.hstack([self._mask, np.zeros((n, pad), bool)])

    def add_state(self, s: GameState) -> int:
        key = state_key(self.world, s)
        idx = self._key2idx.get(key)
        if idx is not None:
            return idx
        idx = len(self._states)
        self._key2idx[key] = idx
        self._states.append(s)
        self._terminal.append(is_terminal(self.world, s))
        self._expanded.append(False)
        self._actions.append(None)
        self._grow_nodes(idx + 1)
        return idx

    def _expand(self, idx: int):
        s = self._states[idx]
        acts = applicable_actions(self.world, s)
        self._grow_actions(len(acts))
        for j, a in enumerate(acts):
            out = apply_action(self.world, s, a)
            sidx = self.add_state(out.next_state)
            self._succ[idx, j] = sidx
            self._phi[idx, j] = phi(self.world, out.next_state, self.fm)
            self._term[idx, j] = out.is_terminal
            self._mask[idx, j] = True
        self._actions[idx] = acts
        self._expanded[idx] = True

    def ensure(self, s: GameState, horizon: int) -> int:
        """Create the node for ``s`` and expand its neighbourhood so that
        depth-``horizon`` soft values at ``s`` are computable (every
        non-terminal node within horizon-1 steps gets expanded)."""
        root = self.add_state(s)
        frontier = {root}
        for _ in range(horizon):
            nxt: set[int] = set()
            for idx in frontier:
                if self._terminal[idx]:
                    continue
                if not self._expanded[idx]:
                    self._expand(idx)
                row = self._succ[idx]
                nxt.update(int(x) for x in row[self._mask[idx]])
            frontier = nxt
        return root

    # -- vectorized soft-value machinery ------------------------------------

    def _padded(self):
        n = self.n_nodes
        return self._succ[:n], self._phi[:n], self._term[:n], self._mask[:n]

    def _value_levels(self, wv: np.ndarray, beta: float, h: int, want_grad: bool):
        """V_{h-1} (and its gradient) across all nodes, plus cached R."""
        succ, phi_m, term, mask = self._padded()
        n = self.n_nodes
        r = phi_m @ wv                       # (n, A): R(s') per edge
        v = np.zeros(n)
        dv = np.zeros((n, self.k)) if want_grad else None
        for _ in range(h - 1):
            q = r + np.where(term | ~mask, 0.0, v[succ])
            pi = _masked_softmax(q, mask, beta)
            if want_grad:
                dq = phi_m + np.where((term | ~mask)[:, :, None], 0.0, dv[succ])
                dbar = np.einsum("na,nak->nk", pi, dq)
                pq = pi * q
                dv = dbar + beta * (np.einsum("na,nak->nk", pq, dq)
                                    - pq.sum(axis=1)[:, None] * dbar)
            v = (pi * q).sum(axis=1)
        return r, v, dv

    def q_rows(self, rows: np.ndarray, wv: np.ndarray, beta: float, h: int,
               want_grad: bool = False):
        """Depth-h Q values (and gradients) at the given node rows."""
        succ, phi_m, term, mask = self._padded()
        r, v, dv = self._value_levels(wv, beta, h, want_grad)
        sub = succ[rows]
        dead = (term | ~mask)[rows]
        q = r[rows] + np.where(dead, 0.0, v[sub])
        dq = None
        if want_grad:
            dq = phi_m[rows] + np.where(dead[:, :, None], 0.0, dv[sub])
        return q, mask[rows], dq


def _masked_softmax(q: np.ndarray, mask: np.ndarray, beta: float) -> np.ndarray:
    """Row-wise Boltzmann weights over the valid lanes; rows with no valid
    lane come out all-zero (their soft value is 0 by convention)."""
    neg = ~mask
    qmax = np.max(np.where(mask, q, -np.inf), axis=1)
    qmax = np.where(np.isfinite(qmax), qmax, 0.0)
    z = beta * (q - qmax[:, None])
    z[neg] = -np.inf
    e = np.exp(z)
    tot = e.sum(axis=1)
    return e / np.where(tot > 0, tot, 1.0)[:, None]


# ---------------------------------------------------------------------------
# Public operations


def boltzmann_policy(q: dict[ActionInstance, float], beta: float) -> dict[ActionInstance, float]:
    """pi(a) proportional to exp(beta Q(a)), computed with max subtraction.

    beta = 0 yields the exactly uniform distribution; adding a constant to
    every Q leaves the distribution unchanged.
    """
    if not q:
        raise EmptyActionSetError("no actions to choose from")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    values = list(q.values())
    if not all(math.isfinite(v) for v in values):
        raise ValueError("Q values must be finite")
    if beta == 0.0:
        u = 1.0 / len(q)
        return {a: u for a in q}
    qmax = max(values)
    weights = {a: math.exp(beta * (v - qmax)) for a, v in q.items()}
    tot = sum(weights.values())
    return {a: x / tot for a, x in weights.items()}


def soft_q(w: WorldSpec, rm: RewardModel, s: GameState, depth: int, beta: float,
           graph: PlanningGraph | None = None) -> dict[ActionInstance, float]:
    """Finite-horizon soft action values at one state (see module docstring
    for the recursion).  Pass a shared PlanningGraph to amortize expansion."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if is_terminal(w, s):
        raise TerminalStateError("soft_q needs a non-terminal state")
    if graph is None:
        graph = PlanningGraph(w, rm.feature_map)
    root = graph.ensure(s, depth)
    q, mask, _ = graph.q_rows(np.array([root]), rm.weights, beta, depth)
    acts = graph.actions_of(root)
    return {a: float(q[0, j]) for j, a in enumerate(acts)}


class _Objective:
    """Demonstration log-likelihood (and gradient) over a shared graph."""

    def __init__(self, world: WorldSpec, fm: FeatureMap, demos: list[Demonstration], h: int,
                 graph: PlanningGraph | None = None):
        self.graph = graph or PlanningGraph(world, fm)
        self.h = h
        rows, a_cols = [], []
        for demo in demos:
            for i, (s, a) in enumerate(demo.pairs):
                if is_terminal(world, s):
                    raise DemonstrationMismatchError(demo.source_trace_id, i,
                                                     "state is terminal")
                idx = self.graph.ensure(s, h)
                try:
                    col = self.graph.actions_of(idx).index(a)
                except ValueError:
                    raise DemonstrationMismatchError(
                        demo.source_trace_id, i,
                        f"{a.kind}({a.target}) is not applicable in its paired state") from None
                rows.append(idx)
                a_cols.append(col)
        self.rows = np.array(rows, dtype=np.int64)
        self.a_cols = np.array(a_cols, dtype=np.int64)

    def _log_pi(self, wv: np.ndarray, beta: float, want_grad: bool):
        if len(self.rows) == 0:
            return 0.0, np.zeros(self.graph.k)
        q, mask, dq = self.graph.q_rows(self.rows, wv, beta, self.h, want_grad)
        qmax = np.max(np.where(mask, q, -np.inf), axis=1)
        z = beta * (q - qmax[:, None])
        z[~mask] = -np.inf
        e = np.exp(z)
        tot = e.sum(axis=1)
        picked = np.arange(len(self.rows))
        log_pi = z[picked, self.a_cols] - np.log(tot)
        ll = float(log_pi.sum())
        if not want_grad:
            return ll, None
        pi = e / tot[:, None]
        dbar = np.einsum("na,nak->nk", pi, dq)
        grad = beta * (dq[picked, self.a_cols] - dbar)
        return ll, grad.sum(axis=0)

    def ll(self, wv: np.ndarray, beta: float) -> float:
        return self._log_pi(wv, beta, False)[0]

    def ll_and_grad(self, wv: np.ndarray, beta: float):
        return self._log_pi(wv, beta, True)


def log_likelihood(w: WorldSpec, rm: RewardModel, demos: list[Demonstration],
                   cfg: LearnerConfig) -> float:
    """Sum over demonstration pairs of log pi_h(a_i | s_i); empty input is 0
    (the empty product has likelihood 1)."""
    if not demos:
        return 0.0
    obj = _Objective(w, rm.feature_map, demos, cfg.h)
    return obj.ll(rm.weights, cfg.beta)


def grad_log_likelihood(w: WorldSpec, rm: RewardModel, demos: list[Demonstration],
                        cfg: LearnerConfig) -> np.ndarray:
    """Exact gradient of log_likelihood with respect to the reward weights."""
    if not demos:
        return np.zeros(rm.feature_map.k)
    obj = _Objective(w, rm.feature_map, demos, cfg.h)
    return obj.ll_and_grad(rm.weights, cfg.beta)[1]


_MAX_HALVINGS = 20


def train(w: WorldSpec, fm: FeatureMap, demos: list[Demonstration], cfg: LearnerConfig,
          graph: PlanningGraph | None = None) -> tuple[RewardModel, TrainingRecord]:
    """Projected gradient ascent on the demonstration log-likelihood.

    Starts from w = 0.  Each iteration ascends along the exact gradient with
    the configured step size, halving the step (up to 20 times) while the
    post-projection log-likelihood would decrease; a fully failed line search
    keeps the current weights and records a flat value.  With backtracking on
    the recorded sequence is therefore non-decreasing.
    """
    if not demos:
        raise ValueError("demos must be non-empty")
    obj = _Objective(w, fm, demos, cfg.h, graph=graph)
    wv = np.zeros(fm.k)
    t0 = time.perf_counter()
    ll = obj.ll(wv, cfg.beta)
    entries = [IterationEntry(0, ll, 0.0, time.perf_counter() - t0)]
    for it in range(1, cfg.max_iterations + 1):
        t0 = time.perf_counter()
        _, grad = obj.ll_and_grad(wv, cfg.beta)
        # Step along the normalized ascent direction: step_size is then an
        # actual displacement, commensurate with the radius-1 weight ball
        # regardless of how many demonstration pairs the gradient sums over.
        norm = float(np.linalg.norm(grad))
        direction = grad / norm if norm > 0 else grad
        step = cfg.step_size
        if not cfg.backtracking:
            wv = project_l1(wv + step * direction)
            ll = obj.ll(wv, cfg.beta)
            entries.append(IterationEntry(it, ll, step, time.perf_counter() - t0))
            continue
        accepted = False
        for _ in range(_MAX_HALVINGS + 1):
            cand = project_l1(wv + step * direction)
            cand_ll = obj.ll(cand, cfg.beta)
            if cand_ll >= ll:
                wv, ll, accepted = cand, cand_ll, True
                break
            step /= 2.0
        entries.append(IterationEntry(it, ll, step if accepted else 0.0,
                                      time.perf_counter() - t0))
    model = RewardModel(weights=wv, feature_map=fm)
    return model, TrainingRecord(entries=tuple(entries), final_model=model, config=cfg)


@dataclass(frozen=True)
class GridResult:
    records: dict  # (group_id, h, beta) -> TrainingRecord
    failures: dict = field(default_factory=dict)  # (group_id, h, beta) -> str


def run_grid(w: WorldSpec, fm: FeatureMap, groups: dict[str, list[Demonstration]],
             hs: list[int], betas: list[float], *, max_iterations: int = 10,
             step_size: float = 0.1, seed: int = 0) -> GridResult:
    """Train one cell per (group, h, beta); cells are independent, failures
    are recorded and the grid continues.  One transition cache is shared by
    every cell since transitions do not depend on the reward weights."""
    if not groups:
        raise ValueError("groups must be non-empty")
    records: dict = {}
    failures: dict = {}
    graph = PlanningGraph(w, fm)
    for group_id in sorted(groups):
        for h in hs:
            for beta in betas:
                cfg = LearnerConfig(h=h, beta=beta, max_iterations=max_iterations,
                                    step_size=step_size, seed=seed)
                try:
                    _, record = train(w, fm, groups[group_id], cfg, graph=graph)
                    records[(group_id, h, beta)] = record
                except Exception as e:  # noqa: BLE001 - per-cell isolation is the contract
                    failures[(group_id, h, beta)] = f"{type(e).__name__}: {e}"
    return GridResult(records=records, failures=failures)

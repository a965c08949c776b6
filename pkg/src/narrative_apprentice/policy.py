"""Executable policies extracted from learned reward models.

A policy replans with the full horizon after every action (receding-horizon
execution): soft Q values at depth h, then either the argmax action (greedy,
ties broken by the engine's deterministic action order) or a draw from the
Boltzmann distribution (sampled).  Sampled draws are a pure function of
(seed, state), so repeated calls at the same state agree and whole rollouts
are reproducible from the seed alone.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .engine import (
    ActionInstance,
    GameState,
    TerminalStateError,
    apply_action,
    ending_reached,
    initial_state,
    is_terminal,
    state_key,
)
from .learning import PlanningGraph, boltzmann_policy, soft_q
from .rewards import RewardModel
from .story import WorldSpec


@dataclass(frozen=True)
class TrainedPolicy:
    reward_model: RewardModel
    h: int
    beta: float
    mode: str = "greedy"            # "greedy" | "sampled"; greedy ignores seed
    seed: int = 0

    def __post_init__(self):
        if self.h < 1:
            raise ValueError("horizon must be >= 1")
        if self.mode not in ("greedy", "sampled"):
            raise ValueError("mode must be 'greedy' or 'sampled'")


@dataclass(frozen=True)
class GeneratedTrace:
    actions: tuple[ActionInstance, ...]
    plot_points_discovered: tuple[str, ...]
    end_reached: str | None
    h: int
    beta: float
    mode: str
    seed: int


def _draw_seed(policy_seed: int, key: tuple) -> int:
    digest = hashlib.sha256(repr((policy_seed, key)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def choose_action(p: TrainedPolicy, w: WorldSpec, s: GameState,
                  graph: PlanningGraph | None = None,
                  recent_states: tuple = (),
                  draw_index: int = 0) -> ActionInstance:
    """Pick the next action at a non-terminal state.

    Sampled choices are a pure function of (policy seed, state, draw_index);
    rollouts pass the step number as draw_index so revisited states re-draw
    instead of looping.

    Greedy mode applies loop avoidance: among actions whose successor has not
    been produced earlier in this rollout (``recent_states``, oldest first),
    take the highest-Q one; with nothing novel left, take a story-ending
    action if one is applicable, else the highest-Q action whose successor
    was seen longest ago.  A bare 3-state window provably fails the rule's
    purpose: with latched plot flags a flat-reward greedy walk tours period-4
    cycles of stale states until the action cap, never terminating.  Full
    visited-set avoidance is the minimal deterministic rule that cannot
    livelock: novelty is finite, terminal successors are never "visited".
    """
    if is_terminal(w, s):
        raise TerminalStateError("the story has ended")
    q = soft_q(w, p.reward_model, s, p.h, p.beta, graph=graph)
    actions = list(q)  # engine order
    if p.mode == "sampled":
        probs = boltzmann_policy(q, p.beta)
        rng = np.random.default_rng(_draw_seed(p.seed, (draw_index, state_key(w, s))))
        return actions[int(rng.choice(len(actions), p=[probs[a] for a in actions]))]
    ranked = sorted(range(len(actions)), key=lambda i: (-q[actions[i]], i))
    if not recent_states:
        return actions[ranked[0]]
    last_seen = {key: pos for pos, key in enumerate(recent_states)}
    successors = {}
    for i in ranked:
        outcome = apply_action(w, s, actions[i])
        successors[i] = (state_key(w, outcome.next_state), outcome.is_terminal)
        if successors[i][0] not in last_seen:
            return actions[i]
    for i in ranked:
        if successors[i][1]:
            return actions[i]
    return actions[min(ranked, key=lambda i: (last_seen[successors[i][0]], ranked.index(i)))]


def rollout(p: TrainedPolicy, w: WorldSpec, cap: int = 100,
            graph: PlanningGraph | None = None) -> GeneratedTrace:
    """Run the policy from the initial state until an ending triggers or the
    action cap is hit; plot points are recorded in discovery order."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    if graph is None:
        graph = PlanningGraph(w, p.reward_model.feature_map)
    s = initial_state(w)
    visited: list[tuple] = [state_key(w, s)]
    actions: list[ActionInstance] = []
    discovered: list[str] = []
    for step in range(cap):
        if is_terminal(w, s):
            break
        a = choose_action(p, w, s, graph=graph, recent_states=tuple(visited),
                          draw_index=step)
        outcome = apply_action(w, s, a)
        actions.append(a)
        discovered.extend(outcome.newly_visited_plot_points)
        s = outcome.next_state
        visited.append(state_key(w, s))
    return GeneratedTrace(
        actions=tuple(actions),
        plot_points_discovered=tuple(discovered),
        end_reached=ending_reached(w, s),
        h=p.h, beta=p.beta, mode=p.mode, seed=p.seed,
    )

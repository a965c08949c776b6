"""Interactive-narrative MDP workbench.

Model a choice-based story as a deterministic MDP, learn per-player-group
reward functions from recorded play traces with receding-horizon inverse
reinforcement learning, roll the learned policies back out in the engine,
and score the generated traces against human ones by the Jaccard index of
discovered plot points.
"""

from importlib import resources

from .story import (
    Condition,
    LocationDef,
    ObjectDef,
    CharacterDef,
    TopicDef,
    PlotPointDef,
    StorySyntaxError,
    StoryValidationError,
    WorldSpec,
    load_world,
    load_world_file,
    serialize_world,
)
from .engine import (
    ACTION_KINDS,
    ActionInstance,
    GameState,
    NotApplicableError,
    ReplayError,
    TerminalStateError,
    TransitionOutcome,
    applicable_actions,
    apply_action,
    initial_state,
    replay,
    serialize_state,
)

__all__ = [
    "ACTION_KINDS",
    "ActionInstance",
    "CharacterDef",
    "Condition",
    "GameState",
    "LocationDef",
    "NotApplicableError",
    "ObjectDef",
    "PlotPointDef",
    "ReplayError",
    "StorySyntaxError",
    "StoryValidationError",
    "TerminalStateError",
    "TopicDef",
    "TransitionOutcome",
    "WorldSpec",
    "applicable_actions",
    "apply_action",
    "initial_state",
    "load_sample_story",
    "load_world",
    "load_world_file",
    "replay",
    "sample_story_text",
    "serialize_state",
    "serialize_world",
]

__version__ = "0.1.0"


def sample_story_text() -> str:
    """Raw JSON of the bundled miniature story (an original two-ending world;
    its plot graph is this project's invention)."""
    return resources.files(__package__).joinpath("data/sample_story.json").read_text("utf-8")


def load_sample_story() -> WorldSpec:
    return load_world(sample_story_text())

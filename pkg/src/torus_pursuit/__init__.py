"""N-predator / one-prey pursuit-evasion on a torus.

Analytic potential-field prey, max-min "pincer" predators, decentralized
DDPG predators with a velocity curriculum, and an evaluation harness.
"""

from .engine import Action, AgentState, EpisodeConfig, StepOutcome, WorldState, check_capture, spawn, step
from .geometry import TorusPoint, minimal_displacement, relative_polar, replicate, toroidal_distance, wrap
from .pincer import PincerConfig, select_active, selection_count, score_selection
from .prey import HeadingField, escape_heading, field_coefficients, prey_action

__all__ = [
    "Action", "AgentState", "EpisodeConfig", "StepOutcome", "WorldState", "check_capture", "spawn", "step",
    "TorusPoint", "minimal_displacement", "relative_polar", "replicate", "toroidal_distance", "wrap",
    "PincerConfig", "select_active", "selection_count", "score_selection",
    "HeadingField", "escape_heading", "field_coefficients", "prey_action",
]

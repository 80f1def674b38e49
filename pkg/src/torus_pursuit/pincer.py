"""Max-min "pincer" predators.

Each predator may be represented by any of its ``(2k+1)**2`` images in a
``k``-deep unrolling of the torus around the prey. The team picks the one
image per predator that maximizes the prey's best achievable potential,
``min_theta U(theta) = -sqrt(A**2 + B**2)``, then every predator runs
straight at the prey from its chosen image.

Unrolling is prey-centred: the center tile holds each predator's
minimal image, so the identity selection (``center_index(k)`` for every
predator) is a plain greedy chase.

The unconstrained max-min rewards distance (a far image carries a small
1/r weight), so on its own it parks the team near the prey's antipode.
Predators within ``engage_radius`` of the prey therefore commit to their
minimal image and the enumeration runs over the remaining predators only.
``engage_radius=0`` recovers the unconstrained selection.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .engine import Action, ConfigError, WorldState, prey_relative_offsets
from .geometry import center_index, replica_offsets

DEFAULT_BUDGET = 5_000_000


@dataclass(frozen=True)
class PincerConfig:
    k: int = 1
    max_selections: int = DEFAULT_BUDGET
    engage_radius: float = 0.5
    # hold still instead of pursuing when the chosen image is outside the center tile
    idle_inactive: bool = False

    def __post_init__(self):
        if self.k < 0:
            raise ConfigError(f"unroll depth must be >= 0, got {self.k}")
        if self.engage_radius < 0:
            raise ConfigError("engage_radius must be >= 0")


ReplicaSelection = tuple[int, ...]


def selection_count(n_predators: int, k: int, budget: int | None = None) -> int:
    """Number of one-image-per-predator selections, ``((2k+1)**2)**N``."""
    if n_predators < 0 or k < 0:
        raise ConfigError("n_predators and k must be non-negative")
    count = ((2 * k + 1) ** 2) ** n_predators
    if budget is not None and count > budget:
        raise ConfigError(
            f"{count} selections for N={n_predators}, k={k} exceeds the budget of {budget}; "
            "reduce k or the number of predators")
    return count


def image_offsets(state: WorldState, k: int, L: float) -> np.ndarray:
    """Prey-relative planar offsets of every predator image, shape (N, M, 2)."""
    base = prey_relative_offsets(state, L)
    return base[:, None, :] + replica_offsets(k, L)[None, :, :]


def score_offsets(offsets: np.ndarray) -> float:
    """Prey's optimal potential for one image per predator (rows of ``offsets``)."""
    r2 = offsets[:, 0] ** 2 + offsets[:, 1] ** 2
    if np.any(r2 == 0.0):
        return -math.inf
    return -math.hypot(float(np.sum(offsets[:, 0] / r2)), float(np.sum(offsets[:, 1] / r2)))


def score_selection(selection: Sequence[int], state: WorldState, k: int, L: float) -> float:
    imgs = image_offsets(state, k, L)
    idx = np.asarray(selection, dtype=int)
    if idx.shape != (state.n_predators,):
        raise ConfigError(f"selection needs one index per predator, got {selection}")
    return score_offsets(imgs[np.arange(len(idx)), idx])


def selection_scores(state: WorldState, config: PincerConfig, L: float,
                     fixed: dict[int, int] | None = None) -> np.ndarray:
    """Scores of every selection as an array with one axis per free predator.

    ``fixed`` pins some predators to a given image; their axes are dropped.
    Row-major flattening of the result is the enumeration order.
    """
    fixed = fixed or {}
    n_free = state.n_predators - len(fixed)
    selection_count(n_free, config.k, config.max_selections)
    imgs = image_offsets(state, config.k, L)
    r2 = imgs[..., 0] ** 2 + imgs[..., 1] ** 2
    bad = r2 == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(bad, 0.0, imgs[..., 0] / r2)
        b = np.where(bad, 0.0, imgs[..., 1] / r2)
    A = np.zeros(())
    B = np.zeros(())
    C = np.zeros((), dtype=bool)
    for i in range(state.n_predators):
        if i in fixed:
            j = fixed[i]
            A, B, C = A + a[i, j], B + b[i, j], C | bad[i, j]
        else:
            A = np.add.outer(A, a[i])
            B = np.add.outer(B, b[i])
            C = np.logical_or.outer(C, bad[i])
    return np.where(C, -np.inf, -np.hypot(A, B))


def select_active(state: WorldState, config: PincerConfig, L: float,
                  fixed: dict[int, int] | None = None) -> ReplicaSelection:
    """First selection in row-major order attaining the maximal score."""
    fixed = fixed or {}
    scores = selection_scores(state, config, L, fixed)
    best = iter(np.unravel_index(int(np.argmax(scores)), scores.shape))
    return tuple(fixed[i] if i in fixed else int(next(best)) for i in range(state.n_predators))


def engaged(state: WorldState, config: PincerConfig, L: float) -> dict[int, int]:
    """Predators close enough to commit to their minimal image."""
    d = prey_relative_offsets(state, L)
    r = np.hypot(d[:, 0], d[:, 1])
    c = center_index(config.k)
    return {i: c for i in range(state.n_predators) if r[i] <= config.engage_radius}


def enumerate_selections(n_predators: int, k: int):
    """All selections in row-major order (pure-Python form, for checking)."""
    m = (2 * k + 1) ** 2
    return itertools.product(range(m), repeat=n_predators)


def pursue(state: WorldState, targets: np.ndarray) -> list[Action]:
    """Full-speed straight-line velocities from each prey-relative image toward the prey."""
    actions = []
    for agent, d in zip(state.predators, targets):
        r = math.hypot(d[0], d[1])
        if r == 0.0:
            actions.append(Action((0.0, 0.0)))
            continue
        s = agent.speed_cap / r
        actions.append(Action((-d[0] * s, -d[1] * s)))
    return actions


def pincer_actions(state: WorldState, selection: Sequence[int], config: PincerConfig, L: float) -> list[Action]:
    imgs = image_offsets(state, config.k, L)
    chosen = imgs[np.arange(state.n_predators), np.asarray(selection, dtype=int)]
    actions = pursue(state, chosen)
    if config.idle_inactive:
        c = center_index(config.k)
        actions = [a if i == c else Action((0.0, 0.0)) for a, i in zip(actions, selection)]
    return actions


def pincer_step(state: WorldState, config: PincerConfig, L: float) -> tuple[list[Action], ReplicaSelection]:
    """One decision of the pincer team: engagement, selection, pursuit."""
    selection = select_active(state, config, L, engaged(state, config, L))
    return pincer_actions(state, selection, config, L), selection


def greedy_actions(state: WorldState, L: float) -> list[Action]:
    """Every predator chases the prey's minimal image."""
    return pursue(state, prey_relative_offsets(state, L))

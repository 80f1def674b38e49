"""Analytic prey controller.

The prey scores each candidate heading by a distance-weighted cosine
potential over the predators' prey-relative bearings,

    U(theta) = sum_i cos(theta - theta_i) / r_i = A cos(theta) + B sin(theta),

and flees at full speed along the heading that minimizes it.
"""

from __future__ import annotations

import math
from typing import Iterable, NamedTuple

import numpy as np

from .engine import Action, EpisodeConfig, WorldState, prey_relative_offsets
from .geometry import GeometryError, PolarOffset, normalize_angle

DEGENERATE_EPS = 1e-9


class CoincidentAgentError(GeometryError):
    pass


class HeadingField(NamedTuple):
    A: float
    B: float

    @property
    def magnitude(self) -> float:
        return math.hypot(self.A, self.B)


def field_coefficients(offsets: Iterable[PolarOffset]) -> HeadingField:
    A = B = 0.0
    for r, theta in offsets:
        if r <= 0.0:
            raise CoincidentAgentError("predator coincides with prey")
        A += math.cos(theta) / r
        B += math.sin(theta) / r
    return HeadingField(A, B)


def field_from_displacements(d: np.ndarray) -> HeadingField:
    """Same field straight from Cartesian offsets: cos(theta)/r = dx/r**2."""
    r2 = d[:, 0] ** 2 + d[:, 1] ** 2
    if np.any(r2 == 0.0):
        raise CoincidentAgentError("predator coincides with prey")
    return HeadingField(float(np.sum(d[:, 0] / r2)), float(np.sum(d[:, 1] / r2)))


def potential(theta, field: HeadingField):
    return field.A * np.cos(theta) + field.B * np.sin(theta)


def field_gradient(theta, field: HeadingField):
    return -field.A * np.sin(theta) + field.B * np.cos(theta)


def escape_heading(field: HeadingField, previous_heading: float) -> float:
    """Global minimizer of the potential, antipodal to ``atan2(B, A)``.

    A vanishing field (perfectly balanced encirclement) has no preferred
    direction; the prey keeps its previous heading.
    """
    if field.magnitude < DEGENERATE_EPS:
        return previous_heading
    return normalize_angle(math.atan2(-field.B, -field.A))


def prey_action(state: WorldState, config: EpisodeConfig) -> Action:
    field = field_from_displacements(prey_relative_offsets(state, config.L))
    theta = escape_heading(field, state.prey.heading)
    s = state.prey.speed_cap
    return Action((s * math.cos(theta), s * math.sin(theta)))

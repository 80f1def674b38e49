"""Toroidal coordinate arithmetic on the square world [0, L)^2.

Scalar helpers operate on :class:`TorusPoint` values; the ``*_array``
variants do the same work on numpy arrays of shape ``(..., 2)`` and are what
the hot loops (pincer enumeration, observations) use.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

DEFAULT_L = 2.0


class GeometryError(ValueError):
    """Invalid geometric input (non-finite coordinates, coincident points)."""


class TorusPoint(NamedTuple):
    x: float
    y: float


class Displacement(NamedTuple):
    dx: float
    dy: float


class PolarOffset(NamedTuple):
    r: float
    theta: float


def _wrap_scalar(v: float, L: float) -> float:
    w = v % L
    # tiny negatives round up to exactly L
    return 0.0 if w >= L else w


def _min_image_scalar(d: float, L: float) -> float:
    # ceil(d/L - 1/2) sends an exact +-L/2 tie to +L/2
    return d - L * math.ceil(d / L - 0.5)


def wrap(p: Sequence[float], L: float = DEFAULT_L) -> TorusPoint:
    """Reduce a raw coordinate pair into ``[0, L)^2``."""
    x, y = float(p[0]), float(p[1])
    if not (math.isfinite(x) and math.isfinite(y)):
        raise GeometryError(f"non-finite coordinates: ({x}, {y})")
    if not L > 0:
        raise GeometryError(f"side length must be positive, got {L}")
    return TorusPoint(_wrap_scalar(x, L), _wrap_scalar(y, L))


def minimal_displacement(a: Sequence[float], b: Sequence[float], L: float = DEFAULT_L) -> Displacement:
    """Shortest ``b - a`` over all periodic images.

    Each component lands in ``(-L/2, L/2]``; an exact antipodal tie takes
    the positive sign.
    """
    dx = float(b[0]) - float(a[0])
    dy = float(b[1]) - float(a[1])
    if not (math.isfinite(dx) and math.isfinite(dy)):
        raise GeometryError("non-finite coordinates")
    return Displacement(_min_image_scalar(dx, L), _min_image_scalar(dy, L))


def toroidal_distance(a: Sequence[float], b: Sequence[float], L: float = DEFAULT_L) -> float:
    d = minimal_displacement(a, b, L)
    return math.hypot(d.dx, d.dy)


def replica_offsets(k: int, L: float = DEFAULT_L) -> np.ndarray:
    """Tile offsets ``(i*L, j*L)`` for i, j in -k..k, row-major in (i, j).

    Shape ``((2k+1)**2, 2)``; the zero offset sits at index ``k*(2k+1) + k``.
    """
    if k < 0:
        raise GeometryError(f"unroll depth must be >= 0, got {k}")
    steps = np.arange(-k, k + 1, dtype=float) * L
    ii, jj = np.meshgrid(steps, steps, indexing="ij")
    return np.stack([ii.ravel(), jj.ravel()], axis=1)


def center_index(k: int) -> int:
    """Index of the untranslated image in :func:`replicate` order."""
    return k * (2 * k + 1) + k


def replicate(p: Sequence[float], k: int, L: float = DEFAULT_L) -> list[tuple[float, float]]:
    """All ``(2k+1)**2`` planar images of ``p``, row-major by tile index (i, j)."""
    base = np.array([float(p[0]), float(p[1])])
    return [(float(x), float(y)) for x, y in base + replica_offsets(k, L)]


def relative_polar(origin: Sequence[float], p: Sequence[float], L: float | None = DEFAULT_L) -> PolarOffset:
    """Polar coordinates of ``p`` seen from ``origin``.

    With a side length the minimal-image displacement is used; pass
    ``L=None`` for a planar image, where the raw offset is taken as is.
    """
    if L is None:
        dx, dy = float(p[0]) - float(origin[0]), float(p[1]) - float(origin[1])
    else:
        dx, dy = minimal_displacement(origin, p, L)
    r = math.hypot(dx, dy)
    if r == 0.0:
        raise GeometryError("angle undefined for coincident points")
    return PolarOffset(r, math.atan2(dy, dx))


def normalize_angle(theta: float) -> float:
    """Map an angle into ``(-pi, pi]``."""
    t = math.atan2(math.sin(theta), math.cos(theta))
    return math.pi if t == -math.pi else t


# -- array forms ------------------------------------------------------------

def wrap_array(x: np.ndarray, L: float = DEFAULT_L) -> np.ndarray:
    w = np.mod(x, L)
    return np.where(w >= L, 0.0, w)


def minimal_image_array(d: np.ndarray, L: float = DEFAULT_L) -> np.ndarray:
    return d - L * np.ceil(d / L - 0.5)

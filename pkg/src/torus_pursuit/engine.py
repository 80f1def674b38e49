"""Markov-game engine: spawning, kinematic stepping, capture and reward."""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from typing import Iterable, Sequence

import numpy as np

from .geometry import DEFAULT_L, TorusPoint, minimal_displacement, normalize_angle, toroidal_distance, wrap


class ConfigError(ValueError):
    pass


class ContractError(ValueError):
    """A caller broke an operation's precondition (e.g. wrong action count)."""


@dataclass(frozen=True)
class EpisodeConfig:
    n_predators: int = 3
    L: float = DEFAULT_L
    max_steps: int = 500
    capture_reward: float = 50.0
    step_penalty: float = -0.1
    spawn_radius: float = 0.8
    predator_speed: float = 0.05
    prey_speed: float = 0.05
    predator_radius: float = 0.075
    prey_radius: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.n_predators < 1:
            raise ConfigError("need at least one predator")
        if not self.L > 0:
            raise ConfigError("side length must be positive")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        if self.predator_speed < 0 or self.prey_speed < 0:
            raise ConfigError("speeds must be non-negative")
        if self.predator_radius < 0 or self.prey_radius < 0:
            raise ConfigError("radii must be non-negative")

    def replace(self, **changes) -> "EpisodeConfig":
        return dataclasses.replace(self, **changes)

    def with_ratio(self, ratio: float) -> "EpisodeConfig":
        """Copy with predator speed set to ``ratio * prey_speed``."""
        return self.replace(predator_speed=ratio * self.prey_speed)

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown EpisodeConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "EpisodeConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class AgentState:
    pos: TorusPoint
    heading: float
    speed_cap: float
    radius: float = 0.0


@dataclass(frozen=True)
class WorldState:
    predators: tuple[AgentState, ...]
    prey: AgentState
    t: int = 0

    @property
    def n_predators(self) -> int:
        return len(self.predators)


@dataclass(frozen=True)
class Action:
    velocity: tuple[float, float] = (0.0, 0.0)

    @property
    def speed(self) -> float:
        return math.hypot(*self.velocity)


@dataclass(frozen=True)
class StepOutcome:
    next: WorldState
    predator_reward: float
    captured: bool
    done: bool
    # velocities actually applied after clamping, predators then prey
    applied: tuple[tuple[float, float], ...] = field(default=(), compare=False)


def episode_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for episode ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def spawn(config: EpisodeConfig, rng: np.random.Generator) -> WorldState:
    """Prey at the world center, predators evenly spaced on a circle around it.

    Draws the formation phase first, then the prey's initial heading.
    """
    L = config.L
    if config.spawn_radius >= L / 2:
        raise ConfigError(f"spawn_radius {config.spawn_radius} must be < L/2 = {L / 2}")
    phase = float(rng.uniform(0.0, 2 * math.pi))
    prey_heading = normalize_angle(float(rng.uniform(-math.pi, math.pi)))
    return formation(config, phase, prey_heading)


def formation(config: EpisodeConfig, phase: float, prey_heading: float = 0.0) -> WorldState:
    """Deterministic spawn layout for a given formation phase."""
    c = config.L / 2
    n = config.n_predators
    preds = []
    for i in range(n):
        a = phase + 2 * math.pi * i / n
        pos = wrap((c + config.spawn_radius * math.cos(a), c + config.spawn_radius * math.sin(a)), config.L)
        preds.append(AgentState(pos, normalize_angle(a + math.pi), config.predator_speed, config.predator_radius))
    prey = AgentState(TorusPoint(c, c), normalize_angle(prey_heading), config.prey_speed, config.prey_radius)
    return WorldState(tuple(preds), prey, 0)


def clamp_velocity(v: Sequence[float], cap: float) -> tuple[float, float]:
    vx, vy = float(v[0]), float(v[1])
    if not (math.isfinite(vx) and math.isfinite(vy)):
        raise ContractError(f"non-finite velocity ({vx}, {vy})")
    s = math.hypot(vx, vy)
    if s > cap:
        f = cap / s
        vx, vy = vx * f, vy * f
    return vx, vy


def _move(agent: AgentState, action: Action, L: float) -> tuple[AgentState, tuple[float, float]]:
    vx, vy = clamp_velocity(action.velocity, agent.speed_cap)
    pos = wrap((agent.pos.x + vx, agent.pos.y + vy), L)
    heading = math.atan2(vy, vx) if (vx or vy) else agent.heading
    return AgentState(pos, normalize_angle(heading), agent.speed_cap, agent.radius), (vx, vy)


def capture_distance(state: WorldState, L: float) -> float:
    return min(toroidal_distance(p.pos, state.prey.pos, L) for p in state.predators)


def check_capture(state: WorldState, config: EpisodeConfig) -> bool:
    """True iff some predator is within the summed collision radii (inclusive)."""
    return capture_distance(state, config.L) <= config.predator_radius + config.prey_radius


def step(state: WorldState, predator_actions: Sequence[Action], prey_action: Action,
         config: EpisodeConfig) -> StepOutcome:
    """Advance one step: clamp, move and wrap every agent, then test capture."""
    if len(predator_actions) != len(state.predators):
        raise ContractError(f"expected {len(state.predators)} predator actions, got {len(predator_actions)}")
    L = config.L
    moved = [_move(p, a, L) for p, a in zip(state.predators, predator_actions)]
    prey, prey_v = _move(state.prey, prey_action, L)
    nxt = WorldState(tuple(m[0] for m in moved), prey, state.t + 1)
    captured = check_capture(nxt, config)
    reward = config.capture_reward if captured else config.step_penalty
    done = captured or nxt.t >= config.max_steps
    return StepOutcome(nxt, reward, captured, done, tuple(m[1] for m in moved) + (prey_v,))


def episode_return(rewards: Iterable[float]) -> float:
    """Sum per-step rewards in decimal so that 500 x -0.1 is exactly -50.0."""
    return float(sum((Decimal(repr(r)) for r in rewards), Decimal(0)))


def prey_relative_offsets(state: WorldState, L: float) -> np.ndarray:
    """Minimal-image displacement of every predator from the prey, shape (N, 2)."""
    return np.array([minimal_displacement(state.prey.pos, p.pos, L) for p in state.predators], dtype=float)

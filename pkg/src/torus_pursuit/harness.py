"""Episode runner, velocity sweeps, trajectory export and training summaries."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np

from .ddpg import DDPGTeam, EpisodeMetrics
from .engine import Action, EpisodeConfig, WorldState, episode_return, episode_rng, spawn, step
from .pincer import PincerConfig, greedy_actions, pincer_step
from .prey import prey_action


class PredatorPolicy(Protocol):
    name: str

    def __call__(self, world: WorldState, config: EpisodeConfig) -> tuple[list[Action], tuple[int, ...] | None]:
        ...


class GreedyPolicy:
    name = "greedy"

    def __call__(self, world, config):
        return greedy_actions(world, config.L), None


class FrozenPolicy:
    name = "frozen"

    def __call__(self, world, config):
        return [Action() for _ in world.predators], None


class PincerPolicy:
    name = "pincer"

    def __init__(self, config: PincerConfig = PincerConfig()):
        self.config = config

    def __call__(self, world, config):
        return pincer_step(world, self.config, config.L)


class DDPGPolicy:
    def __init__(self, team: DDPGTeam, name: str = "ddpg"):
        self.team = team
        self.name = name

    def __call__(self, world, config):
        return self.team.actions(world, config.L), None


@lru_cache(maxsize=8)
def make_policy(source: str) -> PredatorPolicy:
    """Policy from a source string: ``pincer``, ``greedy``, ``frozen`` or ``ckpt:DIR``."""
    if source == "pincer":
        return PincerPolicy()
    if source == "greedy":
        return GreedyPolicy()
    if source == "frozen":
        return FrozenPolicy()
    if source.startswith("ckpt:"):
        team = DDPGTeam.load(Path(source[5:]))
        return DDPGPolicy(team, "ddpg" if team.comm_enabled else "ddpg-no-comm")
    raise ValueError(f"unknown policy source {source!r}")


# -- trajectories ---------------------------------------------------------------

AgentRow = tuple[float, float, float, float, float]  # x, y, heading, vx, vy


@dataclass(frozen=True)
class TrajectoryRow:
    t: int
    predators: tuple[AgentRow, ...]
    prey: AgentRow
    reward: float
    captured: bool
    images: tuple[int, ...] | None = None


@dataclass(frozen=True)
class TrajectoryRecord:
    rows: tuple[TrajectoryRow, ...]
    n_predators: int
    has_images: bool = False

    def columns(self) -> list[str]:
        return trajectory_columns(self.n_predators, self.has_images)


def trajectory_columns(n_predators: int, has_images: bool) -> list[str]:
    cols = ["t"]
    for i in range(n_predators):
        cols += [f"p{i}_x", f"p{i}_y", f"p{i}_heading", f"p{i}_vx", f"p{i}_vy"]
    cols += ["prey_x", "prey_y", "prey_heading", "prey_vx", "prey_vy", "reward", "captured"]
    if has_images:
        cols += [f"p{i}_image" for i in range(n_predators)]
    return cols


TRAJECTORY_HELP = (
    "Trajectory CSV columns, one row per step starting at t=0: t; for each predator i "
    "p{i}_x, p{i}_y, p{i}_heading, p{i}_vx, p{i}_vy; prey_x, prey_y, prey_heading, prey_vx, "
    "prey_vy; reward; captured; and for pincer runs p{i}_image (replica index pursued, -1 at t=0). "
    "Velocities and reward belong to the step that produced the row (zero at t=0)."
)


def _agent_row(agent, v) -> AgentRow:
    return (agent.pos.x, agent.pos.y, agent.heading, v[0], v[1])


def _row(world: WorldState, applied, reward, captured, images) -> TrajectoryRow:
    n = world.n_predators
    return TrajectoryRow(world.t, tuple(_agent_row(p, applied[i]) for i, p in enumerate(world.predators)),
                         _agent_row(world.prey, applied[n]), reward, captured, images)


@dataclass(frozen=True)
class EpisodeResult:
    record: TrajectoryRecord
    captured: bool
    steps: int
    total_reward: float


def run_episode(policy: PredatorPolicy, config: EpisodeConfig, seed: int, index: int = 0) -> EpisodeResult:
    """Roll out one episode against the analytic prey.

    The spawn is drawn from the stream for ``(seed, index)``; everything
    after that is deterministic.
    """
    world = spawn(config, episode_rng(seed, index))
    n = world.n_predators
    has_images = isinstance(policy, PincerPolicy)
    zeros = ((0.0, 0.0),) * (n + 1)
    rows = [_row(world, zeros, 0.0, False, (-1,) * n if has_images else None)]
    rewards = []
    captured = False
    while True:
        actions, images = policy(world, config)
        out = step(world, actions, prey_action(world, config), config)
        world = out.next
        rewards.append(out.predator_reward)
        rows.append(_row(world, out.applied, out.predator_reward, out.captured, images))
        if out.done:
            captured = out.captured
            break
    return EpisodeResult(TrajectoryRecord(tuple(rows), n, has_images), captured, world.t, episode_return(rewards))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    return repr(v)


def export_trajectory(record: TrajectoryRecord, path: Path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(record.columns())
        for r in record.rows:
            cells = [r.t]
            for p in r.predators:
                cells += list(p)
            cells += list(r.prey) + [r.reward, r.captured]
            if record.has_images:
                cells += list(r.images)
            w.writerow([_fmt(c) for c in cells])


def import_trajectory(path: Path) -> TrajectoryRecord:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        has_images = header[-1].endswith("_image")
        n = sum(1 for c in header if c.endswith("_vx")) - 1
        if header != trajectory_columns(n, has_images):
            raise ValueError(f"{path}: unexpected trajectory header")
        rows = []
        for cells in reader:
            vals = iter(cells)
            t = int(next(vals))
            preds = tuple(tuple(float(next(vals)) for _ in range(5)) for _ in range(n))
            prey = tuple(float(next(vals)) for _ in range(5))
            reward = float(next(vals))
            captured = next(vals) == "1"
            images = tuple(int(next(vals)) for _ in range(n)) if has_images else None
            rows.append(TrajectoryRow(t, preds, prey, reward, captured, images))
    return TrajectoryRecord(tuple(rows), n, has_images)


# -- sweeps -------------------------------------------------------------------

@dataclass(frozen=True)
class SweepSpec:
    velocity_ratios: tuple[float, ...]
    episodes_per_point: int
    policy_source: str
    seed: int

    def __post_init__(self):
        if any(not r > 0 for r in self.velocity_ratios):
            raise ValueError("velocity ratios must be positive")
        if self.episodes_per_point < 1:
            raise ValueError("episodes_per_point must be >= 1")


@dataclass(frozen=True)
class SweepRow:
    ratio: float
    episodes: int
    captures: int
    capture_rate: float
    mean_steps: float


SWEEP_COLUMNS = ["ratio", "episodes", "captures", "capture_rate", "mean_steps"]


def _episode_outcome(args) -> tuple[bool, int]:
    source, config, seed, index = args
    res = run_episode(make_policy(source), config, seed, index)
    return res.captured, res.steps


def sweep(spec: SweepSpec, config: EpisodeConfig = EpisodeConfig(), workers: int = 1) -> list[SweepRow]:
    """Capture statistics per speed ratio.

    Episode ``e`` uses the spawn stream ``(seed, e)`` at every ratio.
    ``mean_steps`` averages episode length, counting escapes as ``max_steps``.
    """
    rows = []
    for ratio in spec.velocity_ratios:
        cfg = config.with_ratio(ratio)
        jobs = [(spec.policy_source, cfg, spec.seed, e) for e in range(spec.episodes_per_point)]
        if workers > 1:
            with ProcessPoolExecutor(workers) as ex:
                outcomes = list(ex.map(_episode_outcome, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
        else:
            outcomes = [_episode_outcome(j) for j in jobs]
        captures = sum(c for c, _ in outcomes)
        n = len(outcomes)
        rows.append(SweepRow(ratio, n, captures, captures / n, sum(s for _, s in outcomes) / n))
    return rows


def sweep_csv(rows: Iterable[SweepRow], extra: dict[str, str] | None = None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    extra = extra or {}
    w.writerow(list(extra) + SWEEP_COLUMNS)
    for r in rows:
        w.writerow(list(extra.values()) + [repr(r.ratio), r.episodes, r.captures, repr(r.capture_rate), repr(r.mean_steps)])
    return buf.getvalue()


# -- training summaries -------------------------------------------------------------

TRAINING_COLUMNS = ["episode", "reward", "capture", "predator_speed", "steps", "critic_loss", "actor_loss"]


def summarize_training(metrics: Sequence[EpisodeMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRAINING_COLUMNS)
    for m in metrics:
        w.writerow([m.episode, repr(m.reward), int(m.captured), repr(m.predator_speed), m.steps,
                    repr(m.critic_loss), repr(m.actor_loss)])
    return buf.getvalue()


def read_training_summary(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return [
            {"episode": int(r["episode"]), "reward": float(r["reward"]), "capture": r["capture"] == "1",
             "predator_speed": float(r["predator_speed"]), "steps": int(r["steps"])}
            for r in csv.DictReader(f)
        ]


def rolling_mean(values: Sequence[float], window: int = 100) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    c = np.cumsum(np.insert(v, 0, 0.0))
    out = np.empty(len(v))
    for i in range(len(v)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out

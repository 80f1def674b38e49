"""Decentralized DDPG predators with a velocity curriculum.

Every predator owns its actor, critic, their target copies, optimizers and
replay buffer. Nothing is shared except the environment and the team
reward. Actions live in the unit disk; a predator's velocity is the action
times its current speed cap.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .engine import Action, EpisodeConfig, WorldState, episode_return, episode_rng, spawn, step
from .geometry import minimal_displacement
from .nets import MLP, Adam, soft_update
from .prey import prey_action

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "torus-pursuit-ddpg/1"
AGENT_BLOCK = 4  # dx, dy, sin(heading), cos(heading)
SELF_BLOCK = 3  # sin(heading), cos(heading), speed cap / prey speed


class TrainingDiverged(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    episodes: int = 2000
    gamma: float = 0.99
    tau: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 256
    buffer_capacity: int = 1_000_000
    hidden: tuple[int, ...] = (64, 64)
    noise_scale: float = 0.3
    noise_final: float = 0.05
    noise_theta: float = 0.05  # 1.0 gives white noise; smaller is more persistent
    warmup: int = 1000
    update_every: int = 1
    curriculum: bool = True
    v_start_ratio: float = 1.3
    v_end_ratio: float = 0.6
    anneal_episodes: int | None = None  # default: 80% of episodes
    comm_enabled: bool = True
    checkpoint_every: int = 500
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 <= self.tau <= 1.0:
            raise ValueError("tau must lie in [0, 1]")
        if not 0.0 < self.noise_theta <= 1.0:
            raise ValueError("noise_theta must lie in (0, 1]")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        if self.curriculum and not self.v_start_ratio > 1.0 >= self.v_end_ratio:
            raise ValueError("curriculum needs v_start_ratio > 1 >= v_end_ratio")
        object.__setattr__(self, "hidden", tuple(self.hidden))

    @property
    def anneal(self) -> int:
        if self.anneal_episodes is not None:
            return self.anneal_episodes
        return max(1, int(0.8 * self.episodes))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**d)


def curriculum_ratio(episode: int, config: TrainConfig) -> float:
    """Predator/prey speed ratio for an episode: linear anneal, then flat."""
    if not config.curriculum:
        return config.v_start_ratio
    frac = min(episode / config.anneal, 1.0)
    if frac >= 1.0:
        return config.v_end_ratio
    return config.v_start_ratio + (config.v_end_ratio - config.v_start_ratio) * frac


def curriculum_velocity(episode: int, config: TrainConfig, prey_speed: float) -> float:
    return curriculum_ratio(episode, config) * prey_speed


# -- observations -------------------------------------------------------------

def observation_size(n_predators: int, comm_enabled: bool) -> int:
    teammates = n_predators - 1 if comm_enabled else 0
    return AGENT_BLOCK * (1 + teammates) + SELF_BLOCK


def observe(world: WorldState, agent: int, comm_enabled: bool, L: float) -> np.ndarray:
    """Observer-relative features: prey block, teammate blocks by index, own block.

    Each block is the minimal-image displacement from the observer plus the
    other agent's heading as (sin, cos). Teammate blocks are omitted when
    communication is disabled.
    """
    me = world.predators[agent]
    others = [world.prey]
    if comm_enabled:
        others += [p for j, p in enumerate(world.predators) if j != agent]
    out = []
    for o in others:
        d = minimal_displacement(me.pos, o.pos, L)
        out += [d.dx, d.dy, math.sin(o.heading), math.cos(o.heading)]
    cap_ratio = me.speed_cap / world.prey.speed_cap if world.prey.speed_cap > 0 else 0.0
    out += [math.sin(me.heading), math.cos(me.heading), cap_ratio]
    return np.array(out)


# -- networks -------------------------------------------------------------------

def squash(z: np.ndarray) -> np.ndarray:
    """Smooth map of R^2 into the open unit disk: z / sqrt(1 + |z|^2)."""
    return z / np.sqrt(1.0 + np.sum(z * z, axis=-1, keepdims=True))


def squash_backward(z: np.ndarray, gu: np.ndarray) -> np.ndarray:
    s = 1.0 / np.sqrt(1.0 + np.sum(z * z, axis=-1, keepdims=True))
    return s * gu - z * s ** 3 * np.sum(z * gu, axis=-1, keepdims=True)


def clip_unit(u: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(u, axis=-1, keepdims=True)
    return np.where(n > 1.0, u / np.maximum(n, 1e-300), u)


class Actor:
    def __init__(self, obs_dim: int, hidden: Sequence[int], rng: np.random.Generator | None, dtype=np.float64):
        self.net = MLP([obs_dim, *hidden, 2], rng, dtype=dtype)

    def __call__(self, obs: np.ndarray) -> np.ndarray:
        return squash(self.net(obs))

    def copy(self) -> "Actor":
        a = Actor.__new__(Actor)
        a.net = self.net.copy()
        return a


class Critic:
    def __init__(self, obs_dim: int, hidden: Sequence[int], rng: np.random.Generator | None, dtype=np.float64):
        self.net = MLP([obs_dim + 2, *hidden, 1], rng, dtype=dtype)

    def __call__(self, obs: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.net(np.concatenate([obs, u], axis=-1))[..., 0]

    def copy(self) -> "Critic":
        c = Critic.__new__(Critic)
        c.net = self.net.copy()
        return c


def act(actor: Actor, obs: np.ndarray, noise: np.ndarray | None, speed_cap: float) -> tuple[Action, np.ndarray]:
    """Policy action plus an exploration offset, kept inside the unit disk.

    Returns the velocity command and the unit-disk action stored for learning.
    """
    u = actor(obs.astype(actor.net.dtype, copy=False)).astype(float)
    if noise is not None:
        u = clip_unit(u + noise)
    return Action((float(speed_cap * u[0]), float(speed_cap * u[1]))), u


class GaussianProcessNoise:
    """Mean-reverting Gaussian noise whose stationary std is ``scale``.

    ``x <- (1 - theta) x + scale * sqrt(theta (2 - theta)) * xi``; theta = 1
    is white noise. The state restarts at zero every episode.
    """

    def __init__(self, theta: float, rng: np.random.Generator, dim: int = 2):
        self.theta = theta
        self.rng = rng
        self.x = np.zeros(dim)

    def reset(self) -> None:
        self.x = np.zeros_like(self.x)

    def sample(self, scale: float) -> np.ndarray:
        th = self.theta
        self.x = (1.0 - th) * self.x + scale * math.sqrt(th * (2.0 - th)) * self.rng.standard_normal(self.x.shape)
        return self.x


# -- replay ---------------------------------------------------------------------

class ReplayBuffer:
    """Fixed-capacity FIFO ring of (s, u, r, s', done)."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int = 2, dtype=np.float64):
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim), dtype)
        self.u = np.zeros((capacity, act_dim), dtype)
        self.r = np.zeros(capacity, dtype)
        self.s2 = np.zeros((capacity, obs_dim), dtype)
        self.done = np.zeros(capacity, dtype)
        self.head = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def add(self, s, u, r, s2, done) -> None:
        i = self.head
        self.s[i], self.u[i], self.r[i], self.s2[i], self.done[i] = s, u, r, s2, float(done)
        self.head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        start = self.head if self.size == self.capacity else 0
        return (start + np.arange(self.size)) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator):
        idx = rng.integers(0, self.size, size=batch_size)
        return self.s[idx], self.u[idx], self.r[idx], self.s2[idx], self.done[idx]


# -- losses -------------------------------------------------------------------

def critic_target(batch, actor_t: Actor, critic_t: Critic, gamma: float) -> np.ndarray:
    s, u, r, s2, done = batch
    return r + gamma * (1.0 - done) * critic_t(s2, actor_t(s2))


def critic_loss_and_grads(batch, critic: Critic, y: np.ndarray):
    """Mean squared Bellman error and its parameter gradients."""
    s, u = batch[0], batch[1]
    q, acts = critic.net.forward(np.concatenate([s, u], axis=-1))
    err = q[:, 0] - y
    loss = float(np.mean(err ** 2))
    grads, _ = critic.net.backward(acts, (2.0 / len(err)) * err[:, None])
    return loss, grads


def actor_loss_and_grads(states: np.ndarray, actor: Actor, critic: Critic):
    """``-mean Q(s, mu(s))`` and its gradients with respect to the actor."""
    z, a_acts = actor.net.forward(states)
    u = squash(z)
    q, c_acts = critic.net.forward(np.concatenate([states, u], axis=-1))
    loss = -float(np.mean(q))
    _, gin = critic.net.backward(c_acts, np.full_like(q, -1.0 / len(q)), param_grads=False)
    gz = squash_backward(z, gin[:, -2:])
    grads, _ = actor.net.backward(a_acts, gz)
    return loss, grads


@dataclass
class DDPGAgent:
    actor: Actor
    critic: Critic
    actor_t: Actor
    critic_t: Critic
    actor_opt: Adam
    critic_opt: Adam
    buffer: ReplayBuffer
    rng: np.random.Generator
    noise: GaussianProcessNoise

    @classmethod
    def create(cls, obs_dim: int, config: TrainConfig, rng: np.random.Generator) -> "DDPGAgent":
        dt = np.dtype(config.dtype)
        actor = Actor(obs_dim, config.hidden, rng, dt)
        critic = Critic(obs_dim, config.hidden, rng, dt)
        return cls(actor, critic, actor.copy(), critic.copy(),
                   Adam(actor.net.params, config.actor_lr), Adam(critic.net.params, config.critic_lr),
                   ReplayBuffer(config.buffer_capacity, obs_dim, dtype=dt), rng,
                   GaussianProcessNoise(config.noise_theta, rng))


def ddpg_update(agent: DDPGAgent, config: TrainConfig) -> tuple[float, float] | None:
    """One critic step, one actor step, then soft target updates.

    Returns None (and changes nothing) while the buffer holds fewer than
    ``batch_size`` transitions.
    """
    if len(agent.buffer) < config.batch_size:
        return None
    batch = agent.buffer.sample(config.batch_size, agent.rng)
    y = critic_target(batch, agent.actor_t, agent.critic_t, config.gamma)
    c_loss, c_grads = critic_loss_and_grads(batch, agent.critic, y)
    agent.critic_opt.step(c_grads)
    a_loss, a_grads = actor_loss_and_grads(batch[0], agent.actor, agent.critic)
    agent.actor_opt.step(a_grads)
    soft_update(agent.critic_t.net, agent.critic.net, config.tau)
    soft_update(agent.actor_t.net, agent.actor.net, config.tau)
    return c_loss, a_loss


# -- checkpoints --------------------------------------------------------------

def _net_doc(net: MLP) -> dict:
    return {"sizes": net.sizes, "shapes": net.shapes(), "params": [p.ravel().tolist() for p in net.params]}


def _net_from_doc(doc: dict) -> MLP:
    net = MLP(doc["sizes"])
    try:
        net.params = [np.array(p, dtype=float).reshape(s) for p, s in zip(doc["params"], doc["shapes"])]
    except ValueError as e:
        raise CheckpointError(f"parameter/shape mismatch: {e}") from e
    if len(net.params) != 2 * (len(net.sizes) - 1):
        raise CheckpointError("layer count does not match sizes")
    return net


def save_checkpoint(path: Path, agent: DDPGAgent, index: int, train_config: TrainConfig,
                    episode_config: EpisodeConfig, episode: int) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "predator": index,
        "episode": episode,
        "comm_enabled": train_config.comm_enabled,
        "actor": _net_doc(agent.actor.net),
        "critic": _net_doc(agent.critic.net),
        "train_config": train_config.to_dict(),
        "episode_config": dataclasses.asdict(episode_config),
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path}: unsupported checkpoint format {doc.get('format')!r}")
    actor = Actor.__new__(Actor)
    actor.net = _net_from_doc(doc["actor"])
    critic = Critic.__new__(Critic)
    critic.net = _net_from_doc(doc["critic"])
    doc["actor"], doc["critic"] = actor, critic
    return doc


def checkpoint_paths(directory: Path, n_predators: int) -> list[Path]:
    return [Path(directory) / f"predator_{i}.json" for i in range(n_predators)]


def save_team(directory: Path, agents: Sequence[DDPGAgent], train_config: TrainConfig,
              episode_config: EpisodeConfig, episode: int) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, (a, p) in enumerate(zip(agents, checkpoint_paths(directory, len(agents)))):
        save_checkpoint(p, a, i, train_config, episode_config, episode)


class DDPGTeam:
    """Frozen trained actors acting greedily (no exploration noise)."""

    def __init__(self, actors: Sequence[Actor], comm_enabled: bool):
        self.actors = list(actors)
        self.comm_enabled = comm_enabled

    @classmethod
    def load(cls, directory: Path) -> "DDPGTeam":
        directory = Path(directory)
        paths = sorted(directory.glob("predator_*.json"), key=lambda p: int(p.stem.split("_")[1]))
        if not paths:
            raise CheckpointError(f"no predator_*.json checkpoints in {directory}")
        docs = [load_checkpoint(p) for p in paths]
        comm = {d["comm_enabled"] for d in docs}
        if len(comm) != 1:
            raise CheckpointError("checkpoints disagree on comm_enabled")
        return cls([d["actor"] for d in docs], comm.pop())

    def actions(self, world: WorldState, L: float) -> list[Action]:
        if len(self.actors) != world.n_predators:
            raise CheckpointError(f"team has {len(self.actors)} actors for {world.n_predators} predators")
        out = []
        for i, (actor, p) in enumerate(zip(self.actors, world.predators)):
            a, _ = act(actor, observe(world, i, self.comm_enabled, L), None, p.speed_cap)
            out.append(a)
        return out


# -- training -------------------------------------------------------------------

@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    reward: float
    captured: bool
    steps: int
    predator_speed: float
    critic_loss: float = float("nan")
    actor_loss: float = float("nan")


@dataclass
class TrainResult:
    agents: list[DDPGAgent]
    metrics: list[EpisodeMetrics] = field(default_factory=list)

    def team(self, comm_enabled: bool) -> DDPGTeam:
        return DDPGTeam([a.actor for a in self.agents], comm_enabled)


def noise_at(episode: int, config: TrainConfig) -> float:
    frac = min(episode / max(config.episodes - 1, 1), 1.0)
    return config.noise_scale + (config.noise_final - config.noise_scale) * frac


def train(config: TrainConfig, episode_config: EpisodeConfig = EpisodeConfig(),
          out_dir: Path | None = None,
          on_episode: Callable[[EpisodeMetrics], None] | None = None) -> TrainResult:
    """Run the seeded curriculum; returns the agents and one metrics row per episode."""
    n = episode_config.n_predators
    obs_dim = observation_size(n, config.comm_enabled)
    agent_seeds = np.random.SeedSequence([config.seed, 0]).spawn(n)
    agents = [DDPGAgent.create(obs_dim, config, np.random.default_rng(s)) for s in agent_seeds]
    result = TrainResult(agents)
    L = episode_config.L
    env_steps = 0

    for ep in range(config.episodes):
        v_p = curriculum_velocity(ep, config, episode_config.prey_speed)
        cfg = episode_config.replace(predator_speed=v_p)
        world = spawn(cfg, episode_rng(config.seed, ep))
        sigma = noise_at(ep, config)
        obs = [observe(world, i, config.comm_enabled, L) for i in range(n)]
        for ag in agents:
            ag.noise.reset()
        rewards = []
        c_losses, a_losses = [], []
        while True:
            actions, us = [], []
            for i, ag in enumerate(agents):
                a, u = act(ag.actor, obs[i], ag.noise.sample(sigma) if sigma > 0 else None,
                           world.predators[i].speed_cap)
                actions.append(a)
                us.append(u)
            out = step(world, actions, prey_action(world, cfg), cfg)
            world = out.next
            rewards.append(out.predator_reward)
            obs2 = [observe(world, i, config.comm_enabled, L) for i in range(n)]
            for i, ag in enumerate(agents):
                # horizon truncation is not terminal for bootstrapping
                ag.buffer.add(obs[i], us[i], out.predator_reward, obs2[i], out.captured)
            obs = obs2
            env_steps += 1
            if env_steps >= config.warmup and env_steps % config.update_every == 0:
                for ag in agents:
                    losses = ddpg_update(ag, config)
                    if losses is None:
                        continue
                    if not all(math.isfinite(x) for x in losses):
                        if out_dir is not None:
                            save_team(Path(out_dir) / "diverged", agents, config, cfg, ep)
                        raise TrainingDiverged(f"non-finite loss {losses} at episode {ep}, step {world.t}")
                    c_losses.append(losses[0])
                    a_losses.append(losses[1])
            if out.done:
                break
        m = EpisodeMetrics(ep, episode_return(rewards), out.captured, world.t, v_p,
                           float(np.mean(c_losses)) if c_losses else float("nan"),
                           float(np.mean(a_losses)) if a_losses else float("nan"))
        result.metrics.append(m)
        if on_episode is not None:
            on_episode(m)
        if out_dir is not None and config.checkpoint_every and (ep + 1) % config.checkpoint_every == 0:
            save_team(Path(out_dir) / f"ep{ep + 1:06d}", agents, config, cfg, ep)
    if out_dir is not None:
        save_team(Path(out_dir) / "final", agents, config, episode_config, config.episodes - 1)
    return result

import math

import numpy as np
import pytest

from torus_pursuit import ddpg
from torus_pursuit.ddpg import (
    Actor, CheckpointError, Critic, DDPGAgent, DDPGTeam, GaussianProcessNoise, ReplayBuffer, TrainConfig,
    TrainingDiverged, act, actor_loss_and_grads, critic_loss_and_grads, critic_target, curriculum_ratio,
    curriculum_velocity, ddpg_update, load_checkpoint, noise_at, observation_size, observe, save_team, squash,
    squash_backward, train,
)
from torus_pursuit.engine import AgentState, EpisodeConfig, WorldState, episode_rng, spawn
from torus_pursuit.geometry import TorusPoint
from torus_pursuit.harness import summarize_training
from torus_pursuit.nets import MLP, Adam, soft_update

SMALL_ENV = EpisodeConfig(max_steps=40)


def small_train_config(**kw):
    base = dict(episodes=4, batch_size=16, warmup=20, hidden=(8, 8), buffer_capacity=500)
    base.update(kw)
    return TrainConfig(**base)


def rel_close(a, b, tol=1e-4):
    return np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.maximum(np.abs(a), np.abs(b))))


def fd_grads(net, loss_fn, h=1e-6):
    """Central differences of ``loss_fn`` with respect to every parameter of ``net``."""
    flat = net.flat()
    out = np.empty_like(flat)
    for i in range(flat.size):
        v = flat.copy()
        v[i] += h
        net.set_flat(v)
        up = loss_fn()
        v[i] -= 2 * h
        net.set_flat(v)
        out[i] = (up - loss_fn()) / (2 * h)
    net.set_flat(flat)
    return out


def tiny_batch(rng, obs_dim=5, n=4):
    return (rng.standard_normal((n, obs_dim)), squash(rng.standard_normal((n, 2))), rng.standard_normal(n),
            rng.standard_normal((n, obs_dim)), (rng.random(n) < 0.5).astype(float))


class TestGradients:
    @pytest.mark.parametrize("seed", range(5))
    def test_critic_loss_gradient(self, seed):
        rng = np.random.default_rng(seed)
        critic = Critic(5, (3, 2), rng)
        critic.net.params[-2][...] = rng.standard_normal(critic.net.params[-2].shape)
        batch = tiny_batch(rng)
        y = rng.standard_normal(4)
        _, grads = critic_loss_and_grads(batch, critic, y)
        fd = fd_grads(critic.net, lambda: critic_loss_and_grads(batch, critic, y)[0])
        assert rel_close(np.concatenate([g.ravel() for g in grads]), fd)

    @pytest.mark.parametrize("seed", range(5))
    def test_critic_loss_gradient_two_transitions(self, seed):
        rng = np.random.default_rng(100 + seed)
        critic = Critic(5, (2,), rng)
        batch = tiny_batch(rng, n=2)
        y = critic_target(batch, Actor(5, (2,), rng), Critic(5, (2,), rng), 0.95)
        _, grads = critic_loss_and_grads(batch, critic, y)
        fd = fd_grads(critic.net, lambda: critic_loss_and_grads(batch, critic, y)[0])
        assert rel_close(np.concatenate([g.ravel() for g in grads]), fd)

    @pytest.mark.parametrize("seed", range(5))
    def test_actor_loss_gradient(self, seed):
        rng = np.random.default_rng(200 + seed)
        actor, critic = Actor(5, (3, 2), rng), Critic(5, (3, 2), rng)
        for net in (actor.net, critic.net):
            net.params[-2][...] = rng.standard_normal(net.params[-2].shape)
        s = rng.standard_normal((4, 5))
        _, grads = actor_loss_and_grads(s, actor, critic)
        fd = fd_grads(actor.net, lambda: actor_loss_and_grads(s, actor, critic)[0])
        assert rel_close(np.concatenate([g.ravel() for g in grads]), fd)

    def test_squash_backward(self):
        rng = np.random.default_rng(7)
        z, gu = rng.standard_normal((3, 2)), rng.standard_normal((3, 2))
        h = 1e-6
        fd = np.zeros_like(z)
        for idx in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += h
            zm[idx] -= h
            fd[idx] = (np.sum(squash(zp) * gu) - np.sum(squash(zm) * gu)) / (2 * h)
        assert squash_backward(z, gu) == pytest.approx(fd, rel=1e-6, abs=1e-9)

    def test_squash_stays_in_disk(self):
        z = np.random.default_rng(8).standard_normal((1000, 2)) * 100
        assert np.all(np.linalg.norm(squash(z), axis=1) < 1.0)


class TestTargetsAndUpdates:
    def test_degenerate_bellman_target(self):
        rng = np.random.default_rng(9)
        actor, critic = Actor(5, (4,), rng), Critic(5, (4,), rng)
        s, u, _, s2, _ = tiny_batch(rng)
        batch = (s, u, np.zeros(4), s2, np.ones(4))
        y = critic_target(batch, actor, critic, gamma=0.0)
        assert np.all(y == 0.0)
        loss, _ = critic_loss_and_grads(batch, critic, y)
        assert loss == pytest.approx(float(np.mean(critic(s, u) ** 2)), rel=1e-12)

    def test_soft_update_tau_one_and_zero(self):
        rng = np.random.default_rng(10)
        online, target = MLP([3, 4, 2], rng), MLP([3, 4, 2], rng)
        before = [p.copy() for p in target.params]
        soft_update(target, online, 0.0)
        assert all(np.array_equal(a, b) for a, b in zip(target.params, before))
        soft_update(target, online, 1.0)
        assert all(np.array_equal(a, b) for a, b in zip(target.params, online.params))

    def test_soft_update_from_equal_init_stays_equal(self):
        online = MLP([3, 4, 2], np.random.default_rng(11))
        target = online.copy()
        for _ in range(50):
            soft_update(target, online, 0.01)
        assert all(np.array_equal(a, b) for a, b in zip(target.params, online.params))

    def test_update_waits_for_batch(self):
        cfg = small_train_config()
        agent = DDPGAgent.create(7, cfg, np.random.default_rng(0))
        before = agent.actor.net.flat().copy()
        assert ddpg_update(agent, cfg) is None
        assert np.array_equal(agent.actor.net.flat(), before)

    def test_update_moves_online_nets(self):
        cfg = small_train_config()
        rng = np.random.default_rng(1)
        agent = DDPGAgent.create(7, cfg, rng)
        for _ in range(32):
            agent.buffer.add(rng.standard_normal(7), squash(rng.standard_normal(2)), -0.1, rng.standard_normal(7), False)
        before = agent.critic.net.flat().copy()
        losses = ddpg_update(agent, cfg)
        assert losses is not None and all(math.isfinite(x) for x in losses)
        assert not np.array_equal(agent.critic.net.flat(), before)

    def test_adam_first_step_size(self):
        p = [np.array([1.0, -2.0])]
        Adam(p, lr=0.1).step([np.array([3.0, -0.5])])
        assert p[0] == pytest.approx([0.9, -1.9])


class TestReplayBuffer:
    def test_fifo_eviction(self):
        cap, m = 10, 4
        buf = ReplayBuffer(cap, obs_dim=1)
        for i in range(cap + m):
            buf.add([i], [0, 0], float(i), [i], False)
        assert len(buf) == cap
        stored = buf.r[buf.ordered()].tolist()
        assert stored == [float(i) for i in range(m, cap + m)]

    def test_sample_shapes(self):
        buf = ReplayBuffer(5, obs_dim=3)
        for i in range(5):
            buf.add(np.full(3, i), [0.1, 0.2], -0.1, np.full(3, i + 1), i == 4)
        s, u, r, s2, d = buf.sample(8, np.random.default_rng(0))
        assert s.shape == (8, 3) and u.shape == (8, 2) and r.shape == (8,) and d.shape == (8,)
        assert np.all(s2[:, 0] == s[:, 0] + 1)


class TestObservation:
    def test_sizes(self):
        assert observation_size(3, True) == 15
        assert observation_size(3, False) == 7

    def test_layout(self):
        cfg = EpisodeConfig()
        w = spawn(cfg.with_ratio(0.6), episode_rng(0, 0))
        o = observe(w, 1, True, cfg.L)
        assert o.shape == (15,)
        assert o[-1] == pytest.approx(0.6)
        d = (w.prey.pos.x - w.predators[1].pos.x, w.prey.pos.y - w.predators[1].pos.y)
        assert o[:2] == pytest.approx(d)
        assert o[-3:-1] == pytest.approx((math.sin(w.predators[1].heading), math.cos(w.predators[1].heading)))

    def test_no_comm_masking(self):
        rng = np.random.default_rng(12)
        cfg = EpisodeConfig()
        team = DDPGTeam([Actor(7, (16, 16), rng) for _ in range(3)], comm_enabled=False)
        w = spawn(cfg, episode_rng(3, 0))
        base = team.actions(w, cfg.L)
        for _ in range(50):
            # move and turn teammates 1 and 2 while keeping predator 0 fixed
            moved = tuple(p if i == 0 else AgentState(TorusPoint(*rng.uniform(0, 2, 2)), rng.uniform(-3, 3),
                                                      p.speed_cap, p.radius)
                          for i, p in enumerate(w.predators))
            pert = WorldState(moved, w.prey, w.t)
            assert team.actions(pert, cfg.L)[0] == base[0]
            assert np.array_equal(observe(pert, 0, False, cfg.L), observe(w, 0, False, cfg.L))

    def test_comm_sees_teammates(self):
        cfg = EpisodeConfig()
        w = spawn(cfg, episode_rng(3, 0))
        moved = (w.predators[0], AgentState(TorusPoint(0.1, 0.1), 0.0, 0.05), w.predators[2])
        assert not np.array_equal(observe(WorldState(moved, w.prey), 0, True, 2.0), observe(w, 0, True, 2.0))


class TestExploration:
    def test_white_noise_at_theta_one(self):
        n = GaussianProcessNoise(1.0, np.random.default_rng(0))
        x = np.array([n.sample(0.3).copy() for _ in range(20_000)])
        assert np.std(x) == pytest.approx(0.3, rel=0.03)
        assert abs(np.corrcoef(x[:-1, 0], x[1:, 0])[0, 1]) < 0.03

    def test_persistent_noise_stationary_scale(self):
        n = GaussianProcessNoise(0.05, np.random.default_rng(1))
        x = np.array([n.sample(0.3).copy() for _ in range(200_000)])[1000:]
        assert np.std(x) == pytest.approx(0.3, rel=0.1)
        assert np.corrcoef(x[:-1, 0], x[1:, 0])[0, 1] == pytest.approx(0.95, abs=0.01)

    def test_action_inside_cap(self):
        rng = np.random.default_rng(2)
        actor = Actor(7, (8,), rng)
        for _ in range(100):
            a, u = act(actor, rng.standard_normal(7), rng.standard_normal(2) * 3, 0.03)
            assert np.linalg.norm(u) <= 1.0 + 1e-12
            assert a.speed <= 0.03 + 1e-12

    def test_noise_schedule(self):
        cfg = TrainConfig(episodes=11)
        assert noise_at(0, cfg) == cfg.noise_scale
        assert noise_at(10, cfg) == pytest.approx(cfg.noise_final)


class TestCurriculum:
    cfg = TrainConfig(episodes=100, anneal_episodes=50)

    def test_endpoints_and_midpoint(self):
        assert curriculum_ratio(0, self.cfg) == 1.3
        assert curriculum_ratio(50, self.cfg) == 0.6
        assert curriculum_ratio(99, self.cfg) == 0.6
        assert curriculum_ratio(25, self.cfg) == pytest.approx((1.3 + 0.6) / 2)
        assert curriculum_velocity(0, self.cfg, 0.05) == pytest.approx(0.065)

    def test_monotone(self):
        r = [curriculum_ratio(e, self.cfg) for e in range(100)]
        assert all(a >= b for a, b in zip(r, r[1:]))

    def test_disabled(self):
        cfg = TrainConfig(curriculum=False, v_start_ratio=1.3)
        assert curriculum_ratio(500, cfg) == 1.3

    def test_default_anneal(self):
        assert TrainConfig(episodes=1000).anneal == 800

    @pytest.mark.parametrize("kw", [{"gamma": 1.5}, {"tau": -0.1}, {"v_start_ratio": 0.9}, {"noise_theta": 0.0},
                                    {"dtype": "float16"}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_dict_round_trip(self):
        cfg = TrainConfig(hidden=(32, 16), seed=5)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError):
            TrainConfig.from_dict({"bogus": 1})


class TestTraining:
    def test_reproducible_metrics(self):
        cfg = small_train_config(seed=3)
        a, b = train(cfg, SMALL_ENV), train(cfg, SMALL_ENV)
        assert len(a.metrics) == 4
        # losses are NaN before the first update, so compare serialized rows
        assert summarize_training(a.metrics) == summarize_training(b.metrics)
        for x, y in zip(a.agents, b.agents):
            assert np.array_equal(x.actor.net.flat(), y.actor.net.flat())
        assert [m.predator_speed for m in a.metrics] == [curriculum_velocity(e, cfg, 0.05) for e in range(4)]

    def test_seed_changes_weights(self):
        a = train(small_train_config(seed=3), SMALL_ENV)
        b = train(small_train_config(seed=4), SMALL_ENV)
        assert not np.array_equal(a.agents[0].actor.net.flat(), b.agents[0].actor.net.flat())

    def test_decentralized_agents(self):
        res = train(small_train_config(), SMALL_ENV)
        nets = [a.actor.net.flat() for a in res.agents]
        assert not np.array_equal(nets[0], nets[1])
        assert len({id(a.buffer) for a in res.agents}) == 3

    def test_checkpoints_written(self, tmp_path):
        train(small_train_config(checkpoint_every=2), SMALL_ENV, tmp_path)
        assert (tmp_path / "ep000002" / "predator_0.json").exists()
        assert (tmp_path / "final" / "predator_2.json").exists()

    def test_divergence_aborts_with_checkpoint(self, tmp_path, monkeypatch):
        original = ddpg.critic_loss_and_grads
        monkeypatch.setattr(ddpg, "critic_loss_and_grads", lambda b, c, y: (math.nan, original(b, c, y)[1]))
        with pytest.raises(TrainingDiverged):
            train(small_train_config(), SMALL_ENV, tmp_path)
        assert (tmp_path / "diverged" / "predator_0.json").exists()


class TestCheckpoints:
    def test_round_trip_preserves_actions(self, tmp_path):
        cfg = small_train_config(dtype="float64")
        res = train(cfg, SMALL_ENV)
        save_team(tmp_path, res.agents, cfg, SMALL_ENV, 3)
        team = DDPGTeam.load(tmp_path)
        w = spawn(SMALL_ENV, episode_rng(1, 1))
        assert team.actions(w, 2.0) == res.team(True).actions(w, 2.0)
        doc = load_checkpoint(tmp_path / "predator_1.json")
        assert doc["predator"] == 1 and doc["train_config"]["seed"] == cfg.seed

    def test_float32_round_trip(self, tmp_path):
        cfg = small_train_config()
        res = train(cfg, SMALL_ENV)
        save_team(tmp_path, res.agents, cfg, SMALL_ENV, 3)
        loaded = DDPGTeam.load(tmp_path).actors[0].net
        for a, b in zip(loaded.params, res.agents[0].actor.net.params):
            assert np.array_equal(a.astype(b.dtype), b)

    def test_bad_format(self, tmp_path):
        (tmp_path / "predator_0.json").write_text('{"format": "other"}')
        with pytest.raises(CheckpointError):
            DDPGTeam.load(tmp_path)

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CheckpointError):
            DDPGTeam.load(tmp_path / "nope")

    def test_team_size_mismatch(self, tmp_path):
        rng = np.random.default_rng(0)
        team = DDPGTeam([Actor(15, (4,), rng)], True)
        with pytest.raises(CheckpointError):
            team.actions(spawn(EpisodeConfig(), episode_rng(0, 0)), 2.0)

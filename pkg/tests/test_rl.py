"""Learner tests: replay memory, action selection, agent updates, training
loop plumbing."""

import numpy as np
import pytest

from radarspectrum import nn, rl
from radarspectrum import signal as sig
from radarspectrum import traffic as trf
from radarspectrum.env import EnvConfig, RadarEnv

FAST = rl.AgentConfig(batch_k=4, batch_p=3, warmup_episodes=1,
                      episode_len_min=5, episode_len_max=10)


def _exp(i, dtype=np.float32, hw=180):
    return rl.Experience(
        obs=np.full(7, i, dtype), hidden=np.zeros(hw, dtype),
        action=i % 2, reward=float(i % 2),
        next_obs=np.full(7, i + 1, dtype), next_hidden=np.zeros(hw, dtype))


def test_select_action_extremes():
    rng = np.random.default_rng(0)
    q = np.array([0.1, 0.9, 0.5])
    assert rl.select_action(q, 0.0, rng) == 1
    hits = {rl.select_action(q, 1.0, rng) for _ in range(100)}
    assert hits == {0, 1, 2}
    # ties resolve to the lowest index
    assert rl.select_action(np.array([0.5, 0.5]), 0.0, rng) == 0


def test_replay_memory_episode_grouping_and_eviction():
    mem = rl.ReplayMemory(capacity=3)
    for ep in range(5):
        for t in range(4):
            mem.push(ep, _exp(t))
    assert len(mem) == 3
    assert list(mem.ids) == [2, 3, 4]
    assert all(len(ep) == 4 for ep in mem.episodes)


def test_replay_memory_eligible_and_sampling():
    mem = rl.ReplayMemory(10)
    for t in range(2):
        mem.push(0, _exp(t))
    for t in range(6):
        mem.push(1, _exp(t))
    assert len(mem.eligible(3)) == 1
    rng = np.random.default_rng(1)
    obs, hid0, acts, rews, nobs, nhid = mem.sample_batch(5, 3, rng, np.float32)
    assert obs.shape == (3, 5, 7)
    assert hid0.shape == (5, 180)
    assert acts.shape == (3, 5) and rews.shape == (3, 5)
    assert nobs.shape == (15, 7) and nhid.shape == (15, 180)
    # sequences are contiguous runs of the stored episode: obs value increments
    for k in range(5):
        col = obs[:, k, 0]
        assert np.allclose(np.diff(col), 1.0)
        assert np.allclose(nobs.reshape(3, 5, 7)[:, k, 0], col + 1.0)


def test_sample_batch_raises_when_empty():
    mem = rl.ReplayMemory(10)
    mem.push(0, _exp(0))
    with pytest.raises(ValueError):
        mem.sample_batch(2, 5, np.random.default_rng(0), np.float32)


def _agent(m=2, cfg=FAST):
    net = nn.NetConfig(n_actions=m, dtype=cfg.dtype)
    return rl.Agent(net, cfg, np.random.default_rng(0))


def test_agent_act_and_hidden_evolution():
    ag = _agent()
    h = ag.zero_hidden()
    assert h.shape == (180,) and not h.any()
    obs = np.random.default_rng(1).normal(size=7)
    a, q, h1 = ag.act(obs, h, epsilon=0.0)
    assert a in (0, 1) and q.shape == (2,)
    assert h1.any()
    # matches the reference forward path
    q_ref, h_ref = nn.forward(ag.params, obs, nn.HiddenState.zeros(ag.net_cfg, 1))
    assert np.allclose(q, q_ref[0], atol=1e-6)
    assert np.allclose(h1, h_ref.pack(), atol=1e-6)


def test_agent_update_cycle_and_target_sync():
    cfg = rl.AgentConfig(batch_k=4, batch_p=3, target_sync_c=2,
                         warmup_episodes=0, dtype="float32")
    ag = _agent(cfg=cfg)
    assert ag.update() is None          # empty memory
    for ep in range(2):
        for t in range(6):
            ag.memory.push(ep, _exp(t))
    before = ag.target.fcl_w.copy()
    l1 = ag.update()
    assert isinstance(l1, float) and np.isfinite(l1)
    assert np.array_equal(ag.target.fcl_w, before)     # not yet synced
    ag.update()
    assert not np.array_equal(ag.target.fcl_w, before)  # synced at C=2
    assert np.array_equal(ag.target.fcl_w, ag.params.fcl_w)


def test_compute_targets_formula():
    ag = _agent()
    rng = np.random.default_rng(2)
    p, k = 2, 3
    rews = rng.normal(size=(p, k)).astype(np.float32)
    nobs = rng.normal(size=(p * k, 7)).astype(np.float32)
    nhid = np.zeros((p * k, 180), np.float32)
    y = ag.compute_targets(rews, nobs, nhid)
    q_ref, _ = nn.forward(ag.target, nobs, nn.HiddenState.zeros(ag.net_cfg, p * k))
    expect = rews + ag.cfg.gamma * q_ref.max(axis=1).reshape(p, k)
    assert np.allclose(y, expect, atol=1e-5)


def _env(n_cars=4, m=2):
    return RadarEnv(EnvConfig(radar=sig.RadarParams(n_subbands=m),
                              traffic=trf.TrafficConfig(n_cars=n_cars)))


def test_train_smoke_and_log():
    env = _env()
    res = rl.train(env, FAST, n_episodes=4, seed=0)
    assert len(res.agents) == 4
    assert len(res.log) == 4
    for row in res.log:
        assert 0.0 <= row.success_rate <= 1.0
        assert len(row.mean_loss) == 4
    # warmup episode has no losses
    assert all(np.isnan(x) for x in res.log[0].mean_loss)
    assert any(np.isfinite(x) for x in res.log[-1].mean_loss)


def test_train_deterministic():
    r1 = rl.train(_env(), FAST, n_episodes=3, seed=7)
    r2 = rl.train(_env(), FAST, n_episodes=3, seed=7)
    assert [x.success_rate for x in r1.log] == [x.success_rate for x in r2.log]
    for a, b in zip(r1.agents, r2.agents):
        assert np.array_equal(a.params.fcl_w, b.params.fcl_w)


def test_evaluate_returns_rates():
    env = _env()
    res = rl.train(env, FAST, n_episodes=2, seed=0)
    rates = rl.evaluate(_env(), res.agents, 3, FAST, seed=1)
    assert len(rates) == 3
    assert all(0.0 <= r <= 1.0 for r in rates)


def test_agent_config_validation():
    with pytest.raises(ValueError):
        rl.AgentConfig(gamma=1.5)
    with pytest.raises(ValueError):
        rl.AgentConfig(epsilon=-0.1)
    with pytest.raises(ValueError):
        rl.AgentConfig(batch_k=0)

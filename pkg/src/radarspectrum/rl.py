"""Per-radar Q-learning: episode replay memory, K x P sequence batches,
epsilon-greedy action selection, target-network targets, periodic sync.

One fully independent learner per radar: each agent owns its network, target
network, optimizer state, replay memory, and RNG stream. Updates follow the
standard recurrent-replay scheme: every environment step, every agent samples
K sequences of P consecutive experiences, computes bootstrapped targets with
its frozen target network on the stored ("stale") hidden states, and takes
one optimizer step; the target network is re-synced every C updates.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import _kernels, nn
from .env import RadarEnv


@dataclass
class AgentConfig:
    gamma: float = 0.9
    epsilon: float = 0.05
    batch_k: int = 40           # sequences per batch
    batch_p: int = 20           # sequence length
    target_sync_c: int = 20     # updates between target syncs
    learning_rate: float = 1e-3
    grad_clip: float = 5.0
    memory_episodes: int = 200
    warmup_episodes: int = 10
    episode_len_min: int = 20
    episode_len_max: int = 200
    dtype: str = "float32"      # network/replay dtype for training speed

    def __post_init__(self):
        if not 0 <= self.gamma <= 1:
            raise ValueError("gamma must be in [0, 1]")
        if not 0 <= self.epsilon <= 1:
            raise ValueError("epsilon must be a probability")
        if min(self.batch_k, self.batch_p, self.target_sync_c) < 1:
            raise ValueError("batch and sync settings must be positive")


@dataclass
class Experience:
    """One replay tuple; hidden states are stored packed (all h, then all c)."""
    obs: np.ndarray
    hidden: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    next_hidden: np.ndarray


class _EpisodeBuffer:
    """Append-only store for one episode, stacked lazily for sampling."""

    __slots__ = ("rows", "_stack")

    def __init__(self):
        self.rows = []
        self._stack = None

    def append(self, e: Experience):
        self.rows.append(e)
        self._stack = None

    def __len__(self):
        return len(self.rows)

    def arrays(self, dtype):
        if self._stack is None:
            self._stack = (
                np.stack([r.obs for r in self.rows]).astype(dtype, copy=False),
                np.stack([r.hidden for r in self.rows]).astype(dtype, copy=False),
                np.array([r.action for r in self.rows], dtype=np.int64),
                np.array([r.reward for r in self.rows], dtype=dtype),
                np.stack([r.next_obs for r in self.rows]).astype(dtype, copy=False),
                np.stack([r.next_hidden for r in self.rows]).astype(dtype, copy=False),
            )
        return self._stack


class ReplayMemory:
    """Ordered store of the most recent ``capacity`` episodes."""

    def __init__(self, capacity: int = 200):
        self.capacity = capacity
        self.episodes = deque()
        self.ids = deque()

    def push(self, episode_id: int, e: Experience):
        """Append an experience to its episode, evicting the oldest episode
        beyond capacity. ``episode_id`` must be the current or a new id."""
        if not self.ids or self.ids[-1] != episode_id:
            self.episodes.append(_EpisodeBuffer())
            self.ids.append(episode_id)
            while len(self.episodes) > self.capacity:
                self.episodes.popleft()
                self.ids.popleft()
        self.episodes[-1].append(e)

    def __len__(self):
        return len(self.episodes)

    def eligible(self, p: int):
        return [ep for ep in self.episodes if len(ep) >= p]

    def sample_batch(self, k: int, p: int, rng: np.random.Generator, dtype):
        """K independent rows, each a uniform episode + uniform start offset.

        Returns (obs (P,K,7), hidden0 (K,H2), actions (P,K), rewards (P,K),
        next_obs (P,K,7), next_hidden (P*K,H2) in step-major order).
        """
        pool = self.eligible(p)
        if not pool:
            raise ValueError(f"no episode of length >= {p} in memory")
        eps = rng.integers(0, len(pool), size=k)
        obs = None
        for row in range(k):
            o, h, a, r, no, nh = pool[eps[row]].arrays(dtype)
            start = int(rng.integers(0, len(o) - p + 1))
            if obs is None:
                h2 = h.shape[1]
                obs = np.empty((k, p, o.shape[1]), dtype)
                hid0 = np.empty((k, h2), dtype)
                acts = np.empty((k, p), np.int64)
                rews = np.empty((k, p), dtype)
                nobs = np.empty((k, p, o.shape[1]), dtype)
                nhid = np.empty((k, p, h2), dtype)
            sl = slice(start, start + p)
            obs[row] = o[sl]
            hid0[row] = h[start]
            acts[row] = a[sl]
            rews[row] = r[sl]
            nobs[row] = no[sl]
            nhid[row] = nh[sl]
        # step-major layouts for the kernels
        obs_t = np.ascontiguousarray(obs.transpose(1, 0, 2))
        acts_t = np.ascontiguousarray(acts.T)
        rews_t = np.ascontiguousarray(rews.T)
        nobs_flat = np.ascontiguousarray(
            nobs.transpose(1, 0, 2).reshape(p * k, -1))
        nhid_flat = np.ascontiguousarray(
            nhid.transpose(1, 0, 2).reshape(p * k, -1))
        return obs_t, hid0, acts_t, rews_t, nobs_flat, nhid_flat


def select_action(q_values: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    """Greedy with probability 1-epsilon (ties to the lowest index),
    uniform otherwise."""
    m = len(q_values)
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(0, m))
    return int(np.argmax(q_values))


def _hidden_offsets(widths):
    offs = []
    pos = 0
    for w in widths:
        offs.append((pos, pos + w))
        pos += w
    total = pos
    return offs, total


class Agent:
    """One radar's learner: online net, target net, optimizer, memory, RNG."""

    def __init__(self, net_cfg: nn.NetConfig, agent_cfg: AgentConfig,
                 rng: np.random.Generator):
        self.net_cfg = net_cfg
        self.cfg = agent_cfg
        self.rng = rng
        self.params = nn.init_params(rng, net_cfg)
        self.target = self.params.copy()
        self.opt = nn.OptimizerState.for_params(self.params, agent_cfg.learning_rate)
        self.memory = ReplayMemory(agent_cfg.memory_episodes)
        self.updates = 0
        self._offs, self._hw = _hidden_offsets(net_cfg.lstm_widths)
        self._dt = np.dtype(net_cfg.dtype)
        self._pargs = tuple(self.params._kernel_args())
        self._targs = None
        self._refresh_target_args()

    # -- hidden-state packing ---------------------------------------------

    def zero_hidden(self) -> np.ndarray:
        """Packed hidden state (all h, then all c) for one sequence."""
        return np.zeros(2 * self._hw, self._dt)

    def _unpack(self, packed2d: np.ndarray):
        """(B, 2H) packed -> interleaved [h1, c1, ..., h4, c4] kernel args."""
        hw = self._hw
        out = []
        for (a, b) in self._offs:
            out.append(np.ascontiguousarray(packed2d[:, a:b]))
            out.append(np.ascontiguousarray(packed2d[:, hw + a:hw + b]))
        return out

    # -- acting ------------------------------------------------------------

    def act(self, obs_vec: np.ndarray, packed_hidden: np.ndarray,
            epsilon: float | None = None):
        """Returns (action, q_values, next_packed_hidden)."""
        obs = np.ascontiguousarray(obs_vec, dtype=self._dt).reshape(1, -1)
        hidden = self._unpack(packed_hidden.reshape(1, -1))
        out = _kernels.qnet_forward_step(obs, *self._pargs, *hidden)
        q = out[0][0]
        nxt = np.empty(2 * self._hw, self._dt)
        hw = self._hw
        for li, (a, b) in enumerate(self._offs):
            nxt[a:b] = out[1 + 2 * li][0]
            nxt[hw + a:hw + b] = out[2 + 2 * li][0]
        eps = self.cfg.epsilon if epsilon is None else epsilon
        return select_action(q, eps, self.rng), q, nxt

    # -- learning ----------------------------------------------------------

    def _refresh_target_args(self):
        self._targs = tuple(self.target._kernel_args())

    def compute_targets(self, rewards_t, next_obs_flat, next_hidden_flat):
        """y = r + gamma * max_u Qhat(o', h') on stored next hidden states."""
        hidden = self._unpack(next_hidden_flat)
        out = _kernels.qnet_forward_step(
            np.ascontiguousarray(next_obs_flat, dtype=self._dt),
            *self._targs, *hidden)
        qmax = out[0].max(axis=1).reshape(rewards_t.shape)
        return rewards_t + self._dt.type(self.cfg.gamma) * qmax

    def update(self):
        """One replay step: sample, target, BPTT, clip, optimize, maybe sync.

        Returns the batch loss, or None when memory has no eligible episode.
        """
        cfg = self.cfg
        try:
            obs_t, hid0, acts_t, rews_t, nobs, nhid = self.memory.sample_batch(
                cfg.batch_k, cfg.batch_p, self.rng, self._dt)
        except ValueError:
            return None
        targets = self.compute_targets(rews_t, nobs, nhid)
        h0 = self._unpack(hid0)   # [h1, c1, h2, c2, h3, c3, h4, c4]
        hidden = nn.HiddenState(h0[0::2], h0[1::2])
        loss, grads = nn.bptt_gradients(self.params, obs_t, acts_t, targets, hidden)
        nn.clip_gradients(grads, cfg.grad_clip)
        nn.optimizer_step(self.params, grads, self.opt)
        self.updates += 1
        if self.updates % cfg.target_sync_c == 0:
            self.sync_target()
        return loss

    def sync_target(self):
        self.target = self.params.copy()
        self._refresh_target_args()


@dataclass
class TrainLogRow:
    episode: int
    success_rate: float
    mean_loss: list
    epsilon: float
    wall_s: float


@dataclass
class TrainResult:
    agents: list
    log: list                   # TrainLogRow per episode


def train(env: RadarEnv, agent_cfg: AgentConfig, n_episodes: int, seed: int,
          progress=None) -> TrainResult:
    """Train one independent agent per car in the given environment.

    Per episode: reset env and hidden states, draw an episode length uniform
    in [len_min, len_max], roll epsilon-greedy steps storing experiences,
    and (after the warm-up) run one replay update per agent per step.
    """
    n = env.n_cars
    m = env.params.n_subbands
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(n + 2)
    agents = [Agent(nn.NetConfig(n_actions=m, dtype=agent_cfg.dtype),
                    agent_cfg, np.random.default_rng(children[i]))
              for i in range(n)]
    len_rng = np.random.default_rng(children[n])
    env.reset(seed=int(np.random.default_rng(children[n + 1]).integers(2 ** 31)))

    log = []
    t0 = time.perf_counter()
    for ep in range(n_episodes):
        ep_len = int(len_rng.integers(agent_cfg.episode_len_min,
                                      agent_cfg.episode_len_max + 1))
        obs_list, _ = env.reset()
        obs_vecs = [env.obs_vector(o) for o in obs_list]
        hiddens = [a.zero_hidden() for a in agents]
        learn = ep >= agent_cfg.warmup_episodes
        reward_sum = 0.0
        losses = [0.0] * n
        loss_counts = [0] * n
        for _t in range(ep_len):
            actions = []
            nxt_hiddens = []
            for i, agent in enumerate(agents):
                act, _q, nh = agent.act(obs_vecs[i], hiddens[i])
                actions.append(act)
                nxt_hiddens.append(nh)
            result = env.step(actions)
            next_vecs = [env.obs_vector(o) for o in result.observations]
            for i, agent in enumerate(agents):
                agent.memory.push(ep, Experience(
                    obs_vecs[i].astype(agent._dt),
                    hiddens[i],
                    actions[i], float(result.rewards[i]),
                    next_vecs[i].astype(agent._dt),
                    nxt_hiddens[i]))
                if learn:
                    loss = agent.update()
                    if loss is not None:
                        losses[i] += loss
                        loss_counts[i] += 1
            obs_vecs = next_vecs
            hiddens = nxt_hiddens
            reward_sum += float(result.rewards.sum())
        row = TrainLogRow(
            episode=ep,
            success_rate=reward_sum / (n * ep_len),
            mean_loss=[losses[i] / loss_counts[i] if loss_counts[i] else float("nan")
                       for i in range(n)],
            epsilon=agent_cfg.epsilon,
            wall_s=time.perf_counter() - t0)
        log.append(row)
        if progress is not None:
            progress(row)
    return TrainResult(agents, log)


def evaluate(env: RadarEnv, agents, n_episodes: int, agent_cfg: AgentConfig,
             seed: int):
    """Greedy (epsilon=0) rollout of trained agents; returns per-episode xi."""
    len_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    rates = []
    for _ep in range(n_episodes):
        ep_len = int(len_rng.integers(agent_cfg.episode_len_min,
                                      agent_cfg.episode_len_max + 1))
        obs_list, _ = env.reset()
        obs_vecs = [env.obs_vector(o) for o in obs_list]
        hiddens = [a.zero_hidden() for a in agents]
        total = 0.0
        for _t in range(ep_len):
            actions = []
            for i, agent in enumerate(agents):
                act, _q, hiddens[i] = agent.act(obs_vecs[i], hiddens[i], epsilon=0.0)
                actions.append(act)
            result = env.step(actions)
            obs_vecs = [env.obs_vector(o) for o in result.observations]
            total += float(result.rewards.sum())
        rates.append(total / (len(agents) * ep_len))
    return rates

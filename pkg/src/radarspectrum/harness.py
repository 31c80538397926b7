"""Experiment orchestration: success-rate metric, training and evaluation
runs, sweeps, deterministic CSV emission.

All artifacts are reproducible: every CSV starts with a comment line naming
the config hash and seed, and wall-clock timings go to a separate
``timings.txt`` so metric files are byte-identical across reruns with the
same seed.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import nn, policies, rl
from .env import EnvConfig, RadarEnv
from .signal import RadarParams
from .traffic import TrafficConfig

SMOOTH_WINDOW = 100


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    agent: rl.AgentConfig = field(default_factory=rl.AgentConfig)
    policy: str = "rl"                  # rl | random | myopic
    n_train_episodes: int = 2000
    n_eval_episodes: int = 1000
    seed: int = 0
    output_dir: str = "out"
    myopic_exclude_current: bool = False

    def __post_init__(self):
        if self.policy not in ("rl", "random", "myopic"):
            raise ValueError(f"unknown policy {self.policy!r}")


@dataclass
class MetricsRow:
    episode: int
    policy: str
    n_cars: int
    n_subbands: int
    rho: float
    success_rate: float
    mean_eta: float
    wall_ms: float = 0.0    # kept 0 in CSVs; real timings go to timings.txt

    FIELDS = ("episode", "policy", "N", "M", "rho",
              "success_rate", "mean_eta", "wall_ms")

    def row(self):
        return [self.episode, self.policy, self.n_cars, self.n_subbands,
                repr(self.rho), repr(self.success_rate), repr(self.mean_eta),
                repr(self.wall_ms)]


# ---------------------------------------------------------------------------
# Config plumbing
# ---------------------------------------------------------------------------

def _fill(cls, data: dict):
    """Instantiate a dataclass from a dict, rejecting unknown keys."""
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: dict) -> RunConfig:
    """Build a RunConfig from nested JSON with full defaulting."""
    data = dict(data)
    env_d = dict(data.pop("env", {}))
    radar_d = env_d.pop("radar", {})
    traffic_d = env_d.pop("traffic", {})
    env = _fill(EnvConfig, {
        "radar": _fill(RadarParams, radar_d),
        "traffic": _fill(TrafficConfig, traffic_d),
        **env_d,
    })
    agent = _fill(rl.AgentConfig, data.pop("agent", {}))
    return _fill(RunConfig, {"env": env, "agent": agent, **data})


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def config_hash(cfg: RunConfig) -> str:
    """Hash of the experiment parameters; output_dir is excluded so reruns
    into different directories still produce byte-identical CSVs."""
    d = config_to_dict(cfg)
    d.pop("output_dir", None)
    blob = json.dumps(d, sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]


def load_config(path: str | None, overrides: dict | None = None) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = json.load(fh)
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# Metric
# ---------------------------------------------------------------------------

def success_rate(etas, eta0: float) -> float:
    """xi = mean over radars of the per-radar success fraction.

    ``etas``: array-like of shape (N, T) of relative noise levels.
    """
    arr = np.asarray(etas, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError("trace must be a non-empty (N, T) array")
    return float(np.mean(np.mean(arr < eta0, axis=1)))


def moving_average(values, window: int = SMOOTH_WINDOW):
    """Trailing moving average over up to `window` previous points."""
    out = []
    acc = 0.0
    vals = list(values)
    for i, v in enumerate(vals):
        acc += v
        if i >= window:
            acc -= vals[i - window]
        out.append(acc / min(i + 1, window))
    return out


# ---------------------------------------------------------------------------
# Policy evaluation (shared-seed across policies)
# ---------------------------------------------------------------------------

def evaluate_policy(cfg: RunConfig, policy: str, agents=None,
                    n_episodes: int | None = None, seed: int | None = None):
    """Greedy evaluation of one policy; returns list of (xi, mean_eta).

    With equal seeds, all policies see identical episode lengths and traffic
    realizations (traffic evolves from its own RNG stream).
    """
    n_episodes = cfg.n_eval_episodes if n_episodes is None else n_episodes
    seed = cfg.seed if seed is None else seed
    env = RadarEnv(cfg.env)
    n = cfg.env.traffic.n_cars
    m = cfg.env.radar.n_subbands
    eta0 = cfg.env.radar.eta_threshold
    len_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    pol_rng = np.random.default_rng(np.random.SeedSequence([seed, 0x701]))
    if policy == "rl":
        if agents is None or len(agents) < n:
            raise ValueError(f"rl evaluation needs {n} agents")
        agents = agents[:n]
    rows = []
    for ep in range(n_episodes):
        ep_len = int(len_rng.integers(cfg.agent.episode_len_min,
                                      cfg.agent.episode_len_max + 1))
        # episode seed depends only on (seed, ep): identical traffic for
        # every policy evaluated at the same seed
        env.reset(seed=int(
            np.random.SeedSequence([seed, 0x5CE, ep]).generate_state(1)[0]
            % (2 ** 31)))
        etas = np.empty((n, ep_len))
        if policy == "rl":
            obs_vecs = [env.obs_vector(o) for o in env.observations]
            hiddens = [a.zero_hidden() for a in agents]
        elif policy == "myopic":
            states = [policies.MyopicState(policies.random_policy(m, pol_rng))
                      for _ in range(n)]
            last_etas = [0.0] * n     # start as "success": keep initial band
        for t in range(ep_len):
            if policy == "rl":
                actions = []
                for i, agent in enumerate(agents):
                    act, _q, hiddens[i] = agent.act(obs_vecs[i], hiddens[i],
                                                    epsilon=0.0)
                    actions.append(act)
            elif policy == "random":
                actions = [policies.random_policy(m, pol_rng) for _ in range(n)]
            else:
                actions = []
                for i in range(n):
                    act, states[i] = policies.myopic_policy(
                        states[i], last_etas[i], eta0, m, pol_rng,
                        cfg.myopic_exclude_current)
                    actions.append(act)
            result = env.step(actions)
            etas[:, t] = result.etas
            if policy == "rl":
                obs_vecs = [env.obs_vector(o) for o in result.observations]
            elif policy == "myopic":
                last_etas = [float(x) for x in result.etas]
        rows.append((success_rate(etas, eta0), float(np.mean(etas))))
    return rows


# ---------------------------------------------------------------------------
# Artifact IO
# ---------------------------------------------------------------------------

def _write_csv(path, header_fields, rows, cfg_hash: str, seed: int):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={cfg_hash} seed={seed}\n")
        fh.write(",".join(header_fields) + "\n")
        for r in rows:
            fh.write(",".join(str(x) for x in r) + "\n")


def save_agents(agents, out_dir: str):
    os.makedirs(out_dir, exist_ok=True)
    for i, a in enumerate(agents):
        with open(os.path.join(out_dir, f"agent{i}.qnet"), "wb") as fh:
            fh.write(nn.serialize(a.params))


def load_agents(ckpt_dir: str, n: int, agent_cfg: rl.AgentConfig):
    """Rebuild greedy agents from agent{i}.qnet checkpoints."""
    agents = []
    for i in range(n):
        path = os.path.join(ckpt_dir, f"agent{i}.qnet")
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing checkpoint {path}")
        with open(path, "rb") as fh:
            params = nn.deserialize(fh.read())
        agent = rl.Agent(params.cfg, agent_cfg, np.random.default_rng(i))
        agent.params = params
        agent._pargs = tuple(params._kernel_args())
        agent.sync_target()
        agents.append(agent)
    return agents


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def run_training(cfg: RunConfig, progress=None):
    """Train (uniform motion), checkpoint, then test (automaton, eps=0).

    Artifacts in cfg.output_dir: agent{i}.qnet, metrics.csv (train + test
    rows), learning_curve.csv, timings.txt.
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    h = config_hash(cfg)
    t0 = time.perf_counter()

    train_cfg = copy.deepcopy(cfg.env)
    train_cfg.traffic.model = "uniform"
    env = RadarEnv(train_cfg)
    result = rl.train(env, cfg.agent, cfg.n_train_episodes, cfg.seed,
                      progress=progress)
    train_s = time.perf_counter() - t0
    save_agents(result.agents, cfg.output_dir)

    test_cfg = copy.deepcopy(cfg)
    test_cfg.env = copy.deepcopy(cfg.env)
    test_cfg.env.traffic.model = "automaton"
    eval_rows = evaluate_policy(test_cfg, "rl", result.agents,
                                cfg.n_eval_episodes, cfg.seed)
    eval_s = time.perf_counter() - t0 - train_s

    n = cfg.env.traffic.n_cars
    m = cfg.env.radar.n_subbands
    rho = cfg.env.traffic.rho
    rows = []
    for r in result.log:
        rows.append(MetricsRow(r.episode, "rl-train", n, m, rho,
                               r.success_rate, float("nan")).row())
    for ep, (xi, mean_eta) in enumerate(eval_rows):
        rows.append(MetricsRow(ep, "rl-test", n, m, rho, xi, mean_eta).row())
    _write_csv(os.path.join(cfg.output_dir, "metrics.csv"),
               MetricsRow.FIELDS, rows, h, cfg.seed)

    smoothed = moving_average([r.success_rate for r in result.log])
    _write_csv(os.path.join(cfg.output_dir, "learning_curve.csv"),
               ("episode", "success_rate", "smoothed"),
               [(r.episode, repr(r.success_rate), repr(s))
                for r, s in zip(result.log, smoothed)], h, cfg.seed)

    with open(os.path.join(cfg.output_dir, "timings.txt"), "w") as fh:
        fh.write(f"train_s={train_s:.1f}\neval_s={eval_s:.1f}\n")
    return result, eval_rows


def run_eval(cfg: RunConfig, checkpoint_dir: str | None = None):
    """Evaluate one policy (rl needs checkpoints unless untrained is fine)."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    h = config_hash(cfg)
    n = cfg.env.traffic.n_cars
    m = cfg.env.radar.n_subbands
    agents = None
    if cfg.policy == "rl":
        if checkpoint_dir is not None:
            agents = load_agents(checkpoint_dir, n, cfg.agent)
        else:
            # untrained networks (deterministic init from the run seed)
            rng_ss = np.random.SeedSequence(cfg.seed).spawn(n)
            agents = [rl.Agent(nn.NetConfig(n_actions=m, dtype=cfg.agent.dtype),
                               cfg.agent, np.random.default_rng(rng_ss[i]))
                      for i in range(n)]
    rows_eval = evaluate_policy(cfg, cfg.policy, agents)
    rho = cfg.env.traffic.rho
    rows = [MetricsRow(ep, cfg.policy, n, m, rho, xi, me).row()
            for ep, (xi, me) in enumerate(rows_eval)]
    _write_csv(os.path.join(cfg.output_dir, "metrics.csv"),
               MetricsRow.FIELDS, rows, h, cfg.seed)
    return rows_eval


def run_sweep(cfg: RunConfig, axis: str, values, checkpoint_dir: str | None = None,
              workers: int = 1):
    """Evaluate rl/random/myopic over an axis with shared seeds per point.

    axis = "subbands": trains fresh networks per value (desk-scale budget).
    axis = "rho":      reuses checkpoints trained at the base density.
    axis = "cars":     reuses checkpoints trained for max(values) cars and
                       assigns the first n to smaller scenarios.

    Evaluation points run in up to ``workers`` threads; each point owns its
    environment and RNG streams, and greedy agents are read-only, so results
    are identical for any worker count.
    """
    if axis not in ("subbands", "rho", "cars"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    if not values:
        raise ValueError("sweep values must be non-empty")
    os.makedirs(cfg.output_dir, exist_ok=True)
    h = config_hash(cfg)
    rows = []
    agents_cache = None
    if axis in ("rho", "cars"):
        if checkpoint_dir is None:
            raise FileNotFoundError(
                f"{axis} sweep reuses trained checkpoints; pass checkpoint_dir")
        n_load = (max(values) if axis == "cars" else cfg.env.traffic.n_cars)
        agents_cache = load_agents(checkpoint_dir, int(n_load), cfg.agent)

    tasks = []
    for val in values:
        pt = copy.deepcopy(cfg)
        if axis == "subbands":
            pt.env.radar = pt.env.radar.with_(n_subbands=int(val))
        elif axis == "rho":
            pt.env.traffic.rho = float(val)
        else:
            pt.env.traffic.n_cars = int(val)
        n = pt.env.traffic.n_cars
        m = pt.env.radar.n_subbands

        if axis == "subbands":
            tr = copy.deepcopy(pt)
            tr.output_dir = os.path.join(cfg.output_dir, f"train_M{m}")
            result, _ = run_training(tr)
            agents = result.agents
        else:
            agents = agents_cache[:n]
        for pol in ("rl", "random", "myopic"):
            tasks.append((pt, pol, agents, n, m, float(val)))

    def _point(task):
        pt, pol, agents, _n, _m, _val = task
        evals = evaluate_policy(pt, pol, agents)
        return (float(np.mean([e[0] for e in evals])),
                float(np.mean([e[1] for e in evals])))

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_point, tasks))
    else:
        results = [_point(t) for t in tasks]
    for (pt, pol, _agents, n, m, val), (xi, me) in zip(tasks, results):
        rows.append(MetricsRow(0, pol, n, m, pt.env.traffic.rho,
                               xi, me).row() + [axis, repr(val)])
    _write_csv(os.path.join(cfg.output_dir, "sweep_metrics.csv"),
               MetricsRow.FIELDS + ("axis", "value"), rows, h, cfg.seed)
    return rows

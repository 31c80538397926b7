"""Multi-radar decision environment.

Each car carries a forward-looking long-range radar (LRR, the victim being
modeled) and a rear short-range radar (SRR). Per step every car picks a
subband; the environment advances traffic by one period T, accumulates
co-channel interference power at each LRR, produces the relative noise level
eta (analytic surrogate or full signal pipeline), the success reward, and
the next per-radar observation.

Interference graph (LRR victims only): facing LRRs in the other lane that
are ahead of the victim, and the rear SRR of the car directly ahead in the
same lane.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import signal as sig
from . import traffic as trf


@dataclass
class Observation:
    """Per-radar observation o_t; gaps are -1.0 when unavailable."""

    last_subband: int = 0
    last_reward: int = 0
    last_eta: float = 1.0
    own_position: float = 0.0
    front_same_gap: float = -1.0
    front_diff_gap: float = -1.0

    def vector(self, n_subbands: int, road_length: float, d_max: float) -> np.ndarray:
        """The 7-element network input.

        [subband index scaled to [0,1], last reward, log10(eta) clipped to
        [0,3], own position / road length, same-lane gap / d_max, other-lane
        gap / d_max, availability flag]. Missing gaps map to 0 with the
        availability flag accounting for them.
        """
        denom = max(n_subbands - 1, 1)
        s_ok = self.front_same_gap >= 0.0
        d_ok = self.front_diff_gap >= 0.0
        return np.array([
            self.last_subband / denom,
            float(self.last_reward),
            min(max(math.log10(max(self.last_eta, 1e-12)), 0.0), 3.0),
            self.own_position / road_length,
            self.front_same_gap / d_max if s_ok else 0.0,
            self.front_diff_gap / d_max if d_ok else 0.0,
            (s_ok + d_ok) / 2.0,
        ])


@dataclass
class StepResult:
    rewards: np.ndarray          # (N,) in {0, 1}
    etas: np.ndarray             # (N,)
    inr_true: np.ndarray         # (N,) true interference power / sigma^2
    observations: list           # N Observation


@dataclass
class EnvConfig:
    radar: sig.RadarParams = field(default_factory=sig.RadarParams)
    traffic: trf.TrafficConfig = field(default_factory=trf.TrafficConfig)
    fidelity: str = "analytic"           # "analytic" | "signal"
    seed: int = 0
    measurement_base_std: float = 0.5    # m, position error std at eta = 1
    eta_estimate_std: float = 0.03       # analytic-mode multiplicative spread

    def __post_init__(self):
        if self.fidelity not in ("analytic", "signal"):
            raise ValueError(f"unknown fidelity {self.fidelity!r}")


def compute_eta_analytic(total_pi: float, sigma2: float,
                         rng: np.random.Generator,
                         estimate_std: float = 0.03) -> float:
    """eta = INR + 1 with multiplicative estimation noise ~ N(1, std^2) > 0."""
    if total_pi < 0 or sigma2 <= 0:
        raise ValueError("powers must be non-negative, sigma2 positive")
    mult = 0.0
    while mult <= 0.0:
        mult = rng.normal(1.0, estimate_std)
    return (total_pi / sigma2 + 1.0) * mult


class RadarEnv:
    """Single-owner environment; deterministic given (config seed, actions)."""

    def __init__(self, cfg: EnvConfig):
        self.cfg = cfg
        self.params = cfg.radar
        self._seed(cfg.seed)
        self.state: trf.ScenarioState | None = None
        self._held_gaps = {}          # car_id -> [same_gap, diff_gap] last good
        self._tx = None               # cached transmit frame for signal mode
        self._n_if = None
        self.observations: list[Observation] = []

    # -- lifecycle ---------------------------------------------------------

    def _seed(self, seed: int):
        """Two independent streams: traffic evolution (shared across policies
        at equal seeds) and everything policy-coupled (eta noise, measurement)."""
        t_ss, n_ss = np.random.SeedSequence(seed).spawn(2)
        self.traffic_rng = np.random.default_rng(t_ss)
        self.rng = np.random.default_rng(n_ss)

    def reset(self, seed: int | None = None):
        """Fresh scenario and initial observations (interference-free)."""
        if seed is not None:
            self._seed(seed)
        self.state = trf.init_scenario(self.cfg.traffic, self.traffic_rng)
        self._held_gaps = {c.car_id: [-1.0, -1.0] for c in self.state.cars}
        self.observations = []
        for c in self.state.cars:
            same, diff = self._measure(c.car_id, eta=1.0)
            self.observations.append(Observation(
                last_subband=0, last_reward=0, last_eta=1.0,
                own_position=c.position,
                front_same_gap=same, front_diff_gap=diff))
        return list(self.observations), self.state

    @property
    def n_cars(self) -> int:
        return self.cfg.traffic.n_cars

    def obs_vector(self, obs: Observation) -> np.ndarray:
        return obs.vector(self.params.n_subbands, self.state.road_length,
                          self.cfg.traffic.d_max)

    # -- interference geometry --------------------------------------------

    def _aggressors(self, car_id: int, actions):
        """Co-channel interference sources for car i's LRR.

        Yields (power_w, distance_m, closing_speed) per aggressor.
        """
        state = self.state
        car = state.car(car_id)
        my_band = actions[car_id]
        half = state.road_length / 2.0
        out = []
        same_nb, _ = trf.front_neighbors(state, car_id)
        for o in state.cars:
            if o.car_id == car_id or actions[o.car_id] != my_band:
                continue
            gap = (o.position - car.position) * car.direction % state.road_length
            if o.lane != car.lane:
                # facing LRR across lanes, only sources ahead of the victim
                if 0.0 < gap < half:
                    p = sig.interference_power_cross_lane(self.params, gap)
                    closing = car.speed + o.speed
                    out.append((p, math.hypot(gap, self.params.lane_gap), closing))
            else:
                # rear SRR of the car directly ahead
                if same_nb is not None and abs(o.position - same_nb[0]) < 1e-9 \
                        and 0.0 < gap < half:
                    p = sig.interference_power_same_lane(self.params, gap)
                    closing = car.speed - o.speed
                    out.append((p, gap, closing))
        return out

    # -- eta --------------------------------------------------------------

    def _eta_signal(self, aggressors, subband: int) -> float:
        if self._tx is None or self._tx.subband != subband:
            self._tx = sig.synth_chirp_frame(self.params, subband)
        if self._n_if is None:
            self._n_if = sig.interference_free_level(self.params)
        interferers = []
        tc = self.params.chirp_interval
        for (p, dist, closing) in aggressors:
            tcp = tc
            while abs(tcp - tc) < 2e-6:
                tcp = self.rng.uniform(10e-6, 100e-6)
            interferers.append(sig.InterfererSpec(max(dist, 0.1), closing, p, tcp))
        rx = sig.synth_received(self.params, self._tx, [], interferers, self.rng)
        up, _ = sig.mix_and_spectrum(self.params, rx, self._tx)
        n_hat = sig.estimate_noise_level(up, self.params.discard_count)
        return sig.relative_noise_level(n_hat, self._n_if)

    # -- measurement model -------------------------------------------------

    def _measure(self, car_id: int, eta: float):
        """Front-car gap estimates with eta-dependent error and stale-hold."""
        same_nb, diff_nb = trf.front_neighbors(self.state, car_id)
        std = self.cfg.measurement_base_std * math.sqrt(max(eta, 0.0))
        held = self._held_gaps[car_id]
        out = []
        for idx, nb in enumerate((same_nb, diff_nb)):
            if nb is None:
                out.append(-1.0)
                continue
            fails = eta >= self.params.eta_threshold and self.rng.random() < 0.5
            if fails:
                out.append(held[idx])      # stale (or -1 if never measured)
            else:
                val = max(nb[1] + self.rng.normal(0.0, std), 0.0)
                held[idx] = val
                out.append(val)
        return out[0], out[1]

    # -- stepping ----------------------------------------------------------

    def step(self, actions) -> StepResult:
        """Advance one period with the given per-car subband choices."""
        n = self.n_cars
        actions = list(actions)
        if len(actions) != n:
            raise ValueError(f"expected {n} actions, got {len(actions)}")
        m = self.params.n_subbands
        for a in actions:
            if not 0 <= int(a) < m:
                raise ValueError(f"action {a} not in [0, {m})")
        actions = [int(a) for a in actions]

        trf.step(self.state, self.cfg.traffic, self.params.period, self.traffic_rng)

        etas = np.empty(n)
        inr = np.empty(n)
        rewards = np.empty(n)
        sigma2 = self.params.noise_power
        for c in self.state.cars:
            i = c.car_id
            agg = self._aggressors(i, actions)
            total_pi = sum(a[0] for a in agg)
            inr[i] = total_pi / sigma2
            if self.cfg.fidelity == "signal":
                etas[i] = self._eta_signal(agg, actions[i])
            else:
                etas[i] = compute_eta_analytic(
                    total_pi, sigma2, self.rng, self.cfg.eta_estimate_std)
            rewards[i] = 1.0 if etas[i] < self.params.eta_threshold else 0.0

        observations = []
        for c in self.state.cars:
            i = c.car_id
            same, diff = self._measure(i, etas[i])
            observations.append(Observation(
                last_subband=actions[i], last_reward=int(rewards[i]),
                last_eta=float(etas[i]), own_position=c.position,
                front_same_gap=same, front_diff_gap=diff))
        self.observations = observations
        return StepResult(rewards, etas, inr, observations)


def trace_records(t: int, result: StepResult, state: trf.ScenarioState, actions):
    """JSON-lines records, one per (t, car_id)."""
    recs = []
    for c in state.cars:
        i = c.car_id
        recs.append(json.dumps({
            "t": t, "car_id": i, "action": int(actions[i]),
            "eta": float(result.etas[i]), "reward": int(result.rewards[i]),
            "position": float(c.position), "lane": c.lane,
        }))
    return recs

"""Two-lane traffic microsimulation.

Initial same-lane spacings follow a truncated exponential law; motion is
either uniform velocity (training) or a probabilistic cellular automaton
with acceleration / slowing-down / randomization rules (testing). The road
is toroidal so the car count stays fixed within an episode.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class CarState:
    car_id: int
    lane: int                  # 1 or 2
    position: float            # m, on the shared longitudinal axis
    speed: float               # magnitude, m/s
    direction: int             # +1 (lane 1) or -1 (lane 2)


@dataclass
class TrafficConfig:
    n_cars: int = 6
    rho: float = 0.02          # intensity, 1/m: density ~ exp(-rho * l)
    d_min: float = 10.0
    d_max: float = 200.0
    v1: float = 30.0           # initial/uniform speed, lane 1
    v2: float = -25.0          # lane 2 (sign = direction; magnitude stored)
    v_max_1: float = 30.0
    v_max_2: float = 25.0
    delta_v: float = 5.0
    t_v: float = 0.5           # automaton update interval, s
    p_sd: float = 0.1          # random slow-down probability
    model: str = "uniform"     # "uniform" | "automaton"

    def __post_init__(self):
        if not 0 < self.d_min < self.d_max:
            raise ValueError("need 0 < d_min < d_max")
        if not 0 <= self.p_sd <= 1:
            raise ValueError("p_sd must be a probability")
        if self.model not in ("uniform", "automaton"):
            raise ValueError(f"unknown traffic model {self.model!r}")
        if self.n_cars < 2:
            raise ValueError("need at least 2 cars")

    def v_max(self, lane: int) -> float:
        return self.v_max_1 if lane == 1 else self.v_max_2


@dataclass
class ScenarioState:
    cars: list
    road_length: float
    time: float = 0.0
    automaton_timer: float = 0.0

    def car(self, car_id: int) -> CarState:
        try:
            return next(c for c in self.cars if c.car_id == car_id)
        except StopIteration:
            raise KeyError(f"unknown car_id {car_id}") from None


def sample_spacing(rho: float, d_min: float, d_max: float,
                   rng: np.random.Generator) -> float:
    """Inverse-CDF draw from density proportional to exp(-rho*l) on [d_min, d_max]."""
    if not 0 < d_min < d_max:
        raise ValueError("need 0 < d_min < d_max")
    if rho <= 0:
        raise ValueError("rho must be positive")
    u = rng.random()
    a = math.exp(-rho * d_min)
    b = math.exp(-rho * d_max)
    return -math.log(a - u * (a - b)) / rho


def spacing_cdf(l, rho: float, d_min: float, d_max: float):
    """Analytic CDF of the truncated exponential spacing law."""
    a = math.exp(-rho * d_min)
    b = math.exp(-rho * d_max)
    l = np.asarray(l, dtype=float)
    return np.clip((a - np.exp(-rho * np.clip(l, d_min, d_max))) / (a - b), 0.0, 1.0)


def init_scenario(cfg: TrafficConfig, rng: np.random.Generator) -> ScenarioState:
    """Fresh scenario: cars split ceil/floor across lanes, i.i.d. gaps.

    Lane 1 travels in +1 direction at |v1|, lane 2 in -1 direction at |v2|.
    The road length covers the longer lane extent plus one d_max margin.
    """
    n1 = (cfg.n_cars + 1) // 2
    n2 = cfg.n_cars - n1
    cars = []
    extents = []
    cid = 0
    for lane, count, speed, direction in (
            (1, n1, abs(cfg.v1), +1), (2, n2, abs(cfg.v2), -1)):
        pos = 0.0
        for k in range(count):
            if k > 0:
                pos += sample_spacing(cfg.rho, cfg.d_min, cfg.d_max, rng)
            cars.append(CarState(cid, lane, pos, speed, direction))
            cid += 1
        extents.append(pos)
    road_length = max(extents) + cfg.d_max
    return ScenarioState(cars, road_length)


def step_uniform(state: ScenarioState, dt: float) -> ScenarioState:
    """Advance every car at its current speed; positions wrap (in place)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    for c in state.cars:
        c.position = (c.position + c.direction * c.speed * dt) % state.road_length
    state.time += dt
    return state


def _front_gap_same_lane(state: ScenarioState, car: CarState):
    """(neighbor, gap) of the nearest car strictly ahead in the same lane."""
    best = None
    best_gap = None
    for other in state.cars:
        if other.car_id == car.car_id or other.lane != car.lane:
            continue
        gap = (other.position - car.position) * car.direction % state.road_length
        if gap == 0.0:
            gap = state.road_length
        if best_gap is None or gap < best_gap:
            best, best_gap = other, gap
    return best, best_gap


def step_automaton(state: ScenarioState, cfg: TrafficConfig, dt: float,
                   rng: np.random.Generator) -> ScenarioState:
    """Cellular-automaton stepping: speed rules every t_v, then advance.

    Rules applied synchronously per car, in order:
      1) acceleration:  v < v_max          -> v += delta_v
      2) slowing down:  front gap <= d_min -> v -= delta_v
      3) randomization: with prob p_sd, if v >= delta_v -> v -= delta_v
    Speeds are clamped to [0, v_max].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    state.automaton_timer += dt
    while state.automaton_timer >= cfg.t_v - 1e-12:
        state.automaton_timer -= cfg.t_v
        gaps = {c.car_id: _front_gap_same_lane(state, c)[1] for c in state.cars}
        for c in state.cars:
            vmax = cfg.v_max(c.lane)
            v = c.speed
            if v < vmax:
                v += cfg.delta_v
            if gaps[c.car_id] is not None and gaps[c.car_id] <= cfg.d_min:
                v -= cfg.delta_v
            if v >= cfg.delta_v and rng.random() < cfg.p_sd:
                v -= cfg.delta_v
            c.speed = min(max(v, 0.0), vmax)
    for c in state.cars:
        c.position = (c.position + c.direction * c.speed * dt) % state.road_length
    state.time += dt
    return state


def step(state: ScenarioState, cfg: TrafficConfig, dt: float,
         rng: np.random.Generator) -> ScenarioState:
    if cfg.model == "automaton":
        return step_automaton(state, cfg, dt, rng)
    return step_uniform(state, dt)


def front_neighbors(state: ScenarioState, car_id: int):
    """((position, gap) | None) for the nearest car ahead, same and other lane.

    "Ahead" is in the queried car's travel direction, with toroidal wrap.
    """
    car = state.car(car_id)
    same = None
    other = None
    same_gap = None
    other_gap = None
    for o in state.cars:
        if o.car_id == car_id:
            continue
        gap = (o.position - car.position) * car.direction % state.road_length
        if gap == 0.0:
            gap = state.road_length
        if o.lane == car.lane:
            if same_gap is None or gap < same_gap:
                same, same_gap = o, gap
        else:
            if other_gap is None or gap < other_gap:
                other, other_gap = o, gap
    return (
        (same.position, same_gap) if same is not None else None,
        (other.position, other_gap) if other is not None else None,
    )


def export_scenario_csv(states, path) -> None:
    """Write (time, car_id, lane, position, speed) rows for trajectory plots."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "car_id", "lane", "position", "speed"])
        for st in states:
            for c in st.cars:
                w.writerow([repr(st.time), c.car_id, c.lane,
                            repr(c.position), repr(c.speed)])

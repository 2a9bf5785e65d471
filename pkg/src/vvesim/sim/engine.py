"""Fixed-step closed-loop simulation of the crosswalk braking task.

The loop is split so the networked harness can reuse it unchanged:

* :class:`EgoSide` owns the vehicle, the longitudinal action mapping, the
  lateral tracker and everything evaluated from (ego state, actor
  snapshots): observation, TTZ metrics, reference speed, reward,
  termination.
* :class:`~vvesim.sim.scenario.ActorWorld` owns the pedestrians.
* :class:`Simulator` composes both in one process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from ..errors import InvalidInputError
from ..model import VehicleModel
from ..kernels import X_BETA, X_PSI, X_R, X_V, X_X, X_Y
from .geometry import wrap_angle
from .grid import GridSpec, build_grid, to_ego_frame
from .reward import RewardWeights, reference_speed, step_reward
from .safety import Band, SafetyMetrics, compute_ttz
from .scenario import ActorWorld, Scenario
from .tracking import PurePursuit, lateral_track


@dataclass(frozen=True)
class SimConfig:
    dt_dynamics: float = 0.001
    dt_agent: float = 0.05
    duration_max: float = 30.0
    seed: int = 0
    integrator: str = "rk4"

    def __post_init__(self):
        if not (self.dt_dynamics > 0 and self.dt_agent > 0):
            raise InvalidInputError("time steps must be positive")
        ratio = self.dt_agent / self.dt_dynamics
        if abs(ratio - round(ratio)) > 1e-9 * ratio or round(ratio) < 1:
            raise InvalidInputError("dt_agent must be an integer multiple of dt_dynamics")
        if self.integrator not in ("euler", "rk4"):
            raise InvalidInputError(f"unknown integrator {self.integrator!r}")

    @property
    def substeps(self) -> int:
        return int(round(self.dt_agent / self.dt_dynamics))

    @property
    def dt_agent_us(self) -> int:
        return int(round(self.dt_agent * 1e6))


class Longitudinal(IntEnum):
    HARD_BRAKE = 0
    SOFT_BRAKE = 1
    COAST = 2
    SOFT_THROTTLE = 3
    HOLD_SET_SPEED = 4


@dataclass(frozen=True)
class ActionSet:
    """Discrete actions: five longitudinal commands, optionally crossed with
    steering offsets added on top of the path tracker."""

    hard_brake: float = 6.0
    soft_brake: float = 2.0
    soft_throttle: float = 1.0
    hold_gain: float = 1.0
    hold_accel_max: float = 1.5
    hold_decel_max: float = 2.0
    steer_offsets: tuple = ()

    @property
    def n(self) -> int:
        return len(Longitudinal) * (1 + len(self.steer_offsets))

    def decode(self, action: int):
        if not 0 <= action < self.n:
            raise InvalidInputError(f"action {action} outside [0, {self.n})")
        lon = Longitudinal(action % len(Longitudinal))
        k = action // len(Longitudinal)
        offset = 0.0 if k == 0 else self.steer_offsets[k - 1]
        return lon, offset

    def accel_command(self, lon: Longitudinal, v: float, v_set: float, road_accel: float) -> float:
        if lon is Longitudinal.HARD_BRAKE:
            return -self.hard_brake
        if lon is Longitudinal.SOFT_BRAKE:
            return -self.soft_brake
        if lon is Longitudinal.COAST:
            return 0.0
        if lon is Longitudinal.SOFT_THROTTLE:
            return self.soft_throttle
        a = self.hold_gain * (v_set - v) + road_accel
        return max(-self.hold_decel_max, min(self.hold_accel_max, a))


@dataclass(frozen=True)
class ObservationScales:
    """Divisors mapping raw features into [-1, 1] (then clipped)."""

    speed: float = 20.0
    beta: float = 0.2
    yaw_rate: float = 0.5
    heading: float = math.pi
    lateral: float = 3.5
    n_waypoints: int = 5
    waypoint_spacing: float = 6.0
    waypoint_forward: float = 30.0
    waypoint_lateral: float = 10.0
    distance: float = 50.0
    actor_speed: float = 3.0
    ttz: float = 10.0
    zone_distance: float = 100.0
    n_actor_slots: int = 2

    @property
    def fusion_dim(self) -> int:
        return 6 + 2 * self.n_waypoints + 5 * self.n_actor_slots + 1


@dataclass
class AgentObservation:
    grid: np.ndarray
    fusion: np.ndarray

    def vector(self) -> np.ndarray:
        return np.concatenate([self.grid, self.fusion])


@dataclass(frozen=True)
class StepInfo:
    t: float
    v_ref: float
    d_front: float
    collision: bool = False
    zone_entered: bool = False
    stopped: bool = False
    compliant: bool = False
    end_of_path: bool = False
    timeout: bool = False


@dataclass
class StepResult:
    obs: AgentObservation
    reward: float
    terminal: bool
    metrics: SafetyMetrics
    info: StepInfo
    action: int | None = None


@dataclass
class World:
    """Read-only snapshot of the simulation for export and inspection."""

    t: float
    state: np.ndarray
    actors: list
    step_index: int


def _clip(v: float) -> float:
    if math.isnan(v):
        return 0.0
    return 1.0 if v > 1.0 else (-1.0 if v < -1.0 else v)


@dataclass
class EngineParts:
    """Everything an :class:`EgoSide` needs besides the scenario."""

    model: VehicleModel = field(default_factory=VehicleModel)
    cfg: SimConfig = field(default_factory=SimConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    weights: RewardWeights = field(default_factory=RewardWeights)
    actions: ActionSet = field(default_factory=ActionSet)
    scales: ObservationScales = field(default_factory=ObservationScales)
    tracker: PurePursuit = field(default_factory=PurePursuit)
    v_stop: float = 0.05


class EgoSide:
    def __init__(self, scenario: Scenario, parts: EngineParts | None = None):
        parts = parts or EngineParts()
        self.scenario = scenario
        self.parts = parts
        self.model = parts.model
        self.cfg = parts.cfg
        self.path = scenario.path()
        self.zone_interval = self.path.zone_interval(scenario.crosswalk_zone)
        self.x = np.zeros(8)
        self.step_index = 0
        self.prev_action = None
        self.last_end_of_path = False

    @property
    def t(self) -> float:
        return self.step_index * self.cfg.dt_agent

    def reset(self):
        x0, y0, psi0 = self.scenario.ego_start
        self.x = np.array([0.0, self.scenario.v_init, 0.0, x0, y0, psi0, 0.0, 0.0])
        self.step_index = 0
        self.prev_action = None
        self.last_end_of_path = False

    def pose(self):
        return float(self.x[X_X]), float(self.x[X_Y]), float(self.x[X_PSI])

    def control_for(self, action: int) -> np.ndarray:
        lon, offset = self.parts.actions.decode(action)
        v = float(self.x[X_V])
        vp = self.model.vehicle
        steer, end = lateral_track(self.pose(), v, self.path, vp.wheelbase, vp.l_r,
                                   self.parts.tracker)
        self.last_end_of_path = end
        if not end:
            steer = max(-self.parts.tracker.delta_max,
                        min(self.parts.tracker.delta_max, steer + offset))
        road_accel = (vp.drag_coeff * v * v + vp.roll_coeff * vp.m * 9.81) / vp.m
        accel = self.parts.actions.accel_command(lon, v, self.scenario.v_set, road_accel)
        wp = self.model.wheel
        u = np.zeros(7)
        u[0] = steer
        if accel >= 0:
            u[3] = accel * vp.m * wp.radius_r
        else:
            total = -accel * vp.m
            share_f = vp.l_r / vp.wheelbase
            u[4] = total * share_f * wp.radius_f
            u[5] = total * (1.0 - share_f) * wp.radius_r
        return u

    def apply(self, action: int):
        """Advance the vehicle by one agent period under ``action``."""
        u = self.control_for(action)
        self.model.integrate(self.x, u, self.cfg.dt_dynamics, self.cfg.substeps,
                             self.cfg.integrator, t0=self.t)
        self.step_index += 1

    def evaluate(self, actors, action: int | None) -> StepResult:
        sc = self.scenario
        x, y, psi = self.pose()
        v = float(self.x[X_V])
        s_cg, lateral, path_heading = self.path.project(x, y)
        fx = x + sc.ego_front * math.cos(psi)
        fy = y + sc.ego_front * math.sin(psi)
        s_front = self.path.project(fx, fy)[0]
        s_entry, s_exit = self.zone_interval
        d_front = s_entry - s_front
        past_zone = s_cg >= s_exit

        metrics = compute_ttz((x, y), v, actors, sc.crosswalk_zone, self.path,
                              self.model.vehicle.v_eps, self.zone_interval)
        threatened = any(a.ttz_actor < sc.threat_horizon for a in metrics.actors)
        v_ref = reference_speed(d_front, threatened, past_zone, sc.v_set, sc.a_ref,
                                sc.stop_margin)

        zone_entered = bool(d_front <= 0.0 and not past_zone)
        occupied = any(sc.crosswalk_zone.contains(a.x, a.y) for a in actors)
        contact = any(self._touches(a) for a in actors)
        collision = bool(contact or (zone_entered and occupied))
        stopped = bool(v <= self.parts.v_stop)
        compliant = stopped and not zone_entered and not collision
        end_of_path = bool(s_cg >= self.path.length - 1e-9 or self.last_end_of_path)
        timeout = bool(self.t >= self.cfg.duration_max - 1e-9)
        terminal = collision or zone_entered or stopped or end_of_path or timeout

        if action is None:
            reward = 0.0
        else:
            changed = self.prev_action is not None and action != self.prev_action
            reward = step_reward(v, v_ref, sc.v_set, changed, collision, compliant,
                                 self.parts.weights)
            self.prev_action = action

        obs = self._observe(actors, metrics, v, v_ref, lateral,
                            wrap_angle(psi - path_heading), s_cg, d_front)
        info = StepInfo(self.t, v_ref, d_front, collision, zone_entered, stopped,
                        compliant, end_of_path, timeout)
        return StepResult(obs, reward, terminal, metrics, info, action)

    def _touches(self, actor) -> bool:
        sc = self.scenario
        fwd, lat = to_ego_frame(actor.x, actor.y, *self.pose())
        df = max(-sc.ego_rear - fwd, 0.0, fwd - sc.ego_front)
        dl = max(-sc.ego_width / 2 - lat, 0.0, lat - sc.ego_width / 2)
        return df * df + dl * dl <= sc.actor_radius ** 2

    def _observe(self, actors, metrics, v, v_ref, lateral, heading_err, s_cg, d_front):
        sc = self.parts.scales
        grid = build_grid(self.pose(), actors, self.parts.grid).flat().astype(float)
        feats = [
            v / sc.speed,
            float(self.x[X_BETA]) / sc.beta,
            float(self.x[X_R]) / sc.yaw_rate,
            heading_err / sc.heading,
            lateral / sc.lateral,
            v_ref / sc.speed,
        ]
        pose = self.pose()
        for k in range(1, sc.n_waypoints + 1):
            wx, wy = self.path.point_at(s_cg + k * sc.waypoint_spacing)
            fwd, lat = to_ego_frame(wx, wy, *pose)
            feats += [fwd / sc.waypoint_forward, lat / sc.waypoint_lateral]
        rows = metrics.actors
        for slot in range(sc.n_actor_slots):
            if slot >= len(actors):
                feats += [0.0] * 5
                continue
            a = actors[slot]
            fwd, lat = to_ego_frame(a.x, a.y, *pose)
            ttz_v = rows[slot].ttz_vehicle
            ttz_a = rows[slot].ttz_actor
            feats += [
                math.hypot(fwd, lat) / sc.distance,
                math.atan2(lat, fwd) / math.pi,
                a.speed / sc.actor_speed,
                1.0 if math.isinf(ttz_v) else ttz_v / sc.ttz,
                1.0 if math.isinf(ttz_a) else ttz_a / sc.ttz,
            ]
        feats.append(d_front / sc.zone_distance)
        return AgentObservation(grid, np.array([_clip(f) for f in feats]))


class Simulator:
    """Single-process closed loop: ego side plus pedestrians.

    >>> sim = Simulator()
    >>> obs = sim.reset(seed=3)
    >>> result = sim.step(Longitudinal.SOFT_BRAKE)
    """

    def __init__(self, scenario: Scenario | None = None, parts: EngineParts | None = None):
        self.scenario = scenario or Scenario()
        self.parts = parts or EngineParts(model=VehicleModel(mu=self.scenario.mu))
        self.ego = EgoSide(self.scenario, self.parts)
        self.actors = ActorWorld(self.scenario)
        self.last: StepResult | None = None

    @property
    def n_actions(self) -> int:
        return self.parts.actions.n

    def reset(self, seed=None) -> AgentObservation:
        self.ego.reset()
        snap = self.actors.reset(self.parts.cfg.seed if seed is None else seed)
        self.last = self.ego.evaluate(snap, None)
        return self.last.obs

    def step(self, action: int) -> StepResult:
        self.ego.apply(int(action))
        snap = self.actors.advance(self.parts.cfg.dt_agent)
        self.last = self.ego.evaluate(snap, int(action))
        return self.last

    @property
    def world(self) -> World:
        return World(self.ego.t, self.ego.x.copy(), self.actors.snapshot(), self.ego.step_index)


def metrics_row(result: StepResult, state: np.ndarray, n_actors: int) -> dict:
    """One metrics CSV row for an agent step."""
    row = {
        "t": result.info.t,
        "x": float(state[X_X]),
        "y": float(state[X_Y]),
        "psi": float(state[X_PSI]),
        "v": float(state[X_V]),
        "v_ref": result.info.v_ref,
        "beta": float(state[X_BETA]),
        "r": float(state[X_R]),
        "action": result.action,
        "reward": result.reward,
    }
    for i in range(n_actors):
        a = result.metrics.actors[i] if i < len(result.metrics.actors) else None
        row[f"ttz_veh_{i + 1}"] = a.ttz_vehicle if a else math.inf
        row[f"ttz_ped_{i + 1}"] = a.ttz_actor if a else math.inf
    for i in range(n_actors):
        a = result.metrics.actors[i] if i < len(result.metrics.actors) else None
        row[f"band_{i + 1}"] = (a.band if a else Band.CLEAR).value
    return row

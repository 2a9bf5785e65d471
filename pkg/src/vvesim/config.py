"""Sectioned INI configuration: loading, overrides and resolved printing.

Sections: ``[vehicle]``, ``[tire]``, ``[wheel]``, ``[scenario]`` (geometry,
simulation timing, reward, observation grid and action set), ``[agent]``
and ``[link]``. Every key has a default; :func:`render` prints the fully
resolved set.
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass, field, fields, replace

from .dynamics import VehicleParams
from .errors import ConfigError, VveError
from .agent.training import TrainConfig
from .link.hil import LinkConfig
from .model import VehicleModel
from .sim.engine import ActionSet, EngineParts, SimConfig
from .sim.geometry import Rect
from .sim.grid import GridSpec
from .sim.reward import RewardWeights
from .sim.scenario import Actor, Scenario
from .tire import TireParams
from .wheel import WheelParams

ENV_VAR = "VVESIM_CONFIG"


@dataclass(frozen=True)
class ScenarioConfig:
    """Flat view of everything under ``[scenario]``."""

    road_length: float = 120.0
    waypoint_spacing: float = 10.0
    zone_x_min: float = 80.0
    zone_x_max: float = 84.0
    zone_half_width: float = 3.5
    pedestrian_xs: tuple = (81.0, 83.0)
    pedestrian_span: float = 7.0
    pedestrian_speed: float = 1.4
    v_set: float = 15.0
    stop_margin: float = 3.0
    mu: float = 0.9
    a_ref: float = 1.8
    threat_horizon: float = 6.0
    v_init: float = 15.0
    ego_front: float = 2.2
    ego_rear: float = 2.5
    ego_width: float = 1.9
    actor_radius: float = 0.3
    randomize_actor_phase: bool = True
    dt_dynamics: float = 0.001
    dt_agent: float = 0.05
    duration_max: float = 30.0
    seed: int = 0
    integrator: str = "rk4"
    w_v: float = 0.5
    w_j: float = 0.05
    p_collision: float = 10.0
    b_stop: float = 50.0
    grid_width: int = 16
    grid_height: int = 32
    grid_cell: float = 1.0
    steer_offsets: tuple = ()

    def scenario(self) -> Scenario:
        n = int(round(self.road_length / self.waypoint_spacing))
        line = tuple((float(i * self.waypoint_spacing), 0.0) for i in range(n + 1))
        actors = []
        for i, x in enumerate(self.pedestrian_xs):
            y0, y1 = (-self.pedestrian_span, self.pedestrian_span)
            if i % 2:
                y0, y1 = y1, y0
            heading = math.pi / 2 if y1 > y0 else -math.pi / 2
            actors.append(Actor(i + 1, float(x), y0, heading, self.pedestrian_speed,
                                ((float(x), y0), (float(x), y1))))
        zone = Rect(self.zone_x_min, self.zone_x_max, -self.zone_half_width,
                    self.zone_half_width)
        return Scenario(line, zone, tuple(actors), self.v_set, self.stop_margin, self.mu,
                        self.a_ref, self.threat_horizon, (0.0, 0.0, 0.0), self.v_init,
                        self.ego_front, self.ego_rear, self.ego_width, self.actor_radius,
                        self.randomize_actor_phase)

    def sim(self) -> SimConfig:
        return SimConfig(self.dt_dynamics, self.dt_agent, self.duration_max, self.seed,
                         self.integrator)

    def weights(self) -> RewardWeights:
        return RewardWeights(self.w_v, self.w_j, self.p_collision, self.b_stop)

    def grid(self) -> GridSpec:
        return GridSpec(self.grid_width, self.grid_height, self.grid_cell,
                        0.0, -self.grid_width * self.grid_cell / 2, self.actor_radius)

    def actions(self) -> ActionSet:
        return ActionSet(steer_offsets=tuple(self.steer_offsets))


SECTIONS = {
    "vehicle": VehicleParams,
    "tire": TireParams,
    "wheel": WheelParams,
    "scenario": ScenarioConfig,
    "agent": TrainConfig,
    "link": LinkConfig,
}


@dataclass(frozen=True)
class RunConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tire: TireParams = field(default_factory=TireParams)
    wheel: WheelParams = field(default_factory=WheelParams)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    agent: TrainConfig = field(default_factory=TrainConfig)
    link: LinkConfig = field(default_factory=LinkConfig)

    def build_scenario(self) -> Scenario:
        return self.scenario.scenario()

    def engine_parts(self) -> EngineParts:
        sc = self.scenario
        model = VehicleModel(self.vehicle, self.tire, self.wheel, mu=sc.mu)
        return EngineParts(model=model, cfg=sc.sim(), grid=sc.grid(), weights=sc.weights(),
                           actions=sc.actions())

    def snapshot(self) -> dict:
        return {name: {f.name: _plain(getattr(getattr(self, name), f.name))
                       for f in fields(getattr(self, name))}
                for name in SECTIONS}


def _plain(v):
    return list(v) if isinstance(v, tuple) else v


def _parse(section: str, key: str, raw: str, default):
    label = f"{section}.{key}"
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            val = float(raw)
            if math.isnan(val):
                raise ValueError("NaN is not allowed")
            return val
        if isinstance(default, tuple):
            if not raw:
                return ()
            conv = type(default[0]) if default else float
            return tuple(conv(p.strip()) for p in raw.split(","))
        return raw
    except ValueError as exc:
        raise ConfigError(f"{label}: {exc}", key=label) from None


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_format(x) for x in v)
    return str(v)


def parse_override(text: str):
    """``section.key=value`` -> ``(section, key, value)``."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ConfigError(f"override {text!r} is not of the form section.key=value", key=text)
    lhs, value = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    return section.strip(), key.strip(), value


def load_config(path=None, overrides=(), use_env: bool = True) -> RunConfig:
    """Defaults, then the file (``path`` or ``$VVESIM_CONFIG``), then overrides."""
    if path is None and use_env:
        path = os.environ.get(ENV_VAR) or None
    values: dict[str, dict[str, str]] = {s: {} for s in SECTIONS}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SECTIONS:
                raise ConfigError(f"unknown section [{section}]", key=section)
            values[section].update(parser[section])
    for text in overrides:
        section, key, value = parse_override(text)
        if section not in SECTIONS:
            raise ConfigError(f"unknown section {section!r}", key=f"{section}.{key}")
        values[section][key] = value
    built = {}
    for section, cls in SECTIONS.items():
        defaults = {f.name: getattr(cls(), f.name) for f in fields(cls)}
        kwargs = {}
        for key, raw in values[section].items():
            if key not in defaults:
                raise ConfigError(f"unknown key {section}.{key}", key=f"{section}.{key}")
            kwargs[key] = _parse(section, key, raw, defaults[key])
        try:
            built[section] = replace(cls(), **kwargs)
        except (VveError, ValueError, TypeError) as exc:
            if isinstance(exc, ConfigError):
                raise
            keys = ", ".join(f"{section}.{k}" for k in kwargs) or section
            raise ConfigError(f"[{section}] invalid ({keys}): {exc}",
                              key=next(iter(kwargs), section)) from exc
    cfg = RunConfig(**built)
    try:
        cfg.build_scenario()
        cfg.engine_parts()
    except (VveError, ValueError) as exc:
        raise ConfigError(f"[scenario] invalid: {exc}", key="scenario") from exc
    return cfg


def render(cfg: RunConfig) -> str:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    for section in SECTIONS:
        obj = getattr(cfg, section)
        parser[section] = {f.name: _format(getattr(obj, f.name)) for f in fields(obj)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()

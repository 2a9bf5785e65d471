"""Time-to-collision-zone (TTZ) metrics and urgency bands."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from .geometry import Path, Rect

RED_S = 2.0
ORANGE_S = 4.0
BLUE_S = 6.0
SPEED_EPS = 1e-9


class Band(str, Enum):
    RED = "red"
    ORANGE = "orange"
    BLUE = "blue"
    CLEAR = "clear"


def classify_band(ttz_vehicle: float, ttz_actor: float) -> Band:
    """Urgency band of one vehicle/actor TTZ pair (both must be under a threshold)."""
    worst = max(ttz_vehicle, ttz_actor)
    if worst < RED_S:
        return Band.RED
    if worst < ORANGE_S:
        return Band.ORANGE
    if worst < BLUE_S:
        return Band.BLUE
    return Band.CLEAR


@dataclass(frozen=True)
class ActorSafety:
    actor_id: int
    ttz_vehicle: float
    ttz_actor: float
    band: Band


@dataclass(frozen=True)
class SafetyMetrics:
    actors: tuple

    @property
    def worst_band(self) -> Band:
        order = [Band.RED, Band.ORANGE, Band.BLUE, Band.CLEAR]
        if not self.actors:
            return Band.CLEAR
        return min((a.band for a in self.actors), key=order.index)


def vehicle_ttz(s_ego: float, v: float, zone_interval, v_eps: float) -> float:
    """Ego time to the zone entry along the path; 0 inside, +inf once past it or at rest."""
    s_entry, s_exit = zone_interval
    if s_ego >= s_exit:
        return math.inf
    if s_ego >= s_entry:
        return 0.0
    if v <= 0.0:
        return math.inf
    return (s_entry - s_ego) / max(v, v_eps)


def actor_ttz(x: float, y: float, speed: float, zone: Rect) -> float:
    dist = zone.distance(x, y)
    if dist == 0.0:
        return 0.0
    if speed <= SPEED_EPS:
        return math.inf
    return dist / speed


def compute_ttz(ego_xy, v: float, actors, zone: Rect, path: Path, v_eps: float = 0.5,
                zone_interval=None) -> SafetyMetrics:
    """TTZ pair and band for every actor.

    ``ego_xy`` is the reference point of the ego (its centre of gravity);
    its distance to the zone is measured along ``path``.
    """
    if zone_interval is None:
        zone_interval = path.zone_interval(zone)
    s_ego = path.project(*ego_xy)[0]
    ttz_v = vehicle_ttz(s_ego, v, zone_interval, v_eps)
    rows = []
    for a in actors:
        ttz_a = actor_ttz(a.x, a.y, a.speed, zone)
        rows.append(ActorSafety(a.id, ttz_v, ttz_a, classify_band(ttz_v, ttz_a)))
    return SafetyMetrics(tuple(rows))

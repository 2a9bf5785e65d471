"""Crosswalk scenario: straight road, conflict zone, patrolling pedestrians."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import InvalidInputError
from .geometry import Path, Rect


@dataclass(frozen=True)
class Actor:
    """A pedestrian walking back and forth between two patrol endpoints."""

    id: int
    x: float
    y: float
    heading: float
    speed: float
    patrol: tuple = ((0.0, 0.0), (1.0, 0.0))
    kind: str = "pedestrian"

    def __post_init__(self):
        if self.speed < 0:
            raise InvalidInputError("actor speed must be >= 0")
        (ax, ay), (bx, by) = self.patrol
        if ax == bx and ay == by:
            raise InvalidInputError("patrol endpoints must be distinct")


@dataclass(frozen=True)
class ActorSnapshot:
    """What crosses the link about an actor: no patrol bookkeeping."""

    id: int
    x: float
    y: float
    heading: float
    speed: float


def default_actors():
    return [
        Actor(1, 81.0, -7.0, math.pi / 2, 1.4, ((81.0, -7.0), (81.0, 7.0))),
        Actor(2, 83.0, 7.0, -math.pi / 2, 1.4, ((83.0, 7.0), (83.0, -7.0))),
    ]


@dataclass(frozen=True)
class Scenario:
    """Scenario geometry. Every default here is a documented placeholder."""

    lane_centerline: tuple = tuple((float(x), 0.0) for x in range(0, 121, 10))
    crosswalk_zone: Rect = Rect(80.0, 84.0, -3.5, 3.5)
    actors: tuple = field(default_factory=lambda: tuple(default_actors()))
    v_set: float = 15.0
    stop_margin: float = 3.0
    mu: float = 0.9
    a_ref: float = 1.8
    threat_horizon: float = 6.0
    ego_start: tuple = (0.0, 0.0, 0.0)
    v_init: float = 15.0
    ego_front: float = 2.2
    ego_rear: float = 2.5
    ego_width: float = 1.9
    actor_radius: float = 0.3
    randomize_actor_phase: bool = True

    def __post_init__(self):
        if len(self.lane_centerline) < 2:
            raise InvalidInputError("centerline needs at least two waypoints")
        if not self.v_set > 0:
            raise InvalidInputError("v_set must be > 0")
        if self.path().zone_interval(self.crosswalk_zone) is None:
            raise InvalidInputError("crosswalk zone must intersect the centerline")
        ids = [a.id for a in self.actors]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("actor ids must be unique")

    def path(self) -> Path:
        return Path(self.lane_centerline)

    def with_actors(self, actors) -> "Scenario":
        return replace(self, actors=tuple(actors))


class PatrolState:
    """Mutable patrol position: arc coordinate along the segment and direction."""

    def __init__(self, actor: Actor, u: float, direction: int):
        (ax, ay), (bx, by) = actor.patrol
        self.actor = actor
        self.ax, self.ay = ax, ay
        self.length = math.hypot(bx - ax, by - ay)
        self.ux, self.uy = (bx - ax) / self.length, (by - ay) / self.length
        self.u = u
        self.direction = direction

    @classmethod
    def from_actor(cls, actor: Actor) -> "PatrolState":
        """Place the patrol state at the actor's current position and heading."""
        st = cls(actor, 0.0, 1)
        u = (actor.x - st.ax) * st.ux + (actor.y - st.ay) * st.uy
        st.u = min(max(u, 0.0), st.length)
        forward = math.cos(actor.heading) * st.ux + math.sin(actor.heading) * st.uy
        st.direction = 1 if forward >= 0 else -1
        return st

    def advance(self, dt: float):
        u = self.u + self.direction * self.actor.speed * dt
        # reflect at the endpoints; loop covers dt spanning several lengths
        while u > self.length or u < 0.0:
            if u > self.length:
                u = 2.0 * self.length - u
            else:
                u = -u
            self.direction = -self.direction
        self.u = u

    def snapshot(self) -> ActorSnapshot:
        heading = math.atan2(self.direction * self.uy, self.direction * self.ux)
        return ActorSnapshot(self.actor.id, self.ax + self.u * self.ux,
                             self.ay + self.u * self.uy, heading, self.actor.speed)


class ActorWorld:
    """Owns the pedestrians. Shared by the single-process engine and the
    environment side of the networked harness, so both draw identical
    initial phases from the same seed."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.states: list[PatrolState] = []
        self.t = 0.0

    def reset(self, seed) -> list[ActorSnapshot]:
        rng = np.random.default_rng(seed)
        self.states = []
        for actor in self.scenario.actors:
            if self.scenario.randomize_actor_phase:
                st = PatrolState.from_actor(actor)
                st.u = float(rng.uniform(0.0, st.length))
                st.direction = 1 if rng.random() < 0.5 else -1
            else:
                st = PatrolState.from_actor(actor)
            self.states.append(st)
        self.t = 0.0
        return self.snapshot()

    def advance(self, dt: float) -> list[ActorSnapshot]:
        for st in self.states:
            st.advance(dt)
        self.t += dt
        return self.snapshot()

    def snapshot(self) -> list[ActorSnapshot]:
        return [st.snapshot() for st in self.states]

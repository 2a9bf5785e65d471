"""Rigid planar mapping between the real (vehicle) frame and the virtual world."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..sim.geometry import wrap_angle


@dataclass(frozen=True)
class PosePayload:
    x: float
    y: float
    psi: float
    v: float
    beta: float
    r: float


@dataclass(frozen=True)
class FrameTransform:
    """``virtual = R(rotation) (real - origin) + offset``."""

    origin: tuple = (0.0, 0.0)
    rotation: float = 0.0
    offset: tuple = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "offset", (float(self.offset[0]), float(self.offset[1])))
        object.__setattr__(self, "rotation", wrap_angle(float(self.rotation)))

    @property
    def is_identity(self) -> bool:
        return self.origin == (0.0, 0.0) and self.rotation == 0.0 and self.offset == (0.0, 0.0)

    def point(self, x: float, y: float):
        if self.is_identity:
            return x, y
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        dx, dy = x - self.origin[0], y - self.origin[1]
        return c * dx - s * dy + self.offset[0], s * dx + c * dy + self.offset[1]

    def inverse_point(self, x: float, y: float):
        if self.is_identity:
            return x, y
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        dx, dy = x - self.offset[0], y - self.offset[1]
        return c * dx + s * dy + self.origin[0], -s * dx + c * dy + self.origin[1]

    def heading(self, psi: float) -> float:
        return psi if self.rotation == 0.0 else wrap_angle(psi + self.rotation)

    def inverse_heading(self, psi: float) -> float:
        return psi if self.rotation == 0.0 else wrap_angle(psi - self.rotation)


def transform_pose(p: PosePayload, t: FrameTransform) -> PosePayload:
    x, y = t.point(p.x, p.y)
    return replace(p, x=x, y=y, psi=t.heading(p.psi))


def inverse_transform(p: PosePayload, t: FrameTransform) -> PosePayload:
    x, y = t.inverse_point(p.x, p.y)
    return replace(p, x=x, y=y, psi=t.inverse_heading(p.psi))

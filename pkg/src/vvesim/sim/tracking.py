"""Pure-pursuit lateral path tracker."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import Path


@dataclass(frozen=True)
class PurePursuit:
    lookahead_min: float = 4.0
    lookahead_gain: float = 0.5
    delta_max: float = 0.5

    def lookahead(self, v: float) -> float:
        return max(self.lookahead_min, self.lookahead_gain * v)


def _lookahead_point(path: Path, px: float, py: float, s_start: float, dist: float):
    """First point on the path past ``s_start`` at Euclidean distance ``dist``."""
    for _, p0, p1, s0, seg_len in path.segments():
        if s0 + seg_len < s_start:
            continue
        d = p1 - p0
        f = p0 - np.array([px, py])
        a = float(d @ d)
        b = 2.0 * float(f @ d)
        c = float(f @ f) - dist * dist
        disc = b * b - 4 * a * c
        if disc < 0:
            continue
        t = (-b + math.sqrt(disc)) / (2 * a)
        if 0.0 <= t <= 1.0 and s0 + t * seg_len >= s_start:
            return float(p0[0] + t * d[0]), float(p0[1] + t * d[1])
    return None


def lateral_track(pose, v: float, path: Path, wheelbase: float, l_r: float,
                  tracker: PurePursuit = PurePursuit()):
    """Front steer angle toward the lookahead point.

    ``pose`` is the CG pose ``(x, y, psi)``; the geometry is evaluated at the
    rear axle. Returns ``(delta, end_of_path)``.
    """
    x, y, psi = pose
    rx = x - l_r * math.cos(psi)
    ry = y - l_r * math.sin(psi)
    s_rear = path.project(rx, ry)[0]
    if s_rear >= path.length:
        return 0.0, True
    look = tracker.lookahead(v)
    target = _lookahead_point(path, rx, ry, s_rear, look)
    if target is None:
        target = (float(path.points[-1, 0]), float(path.points[-1, 1]))
        look = math.hypot(target[0] - rx, target[1] - ry)
        if look <= 1e-9:
            return 0.0, True
    eta = math.atan2(target[1] - ry, target[0] - rx) - psi
    delta = math.atan(2.0 * wheelbase * math.sin(eta) / look)
    delta = max(-tracker.delta_max, min(tracker.delta_max, delta))
    return delta, False

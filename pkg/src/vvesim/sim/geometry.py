"""Planar geometry helpers: polyline centerline and axis-aligned zones."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise InvalidInputError("rectangle must have positive extent")

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def distance(self, x: float, y: float) -> float:
        """Euclidean distance from a point to the rectangle (0 inside)."""
        dx = max(self.x_min - x, 0.0, x - self.x_max)
        dy = max(self.y_min - y, 0.0, y - self.y_max)
        return math.hypot(dx, dy)


class Path:
    """Polyline with arc-length parametrisation."""

    def __init__(self, waypoints):
        pts = np.asarray(waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise InvalidInputError("centerline needs at least two (x, y) waypoints")
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0):
            raise InvalidInputError("centerline waypoints must be distinct")
        self.points = pts
        self._seg = seg
        self._len = lengths
        self._s = np.concatenate([[0.0], np.cumsum(lengths)])
        self.length = float(self._s[-1])

    def project(self, x: float, y: float):
        """Closest point on the path: ``(s, lateral_offset, path_heading)``.

        Lateral offset is positive to the left of the direction of travel.
        """
        rel = np.array([x, y]) - self.points[:-1]
        t = np.einsum("ij,ij->i", rel, self._seg) / self._len**2
        t = np.clip(t, 0.0, 1.0)
        near = self.points[:-1] + t[:, None] * self._seg
        d2 = np.sum((np.array([x, y]) - near) ** 2, axis=1)
        i = int(np.argmin(d2))
        sx, sy = self._seg[i]
        heading = math.atan2(sy, sx)
        rx, ry = x - self.points[i, 0], y - self.points[i, 1]
        lateral = (sx * ry - sy * rx) / self._len[i]
        along = float(self._s[i] + t[i] * self._len[i])
        return along, lateral, heading

    def point_at(self, s: float):
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._s, s, side="right") - 1)
        i = min(i, len(self._len) - 1)
        frac = (s - self._s[i]) / self._len[i]
        p = self.points[i] + frac * self._seg[i]
        return float(p[0]), float(p[1])

    def segments(self):
        for i in range(len(self._len)):
            yield i, self.points[i], self.points[i + 1], float(self._s[i]), float(self._len[i])

    def zone_interval(self, zone: Rect):
        """Arc-length interval ``(s_entry, s_exit)`` of the path inside ``zone``.

        Returns ``None`` when the path misses the zone.
        """
        entry = exit_ = None
        for _, p0, p1, s0, seg_len in self.segments():
            clip = _clip_segment(p0, p1, zone)
            if clip is None:
                continue
            t0, t1 = clip
            if entry is None:
                entry = s0 + t0 * seg_len
            exit_ = s0 + t1 * seg_len
        if entry is None:
            return None
        return entry, exit_


def _clip_segment(p0, p1, rect: Rect):
    """Liang-Barsky clip of segment p0->p1; returns parameter interval or None."""
    dx = p1[0] - p0[0]
    dy = p1[1] - p0[1]
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, p0[0] - rect.x_min), (dx, rect.x_max - p0[0]),
                 (-dy, p0[1] - rect.y_min), (dy, rect.y_max - p0[1])):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            t0 = max(t0, t)
        else:
            t1 = min(t1, t)
        if t0 > t1:
            return None
    return t0, t1


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi

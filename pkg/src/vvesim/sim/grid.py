"""Ego-centric binary occupancy grid."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError


@dataclass(frozen=True)
class GridSpec:
    """Grid geometry in the ego frame (forward, left).

    Rows index forward distance from ``origin_forward``; columns index lateral
    offset from ``origin_lateral`` (the right edge of the grid).
    """

    width: int = 16
    height: int = 32
    cell_size: float = 1.0
    origin_forward: float = 0.0
    origin_lateral: float = -8.0
    actor_radius: float = 0.3

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or not self.cell_size > 0:
            raise InvalidInputError("grid dimensions and cell size must be positive")

    @property
    def size(self) -> int:
        return self.width * self.height


@dataclass
class OccupancyGrid:
    width: int
    height: int
    cell_size: float
    origin: tuple
    cells: np.ndarray

    def __post_init__(self):
        if self.cells.size != self.width * self.height:
            raise InvalidInputError("cells length must equal width * height")

    def occupied(self, row: int, col: int) -> bool:
        return bool(self.cells.reshape(self.height, self.width)[row, col])

    def flat(self) -> np.ndarray:
        return self.cells.reshape(-1)


def to_ego_frame(x, y, ego_x, ego_y, ego_psi):
    dx, dy = x - ego_x, y - ego_y
    c, s = math.cos(ego_psi), math.sin(ego_psi)
    return c * dx + s * dy, -s * dx + c * dy


def build_grid(ego_pose, actors, spec: GridSpec = GridSpec()) -> OccupancyGrid:
    """A cell is occupied iff some actor's disc footprint intersects it."""
    ex, ey, epsi = ego_pose
    cells = np.zeros((spec.height, spec.width), dtype=np.uint8)
    c = spec.cell_size
    rad = spec.actor_radius
    for a in actors:
        fwd, lat = to_ego_frame(a.x, a.y, ex, ey, epsi)
        gf = (fwd - spec.origin_forward) / c
        gl = (lat - spec.origin_lateral) / c
        r_cells = rad / c
        row_lo = max(int(math.floor(gf - r_cells)), 0)
        row_hi = min(int(math.floor(gf + r_cells)), spec.height - 1)
        col_lo = max(int(math.floor(gl - r_cells)), 0)
        col_hi = min(int(math.floor(gl + r_cells)), spec.width - 1)
        for i in range(row_lo, row_hi + 1):
            for j in range(col_lo, col_hi + 1):
                # nearest point of cell (i, j) to the disc centre, in cell units
                nf = min(max(gf, i), i + 1)
                nl = min(max(gl, j), j + 1)
                if (gf - nf) ** 2 + (gl - nl) ** 2 <= r_cells * r_cells:
                    cells[i, j] = 1
    return OccupancyGrid(spec.width, spec.height, c,
                         (spec.origin_forward, spec.origin_lateral), cells.reshape(-1))

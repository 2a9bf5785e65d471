"""Modified Dugoff combined-slip tire model."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import kernels
from .dynamics import GRAVITY, VehicleParams
from .errors import InvalidInputError


@dataclass(frozen=True)
class TireParams:
    """Per-axle tire parameters.

    ``symmetric_g`` selects the odd-symmetric evaluation (``|s|`` and
    ``|tan alpha|`` in the correction factors and the ``1 - s`` terms). Set
    it to ``False`` to evaluate the printed formula with signed slip.
    """

    c_x: float = 80000.0
    c_y: float = 50000.0
    s_clamp: float = 0.99
    slip_eps: float = 1e-6
    symmetric_g: bool = True

    def __post_init__(self):
        if not (self.c_x > 0 and self.c_y > 0):
            raise InvalidInputError("tire stiffnesses must be > 0")
        if not 0 < self.s_clamp < 1:
            raise InvalidInputError("s_clamp must lie in (0, 1)")
        if not self.slip_eps > 0:
            raise InvalidInputError("slip_eps must be > 0")

    @property
    def g_mode(self) -> int:
        return kernels.GMODE_SYMMETRIC if self.symmetric_g else kernels.GMODE_LITERAL


@dataclass(frozen=True)
class SlipState:
    s: float
    alpha: float
    f_z: float
    mu: float = 0.9


@dataclass(frozen=True)
class DugoffIntermediates:
    z: float
    f_of_z: float
    g_x: float
    g_y: float


def dugoff_forces(slip: SlipState, params: TireParams):
    """Longitudinal and lateral force for one axle.

    Returns ``(f_x, f_y, DugoffIntermediates)``. Slip is clamped to
    ``+-params.s_clamp``; inside the combined-slip dead zone both forces are
    exactly zero.
    """
    if not slip.f_z >= 0:
        raise InvalidInputError(f"vertical load must be >= 0, got {slip.f_z!r}")
    if not -1.0 <= slip.s <= 1.0:
        raise InvalidInputError(f"longitudinal slip must be in [-1, 1], got {slip.s!r}")
    if not 0 < slip.mu <= 1.5:
        raise InvalidInputError(f"friction coefficient must be in (0, 1.5], got {slip.mu!r}")
    if not math.isfinite(slip.alpha):
        raise InvalidInputError("slip angle is not finite")
    f_x, f_y, z, f_of_z, g_x, g_y = kernels.dugoff(
        slip.s, slip.alpha, slip.f_z, slip.mu, params.c_x, params.c_y,
        params.s_clamp, params.slip_eps, params.g_mode)
    return f_x, f_y, DugoffIntermediates(z, f_of_z, g_x, g_y)


def vertical_loads(params: VehicleParams):
    """Static axle loads ``(f_zf, f_zr)``; no load transfer."""
    weight = params.m * GRAVITY
    wheelbase = params.l_f + params.l_r
    return weight * params.l_r / wheelbase, weight * params.l_f / wheelbase

"""Extended single-track vehicle model: body equations, axle kinematics, road load.

States are side-slip ``beta``, speed ``v`` and yaw rate ``r``; the pose
``(x, y, psi)`` is obtained by integrating :func:`pose_rates`. Tire forces
are inputs here and come from :mod:`vvesim.tire`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from . import kernels
from .errors import InvalidInputError, SingularityError

GRAVITY = kernels.GRAVITY


def _require_finite(obj, label):
    for f in fields(obj):
        val = getattr(obj, f.name)
        if isinstance(val, float) and not math.isfinite(val):
            raise InvalidInputError(f"{label}.{f.name} is not finite: {val!r}")


@dataclass(frozen=True)
class VehicleParams:
    """Chassis parameters. Defaults describe a generic 1.5 t sedan."""

    m: float = 1500.0
    l_f: float = 1.2
    l_r: float = 1.5
    I_z: float = 2500.0
    drag_coeff: float = 0.38
    roll_coeff: float = 0.01
    v_eps: float = 0.5

    def __post_init__(self):
        for name in ("m", "l_f", "l_r", "I_z", "v_eps"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"VehicleParams.{name} must be > 0")

    @property
    def wheelbase(self) -> float:
        return self.l_f + self.l_r


@dataclass(frozen=True)
class VehicleState:
    beta: float = 0.0
    v: float = 0.0
    r: float = 0.0
    x: float = 0.0
    y: float = 0.0
    psi: float = 0.0


@dataclass(frozen=True)
class ControlInput:
    """Steer angles, axle drive torques, brake torque magnitudes and yaw disturbance."""

    delta_f: float = 0.0
    delta_r: float = 0.0
    m_f: float = 0.0
    m_r: float = 0.0
    m_zd: float = 0.0
    brake_f: float = 0.0
    brake_r: float = 0.0

    def __post_init__(self):
        if abs(self.delta_f) > math.pi / 2 or abs(self.delta_r) > math.pi / 2:
            raise InvalidInputError("steer angles must satisfy |delta| <= pi/2")
        if self.brake_f < 0 or self.brake_r < 0:
            raise InvalidInputError("brake torques are magnitudes and must be >= 0")

    def as_vector(self):
        return (self.delta_f, self.delta_r, self.m_f, self.m_r,
                self.brake_f, self.brake_r, self.m_zd)


@dataclass(frozen=True)
class TireForces:
    f_xf: float = 0.0
    f_xr: float = 0.0
    f_yf: float = 0.0
    f_yr: float = 0.0


@dataclass(frozen=True)
class AxleKinematics:
    v_f: float
    v_r: float
    beta_f: float
    beta_r: float
    alpha_f: float
    alpha_r: float
    v_xf: float
    v_xr: float


@dataclass(frozen=True)
class ResultantLoads:
    sum_fx: float
    sum_fy: float
    sum_mz: float
    f_load: float


def resultant_loads(forces: TireForces, u: ControlInput, f_load: float,
                    params: VehicleParams) -> ResultantLoads:
    """Net body-frame forces and yaw moment from the four tire forces."""
    _require_finite(forces, "forces")
    _require_finite(u, "u")
    if not math.isfinite(f_load):
        raise InvalidInputError("f_load is not finite")
    fx, fy, mz = kernels.resultant_loads(
        forces.f_xf, forces.f_xr, forces.f_yf, forces.f_yr,
        u.delta_f, u.delta_r, params.l_f, params.l_r, f_load, u.m_zd)
    return ResultantLoads(fx, fy, mz, f_load)


def road_load(state: VehicleState, params: VehicleParams) -> float:
    """Aerodynamic drag plus rolling resistance, always opposing forward motion."""
    return kernels.road_load(state.v, params.m, params.drag_coeff, params.roll_coeff)


def state_derivative(state: VehicleState, forces: TireForces, u: ControlInput,
                     f_load: float, params: VehicleParams):
    """Return ``(beta_dot, v_dot, r_dot)``.

    The side-slip row divides by speed, so callers must switch to the
    low-speed mode (see :func:`vvesim.kernels.derivative`) below
    ``params.v_eps``.
    """
    if not state.v >= params.v_eps:
        raise SingularityError(
            f"speed {state.v!r} below v_eps={params.v_eps}; side-slip rate undefined")
    return kernels.body_derivative(
        state.beta, state.v, state.r, forces.f_xf, forces.f_xr,
        forces.f_yf, forces.f_yr, u.delta_f, u.delta_r, f_load, u.m_zd,
        params.m, params.l_f, params.l_r, params.I_z)


def axle_kinematics(state: VehicleState, u: ControlInput,
                    params: VehicleParams) -> AxleKinematics:
    if not state.v >= params.v_eps:
        raise SingularityError(
            f"speed {state.v!r} below v_eps={params.v_eps}; axle slip angles undefined")
    return AxleKinematics(*kernels.axle_kinematics(
        state.beta, state.v, state.r, params.l_f, params.l_r, u.delta_f, u.delta_r))


def pose_rates(state: VehicleState):
    """World-frame ``(x_dot, y_dot, psi_dot)``: velocity points along ``psi + beta``."""
    heading = state.psi + state.beta
    return state.v * math.cos(heading), state.v * math.sin(heading), state.r

"""Wheel spin dynamics in deviated-angular-velocity form.

The wheel state is the deviation ``d_omega`` from the rolling-synchronous
speed ``v_x / R``. An undriven wheel with zero tire force therefore stays
exactly synchronised and produces exactly zero slip.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import kernels
from .dynamics import AxleKinematics, TireForces
from .errors import InvalidInputError


@dataclass(frozen=True)
class WheelParams:
    radius_f: float = 0.3
    radius_r: float = 0.3
    inertia_f: float = 1.2
    inertia_r: float = 1.2
    # Slip denominator floor. Large enough that the wheel mode stays stable
    # under RK4 at dt = 1 ms: slip stiffness scales with 1 / denominator.
    v_slip_eps: float = 5.0
    # Brake torque fades to zero inside |omega| < omega_eps. Below ~2 rad/s
    # the fade gain T_b / (omega_eps * I) destabilises RK4 at dt = 1 ms.
    omega_eps: float = 4.0

    def __post_init__(self):
        for name in ("radius_f", "radius_r", "inertia_f", "inertia_r",
                     "v_slip_eps", "omega_eps"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"WheelParams.{name} must be > 0")


@dataclass(frozen=True)
class WheelState:
    d_omega_f: float = 0.0
    d_omega_r: float = 0.0


def wheel_derivative(ws: WheelState, torques, forces: TireForces, params: WheelParams):
    """Spin acceleration of the deviation states for net axle torques ``(m_f, m_r)``."""
    m_f, m_r = torques
    return ((m_f - forces.f_xf * params.radius_f) / params.inertia_f,
            (m_r - forces.f_xr * params.radius_r) / params.inertia_r)


def absolute_omega(ws: WheelState, kin: AxleKinematics, params: WheelParams):
    return (ws.d_omega_f + kin.v_xf / params.radius_f,
            ws.d_omega_r + kin.v_xr / params.radius_r)


def slip_ratio(ws: WheelState, kin: AxleKinematics, params: WheelParams):
    """Longitudinal slip per axle, positive when the wheel overspins."""
    return (kernels.slip_ratio(ws.d_omega_f, kin.v_xf, params.radius_f, params.v_slip_eps),
            kernels.slip_ratio(ws.d_omega_r, kin.v_xr, params.radius_r, params.v_slip_eps))


def brake_torque(omega: float, brake: float, params: WheelParams) -> float:
    """Brake torque opposing ``omega``, saturating to zero at standstill."""
    if brake < 0:
        raise InvalidInputError("brake magnitude must be >= 0")
    return kernels.brake_torque(omega, brake, params.omega_eps)

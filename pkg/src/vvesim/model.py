"""Full vehicle model: chassis + tires + wheels, and a fixed-step integrator.

:class:`VehicleModel` bundles the parameter sets and owns the packed
parameter vector consumed by :func:`vvesim.kernels.integrate`.
:func:`composed_derivative` chains the public per-module operations and is
kept as an independent path against which the kernel is checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynamics import (ControlInput, TireForces, VehicleParams, VehicleState,
                       axle_kinematics, pose_rates, road_load, state_derivative)
from .errors import InvalidInputError, SimulationFault
from .tire import SlipState, TireParams, dugoff_forces, vertical_loads
from .wheel import WheelParams, WheelState, brake_torque, slip_ratio, wheel_derivative

INTEGRATORS = {"euler": kernels.METHOD_EULER, "rk4": kernels.METHOD_RK4}


@dataclass(frozen=True)
class FullState:
    """Vehicle state plus the two wheel deviation states."""

    body: VehicleState = field(default_factory=VehicleState)
    wheels: WheelState = field(default_factory=WheelState)

    def to_array(self) -> np.ndarray:
        b, w = self.body, self.wheels
        return np.array([b.beta, b.v, b.r, b.x, b.y, b.psi, w.d_omega_f, w.d_omega_r])

    @classmethod
    def from_array(cls, x) -> "FullState":
        x = [float(v) for v in x]
        return cls(VehicleState(*x[:6]), WheelState(x[6], x[7]))


class VehicleModel:
    def __init__(self, vehicle: VehicleParams | None = None, tire: TireParams | None = None,
                 wheel: WheelParams | None = None, mu: float = 0.9):
        self.vehicle = vehicle or VehicleParams()
        self.tire = tire or TireParams()
        self.wheel = wheel or WheelParams()
        if not 0 < mu <= 1.5:
            raise InvalidInputError("mu must be in (0, 1.5]")
        self.mu = mu
        self.params = self._pack()

    def _pack(self) -> np.ndarray:
        v, t, w = self.vehicle, self.tire, self.wheel
        p = np.zeros(kernels.N_PARAM)
        p[kernels.P_M] = v.m
        p[kernels.P_LF] = v.l_f
        p[kernels.P_LR] = v.l_r
        p[kernels.P_IZ] = v.I_z
        p[kernels.P_DRAG] = v.drag_coeff
        p[kernels.P_ROLL] = v.roll_coeff
        p[kernels.P_VEPS] = v.v_eps
        p[kernels.P_CX] = t.c_x
        p[kernels.P_CY] = t.c_y
        p[kernels.P_SCLAMP] = t.s_clamp
        p[kernels.P_SLIPEPS] = t.slip_eps
        p[kernels.P_GMODE] = t.g_mode
        p[kernels.P_RF] = w.radius_f
        p[kernels.P_RR] = w.radius_r
        p[kernels.P_IF] = w.inertia_f
        p[kernels.P_IR] = w.inertia_r
        p[kernels.P_VSLIPEPS] = w.v_slip_eps
        p[kernels.P_OMEGAEPS] = w.omega_eps
        p[kernels.P_MU] = self.mu
        p[kernels.P_FZF], p[kernels.P_FZR] = vertical_loads(v)
        return p

    def derivative(self, x: np.ndarray, u) -> np.ndarray:
        out = np.empty(kernels.N_STATE)
        kernels.derivative(np.asarray(x, dtype=float), _control_array(u), self.params, out)
        return out

    def integrate(self, x: np.ndarray, u, dt: float, n_steps: int,
                  method: str = "rk4", t0: float = 0.0) -> np.ndarray:
        """Advance ``x`` in place; raises :class:`SimulationFault` on divergence."""
        done = kernels.integrate(x, _control_array(u), self.params, dt, n_steps,
                                 INTEGRATORS[method])
        if done < n_steps:
            raise SimulationFault(
                f"non-finite state after {done} of {n_steps} substeps",
                last_state=x.copy(), time=t0 + done * dt)
        return x


def _control_array(u) -> np.ndarray:
    if isinstance(u, ControlInput):
        return np.array(u.as_vector(), dtype=float)
    return np.asarray(u, dtype=float)


def composed_derivative(model: VehicleModel, state: FullState, u: ControlInput):
    """Derivative of the full state assembled from the public operations.

    Only valid above ``v_eps``; the low-speed mode exists in the kernel
    only.
    """
    vp, tp, wp = model.vehicle, model.tire, model.wheel
    body, wheels = state.body, state.wheels
    kin = axle_kinematics(body, u, vp)
    s_f, s_r = slip_ratio(wheels, kin, wp)
    f_zf, f_zr = vertical_loads(vp)
    f_xf, f_yf, _ = dugoff_forces(SlipState(s_f, kin.alpha_f, f_zf, model.mu), tp)
    f_xr, f_yr, _ = dugoff_forces(SlipState(s_r, kin.alpha_r, f_zr, model.mu), tp)
    forces = TireForces(f_xf, f_xr, f_yf, f_yr)
    omega_f = wheels.d_omega_f + kin.v_xf / wp.radius_f
    omega_r = wheels.d_omega_r + kin.v_xr / wp.radius_r
    torques = (u.m_f + brake_torque(omega_f, u.brake_f, wp),
               u.m_r + brake_torque(omega_r, u.brake_r, wp))
    dwf, dwr = wheel_derivative(wheels, torques, forces, wp)
    bd, vd, rd = state_derivative(body, forces, u, road_load(body, vp), vp)
    xd, yd, psid = pose_rates(body)
    return np.array([bd, vd, rd, xd, yd, psid, dwf, dwr])

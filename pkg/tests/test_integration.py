import math

import numpy as np
import pytest

from vvesim import kernels
from vvesim.dynamics import ControlInput, VehicleParams, VehicleState
from vvesim.errors import SimulationFault
from vvesim.model import FullState, VehicleModel, composed_derivative
from vvesim.wheel import WheelState

MANEUVER = ControlInput(delta_f=0.03, m_r=300.0)


def run(model, u, dt, seconds, method="rk4", v0=15.0):
    x = FullState(VehicleState(v=v0)).to_array()
    model.integrate(x, u, dt, int(round(seconds / dt)), method)
    return x


def position_error(x, ref):
    return math.hypot(x[3] - ref[3], x[4] - ref[4])


def order_ratios(method):
    model = VehicleModel()
    ref = run(model, MANEUVER, 0.0625e-3, 10.0)
    e_coarse = position_error(run(model, MANEUVER, 2e-3, 10.0, method), ref)
    e_fine = position_error(run(model, MANEUVER, 1e-3, 10.0, method), ref)
    return e_coarse / e_fine


def test_rk4_halving_step_reduces_error_at_least_4x():
    assert order_ratios("rk4") >= 4.0


def test_euler_comparator_is_first_order():
    assert order_ratios("euler") == pytest.approx(2.0, rel=0.05)


def test_kernel_matches_composed_public_operations(rng):
    model = VehicleModel()
    for _ in range(300):
        body = VehicleState(beta=rng.uniform(-0.2, 0.2), v=rng.uniform(1, 35),
                            r=rng.uniform(-0.8, 0.8), x=rng.uniform(-50, 50),
                            y=rng.uniform(-50, 50), psi=rng.uniform(-3, 3))
        st = FullState(body, WheelState(*rng.uniform(-5, 5, 2)))
        u = ControlInput(delta_f=rng.uniform(-0.4, 0.4), m_f=rng.uniform(-200, 200),
                         m_r=rng.uniform(-400, 400), brake_f=rng.uniform(0, 900),
                         brake_r=rng.uniform(0, 900), m_zd=rng.uniform(-100, 100))
        got = model.derivative(st.to_array(), u)
        want = composed_derivative(model, st, u)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-9)


def test_zero_input_cruise_conserves_speed():
    model = VehicleModel(VehicleParams(drag_coeff=0.0, roll_coeff=0.0))
    x = run(model, ControlInput(), 1e-3, 10.0)
    assert abs(x[1] - 15.0) <= 1e-9
    assert x[0] == 0.0 and x[2] == 0.0
    assert x[3] == pytest.approx(150.0, rel=1e-12)


def test_undriven_wheel_stays_synchronised_while_coasting():
    model = VehicleModel()
    x = FullState(VehicleState(v=15.0)).to_array()
    worst = 0.0
    for _ in range(10000):
        model.integrate(x, ControlInput(), 1e-3, 1)
        for dw, v in ((x[6], x[1]), (x[7], x[1])):
            s = kernels.slip_ratio(dw, v, 0.3, model.wheel.v_slip_eps)
            worst = max(worst, abs(s))
    assert worst <= 1e-6
    assert x[1] < 15.0


def test_max_brake_stops_monotonically_and_stays_stopped():
    model = VehicleModel()
    u = ControlInput(brake_f=6000.0, brake_r=5000.0)
    x = FullState(VehicleState(v=15.0)).to_array()
    speeds = []
    for _ in range(6000):
        model.integrate(x, u, 1e-3, 1)
        speeds.append(x[1])
    speeds = np.array(speeds)
    assert np.all(np.diff(speeds) <= 0.0)
    assert speeds[-1] == 0.0
    stop = int(np.argmax(speeds == 0.0))
    assert np.all(speeds[stop:] == 0.0)
    assert stop * 1e-3 < 3.0


def test_fault_carries_last_finite_state():
    model = VehicleModel()
    x = FullState(VehicleState(v=15.0)).to_array()
    u = np.array([0.0, 0.0, math.inf, 0.0, 0.0, 0.0, 0.0])
    with pytest.raises(SimulationFault) as info:
        model.integrate(x, u, 1e-3, 5, t0=2.0)
    assert np.all(np.isfinite(info.value.last_state))
    assert info.value.time == 2.0


def test_integration_is_deterministic():
    model = VehicleModel()
    a = run(model, MANEUVER, 1e-3, 3.0)
    b = run(model, MANEUVER, 1e-3, 3.0)
    assert a.tobytes() == b.tobytes()


def test_low_speed_mode_accelerates_from_rest():
    model = VehicleModel()
    x = run(model, ControlInput(m_r=400.0), 1e-3, 2.0, v0=0.0)
    assert x[1] > 0.5 and np.all(np.isfinite(x))

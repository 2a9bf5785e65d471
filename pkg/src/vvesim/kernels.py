"""Scalar numba kernels for the vehicle model.

Every equation of the vehicle model lives here exactly once. The public
dataclass API in :mod:`vvesim.dynamics`, :mod:`vvesim.tire` and
:mod:`vvesim.wheel` calls these functions, and the fixed-step integrator
below inlines them, so the slow and fast paths produce identical floats.

State vector layout (``X_*``)::

    beta, v, r, x, y, psi, d_omega_f, d_omega_r

Control vector layout (``U_*``)::

    delta_f, delta_r, m_f, m_r, brake_f, brake_r, m_zd

``m_f``/``m_r`` are signed drive torques; ``brake_f``/``brake_r`` are brake
torque magnitudes applied against the wheel spin direction.
"""

import math

import numpy as np
from numba import njit

GRAVITY = 9.81

X_BETA, X_V, X_R, X_X, X_Y, X_PSI, X_DWF, X_DWR = range(8)
N_STATE = 8

U_DF, U_DR, U_MF, U_MR, U_BF, U_BR, U_MZD = range(7)
N_CONTROL = 7

(P_M, P_LF, P_LR, P_IZ, P_DRAG, P_ROLL, P_VEPS,
 P_CX, P_CY, P_SCLAMP, P_SLIPEPS, P_GMODE,
 P_RF, P_RR, P_IF, P_IR, P_VSLIPEPS, P_OMEGAEPS,
 P_MU, P_FZF, P_FZR) = range(21)
N_PARAM = 21

GMODE_SYMMETRIC = 0
GMODE_LITERAL = 1

METHOD_EULER = 0
METHOD_RK4 = 1


@njit(cache=True)
def road_load(v, m, drag_coeff, roll_coeff):
    return drag_coeff * v * v + roll_coeff * m * GRAVITY


@njit(cache=True)
def axle_kinematics(beta, v, r, l_f, l_r, delta_f, delta_r):
    """Return (v_f, v_r, beta_f, beta_r, alpha_f, alpha_r, v_xf, v_xr)."""
    vx = v * math.cos(beta)
    vy = v * math.sin(beta)
    vfy = vy + l_f * r
    vry = vy - l_r * r
    beta_f = math.atan2(vfy, vx)
    beta_r = math.atan2(vry, vx)
    v_f = math.sqrt(vx * vx + vfy * vfy)
    v_r = math.sqrt(vx * vx + vry * vry)
    alpha_f = delta_f - beta_f
    alpha_r = delta_r - beta_r
    return (v_f, v_r, beta_f, beta_r, alpha_f, alpha_r,
            v_f * math.cos(alpha_f), v_r * math.cos(alpha_r))


@njit(cache=True)
def resultant_loads(f_xf, f_xr, f_yf, f_yr, delta_f, delta_r, l_f, l_r,
                    f_load, m_zd):
    cf = math.cos(delta_f)
    sf = math.sin(delta_f)
    cr = math.cos(delta_r)
    sr = math.sin(delta_r)
    sum_fx = cf * f_xf + cr * f_xr - sf * f_yf - sr * f_yr - f_load
    sum_fy = sf * f_xf + sr * f_xr + cf * f_yf + cr * f_yr
    sum_mz = (l_f * sf * f_xf - l_r * sr * f_xr
              + l_f * cf * f_yf - l_r * cr * f_yr + m_zd)
    return sum_fx, sum_fy, sum_mz


@njit(cache=True)
def body_derivative(beta, v, r, f_xf, f_xr, f_yf, f_yr, delta_f, delta_r,
                    f_load, m_zd, m, l_f, l_r, i_z):
    """Extended single-track equations of motion (valid for v > 0)."""
    af = delta_f - beta
    ar = delta_r - beta
    saf = math.sin(af)
    caf = math.cos(af)
    sar = math.sin(ar)
    car = math.cos(ar)
    sb = math.sin(beta)
    cb = math.cos(beta)
    mv = m * v
    beta_dot = ((saf * f_xf + sar * f_xr + caf * f_yf + car * f_yr) / mv
                + (-sb * -f_load) / mv - r)
    v_dot = ((caf * f_xf + car * f_xr - saf * f_yf - sar * f_yr) / m
             + (cb * -f_load) / m)
    r_dot = ((l_f * math.sin(delta_f) * f_xf - l_r * math.sin(delta_r) * f_xr
              + l_f * math.cos(delta_f) * f_yf - l_r * math.cos(delta_r) * f_yr)
             / i_z + m_zd / i_z)
    return beta_dot, v_dot, r_dot


@njit(cache=True)
def dugoff(s, alpha, f_z, mu, c_x, c_y, s_clamp, slip_eps, g_mode):
    """Modified Dugoff combined-slip forces.

    Returns ``(f_x, f_y, z, f_of_z, g_x, g_y)``. In the symmetric mode the
    correction factors and the ``1 - s`` terms use ``|s|`` so braking mirrors
    traction; the literal mode evaluates the printed formula with signed
    slip.
    """
    if s > s_clamp:
        s = s_clamp
    elif s < -s_clamp:
        s = -s_clamp
    tan_a = math.tan(alpha)
    denom = math.sqrt((c_x * s) ** 2 + (c_y * tan_a) ** 2)
    if denom < slip_eps * mu * f_z or denom == 0.0:
        return 0.0, 0.0, math.inf, 1.0, 1.5, 1.5
    if g_mode == GMODE_SYMMETRIC:
        s_mag = abs(s)
        t_mag = abs(tan_a)
    else:
        s_mag = s
        t_mag = tan_a
    one_minus = 1.0 - s_mag
    z = mu * f_z * one_minus / (2.0 * denom)
    if z < 1.0:
        f_z_fac = z * (2.0 - z)
        if f_z_fac <= 0.0:
            # unloaded tire (or a load so small the factor underflows)
            return 0.0, 0.0, math.inf, 1.0, 1.5, 1.5
    else:
        f_z_fac = 1.0
    g_x = (1.15 - 0.75 * mu) * s_mag * s_mag - (1.63 - 0.75 * mu) * s_mag + 1.5
    g_y = (mu - 1.6) * t_mag + 1.5
    f_x = c_x * s / one_minus * f_z_fac * g_x
    f_y = c_y * tan_a / one_minus * f_z_fac * g_y
    return f_x, f_y, z, f_z_fac, g_x, g_y


@njit(cache=True)
def slip_ratio(d_omega, v_x, radius, v_slip_eps):
    omega_r = (d_omega + v_x / radius) * radius
    den = max(abs(omega_r), abs(v_x), v_slip_eps)
    s = d_omega * radius / den
    if s > 1.0:
        return 1.0
    if s < -1.0:
        return -1.0
    return s


@njit(cache=True)
def brake_torque(omega, brake, omega_eps):
    # opposes spin; fades linearly to zero inside |omega| < omega_eps
    ratio = omega / omega_eps
    if ratio > 1.0:
        ratio = 1.0
    elif ratio < -1.0:
        ratio = -1.0
    return -brake * ratio


@njit(cache=True)
def derivative(x, u, p, out):
    beta = x[X_BETA]
    v = x[X_V]
    r = x[X_R]
    psi = x[X_PSI]
    dwf = x[X_DWF]
    dwr = x[X_DWR]
    delta_f = u[U_DF]
    delta_r = u[U_DR]
    m = p[P_M]
    l_f = p[P_LF]
    l_r = p[P_LR]
    i_z = p[P_IZ]
    rad_f = p[P_RF]
    rad_r = p[P_RR]

    (v_f, v_r, beta_f, beta_r, alpha_f, alpha_r,
     v_xf, v_xr) = axle_kinematics(beta, v, r, l_f, l_r, delta_f, delta_r)

    s_f = slip_ratio(dwf, v_xf, rad_f, p[P_VSLIPEPS])
    s_r = slip_ratio(dwr, v_xr, rad_r, p[P_VSLIPEPS])
    g_mode = int(p[P_GMODE])
    res_f = dugoff(s_f, alpha_f, p[P_FZF], p[P_MU], p[P_CX], p[P_CY],
                   p[P_SCLAMP], p[P_SLIPEPS], g_mode)
    res_r = dugoff(s_r, alpha_r, p[P_FZR], p[P_MU], p[P_CX], p[P_CY],
                   p[P_SCLAMP], p[P_SLIPEPS], g_mode)
    f_xf = res_f[0]
    f_yf = res_f[1]
    f_xr = res_r[0]
    f_yr = res_r[1]

    omega_f = dwf + v_xf / rad_f
    omega_r = dwr + v_xr / rad_r
    m_f = u[U_MF] + brake_torque(omega_f, u[U_BF], p[P_OMEGAEPS])
    m_r = u[U_MR] + brake_torque(omega_r, u[U_BR], p[P_OMEGAEPS])
    out[X_DWF] = (m_f - f_xf * rad_f) / p[P_IF]
    out[X_DWR] = (m_r - f_xr * rad_r) / p[P_IR]

    f_load = road_load(v, m, p[P_DRAG], p[P_ROLL])
    m_zd = u[U_MZD]
    if v >= p[P_VEPS]:
        bd, vd, rd = body_derivative(beta, v, r, f_xf, f_xr, f_yf, f_yr,
                                     delta_f, delta_r, f_load, m_zd,
                                     m, l_f, l_r, i_z)
    else:
        # low-speed mode: no side-slip evolution, yaw from disturbance only
        sfx, sfy, _ = resultant_loads(f_xf, f_xr, f_yf, f_yr, delta_f,
                                      delta_r, l_f, l_r, f_load, m_zd)
        bd = 0.0
        vd = (math.cos(beta) * sfx + math.sin(beta) * sfy) / m
        rd = m_zd / i_z
        if v <= 0.0 and vd < 0.0:
            vd = 0.0
    out[X_BETA] = bd
    out[X_V] = vd
    out[X_R] = rd
    out[X_X] = v * math.cos(psi + beta)
    out[X_Y] = v * math.sin(psi + beta)
    out[X_PSI] = r


@njit(cache=True)
def _all_finite(x):
    for i in range(x.shape[0]):
        if not math.isfinite(x[i]):
            return False
    return True


@njit(cache=True)
def integrate(x, u, p, dt, n_steps, method):
    """Advance ``x`` in place by ``n_steps`` fixed steps of size ``dt``.

    Returns the number of completed substeps. A value smaller than
    ``n_steps`` means the next substep produced a non-finite state; ``x``
    then still holds the last finite state.
    """
    n = x.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)
    nxt = np.empty(n)
    for step in range(n_steps):
        if method == METHOD_EULER:
            derivative(x, u, p, k1)
            for i in range(n):
                nxt[i] = x[i] + dt * k1[i]
        else:
            derivative(x, u, p, k1)
            for i in range(n):
                tmp[i] = x[i] + 0.5 * dt * k1[i]
            derivative(tmp, u, p, k2)
            for i in range(n):
                tmp[i] = x[i] + 0.5 * dt * k2[i]
            derivative(tmp, u, p, k3)
            for i in range(n):
                tmp[i] = x[i] + dt * k3[i]
            derivative(tmp, u, p, k4)
            for i in range(n):
                nxt[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        if nxt[X_V] < 0.0:
            nxt[X_V] = 0.0
        if not _all_finite(nxt):
            return step
        for i in range(n):
            x[i] = nxt[i]
    return n_steps

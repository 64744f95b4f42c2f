"""Continuous-time physics of a PMSM-driven linear actuator.

The model lives in the rotating d-q frame. The mechanical chain
(gearbox + ball screw) is folded into four equivalent parameters so the
whole actuator reduces to a 4-state system

    x = [x_L, dx_L/dt, i_q, i_d]

with the torque balance

    tau_m = A_eq * x2' + B_eq * x2 + C_eq * x1 + D_eq * F_L.

The flux torque term uses the commanded q-current by default; pass
``flux_from_state=True`` to substitute the measured current instead.
"""

from __future__ import annotations

import math

import numpy as np

from .params import EmlaParams, EquivalentParams, JointState, MotorInputs

_TWO_THIRDS = 2.0 / 3.0
_SHIFT = 2.0 * math.pi / 3.0


def _check_finite(values, where):
    for v in values:
        if not math.isfinite(v):
            raise ValueError(f"non-finite input to {where}")


def park_abc_to_dq(u_abc, angle: float):
    """Project 3-phase quantities onto the rotating d-q-0 frame.

    Args:
        u_abc: sequence of the three phase values.
        angle: electrical angle (rad).

    Returns:
        (u_d, u_q, u_0) tuple.
    """
    a, b, c = float(u_abc[0]), float(u_abc[1]), float(u_abc[2])
    _check_finite((a, b, c, angle), "park_abc_to_dq")
    ca, cb, cc = (math.cos(angle), math.cos(angle - _SHIFT),
                  math.cos(angle + _SHIFT))
    sa, sb, sc = (math.sin(angle), math.sin(angle - _SHIFT),
                  math.sin(angle + _SHIFT))
    u_d = _TWO_THIRDS * (ca * a + cb * b + cc * c)
    u_q = _TWO_THIRDS * (-sa * a - sb * b - sc * c)
    u_0 = _TWO_THIRDS * 0.5 * (a + b + c)
    return (u_d, u_q, u_0)


def park_dq_to_abc(u_dq0, angle: float):
    """Inverse projection back to phase quantities.

    Exact inverse of `park_abc_to_dq`: the round trip is the identity to
    floating-point precision for any angle.
    """
    d, q, z = float(u_dq0[0]), float(u_dq0[1]), float(u_dq0[2])
    _check_finite((d, q, z, angle), "park_dq_to_abc")
    ca, cb, cc = (math.cos(angle), math.cos(angle - _SHIFT),
                  math.cos(angle + _SHIFT))
    sa, sb, sc = (math.sin(angle), math.sin(angle - _SHIFT),
                  math.sin(angle + _SHIFT))
    a = ca * d - sa * q + z
    b = cb * d - sb * q + z
    c = cc * d - sc * q + z
    return (a, b, c)


def electrical_angle(x_l: float, p: EmlaParams, eq: EquivalentParams) -> float:
    """Electrical angle from linear position: N_p * alpha_rl * x_L."""
    return p.n_p * eq.alpha_rl * x_l


def equivalent_params(p: EmlaParams) -> EquivalentParams:
    """Fold gearbox, screw and stiffness chain into equivalent terms.

    alpha_rl = 2*pi/(rho*lead); the stiffness chain combines three
    rotational springs (the third reflected through the gear ratio) with
    the series linear stiffness k_l reflected by alpha_rl^2.
    """
    alpha = 2.0 * math.pi / (p.rho * p.lead)
    a_eq = alpha * (p.j_m + p.j_c + p.j_gb + p.m_bs / alpha**2)
    b_eq = alpha * (p.b_m + p.b_bs / alpha**2)
    k_l = 1.0 / (1.0 / p.k_bearing + 1.0 / p.k_screw
                 + 1.0 / p.k_nut + 1.0 / p.k_tube)
    compliance = (1.0 / p.k_tau1 + 1.0 / p.k_tau2
                  + 1.0 / (p.rho**2 * p.k_tau3) + alpha**2 / k_l)
    c_eq = alpha**2 / compliance
    d_eq = 1.0 / (alpha * p.eta_gb)
    return EquivalentParams(alpha_rl=alpha, a_eq=a_eq, b_eq=b_eq,
                            c_eq=c_eq, d_eq=d_eq, k_l=k_l)


def electromagnetic_torque(i_q: float, i_d: float, p: EmlaParams) -> float:
    """tau = 1.5 * N_p * (i_q * (i_d * L_d + phi) - i_d * i_q * L_q)."""
    _check_finite((i_q, i_d), "electromagnetic_torque")
    return 1.5 * p.n_p * (i_q * (i_d * p.l_d + p.phi_pm) - i_d * i_q * p.l_q)


def desired_q_current(tau_ref: float, p: EmlaParams) -> float:
    """Invert the flux torque term; the d-axis reference is always 0."""
    return tau_ref / (1.5 * p.n_p * p.phi_pm)


# Subsystem drift terms shared with the controller decomposition.  The
# closed-loop reconstruction test relies on these exact expressions, so
# the derivative below is written in terms of them.

def g2_term(x1, x2, x3, x4, p: EmlaParams, eq: EquivalentParams) -> float:
    return (1.5 * p.n_p * (x3 * x4 * p.l_d - x3 * x4 * p.l_q)
            - eq.b_eq * x2 - eq.c_eq * x1) / eq.a_eq


def g3_term(x2, x3, x4, p: EmlaParams, eq: EquivalentParams) -> float:
    return (-p.r_s * x3
            - p.n_p * eq.alpha_rl * x2 * (x4 * p.l_d + p.phi_pm)) / p.l_q


def g4_term(x2, x3, x4, p: EmlaParams, eq: EquivalentParams) -> float:
    return (-p.r_s * x4 + p.n_p * eq.alpha_rl * x2 * x3 * p.l_q) / p.l_d


def state_derivative(x: JointState, u: MotorInputs, f_load: float,
                     p: EmlaParams, eq: EquivalentParams,
                     extra=(0.0, 0.0, 0.0, 0.0),
                     flux_from_state: bool = False) -> np.ndarray:
    """Right-hand side of the 4-state model.

    Args:
        x: current state.
        u: voltage commands and the q-current command.
        f_load: external load force (N), entering as -D_eq*F_L/A_eq.
        extra: additive per-subsystem terms (uncertainty + disturbance),
            already expressed in state-derivative units.
        flux_from_state: replace the commanded i_q by the state x3 in
            the flux torque term.

    Returns:
        ndarray (4,) of state derivatives.

    Raises:
        ValueError: if any component of the result is non-finite, naming
            the subsystem index.
    """
    x1, x2, x3, x4 = x.as_tuple()
    flux_current = x3 if flux_from_state else u.i_q_ref
    a2 = 1.5 * p.n_p * p.phi_pm / eq.a_eq
    d1 = x2 + extra[0]
    d2 = (a2 * flux_current + g2_term(x1, x2, x3, x4, p, eq)
          - eq.d_eq * f_load / eq.a_eq + extra[1])
    d3 = u.u_q / p.l_q + g3_term(x2, x3, x4, p, eq) + extra[2]
    d4 = u.u_d / p.l_d + g4_term(x2, x3, x4, p, eq) + extra[3]
    out = np.array([d1, d2, d3, d4])
    for i in range(4):
        if not math.isfinite(out[i]):
            raise ValueError(f"non-finite derivative in subsystem {i + 1}")
    return out

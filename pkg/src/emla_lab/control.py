"""Modular adaptive backstepping controller for one actuator joint.

The 4-state model splits into a chain of scalar subsystems
x_i' = A_i u_i + g_i + (uncertain terms); each gets a tracking variable
P_i, an adapted gain theta_hat_i and a damping control. Subsystem 1 is
virtual (its "control" is the velocity profile a_1), subsystem 2 issues
the q-axis current command, subsystems 3 and 4 the q/d voltages. The
cross coupling between subsystems 1 and 2 is cancelled by the -A1/A2*P1
term, which is what makes the pieces composable.

The controller consumes only the observer estimate (x1_hat, x2_hat) and
the measured currents; no channel exists for the true motion states.
Nothing in here differentiates a signal numerically: the delivered
current command doubles as the next step's current reference, so no
derivative of a_1 is ever needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import g2_term, g3_term, g4_term
from .params import EmlaParams, EquivalentParams, MotorInputs

SAT_IQ = 1  # current command clipped
SAT_UQ = 2  # q-axis voltage clipped
SAT_UD = 4  # d-axis voltage clipped


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class RsbaGains:
    beta: np.ndarray
    zeta: np.ndarray
    delta: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        for name in ("beta", "zeta", "delta", "sigma"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(4)
            if np.any(v <= 0.0):
                raise ValueError(f"{name} must be strictly positive")
            setattr(self, name, v)


def _gains(b12, b34, z12, z34, d12, d34, s12, s34):
    return RsbaGains(beta=[b12, b12, b34, b34], zeta=[z12, z12, z34, z34],
                     delta=[d12, d12, d34, d34],
                     sigma=[s12, s12, s34, s34])


GAIN_SETS = {
    "lift": _gains(3000.0, 1000.0, 100.0, 100.0, 100.0, 110.0, 1e-3, 1e-2),
    "tilt": _gains(2000.0, 750.0, 100.0, 80.0, 100.0, 80.0, 1e-3, 1e-2),
    "telescope": _gains(800.0, 420.0, 1e-3, 1.0, 1.0, 0.5, 1.0, 1.0),
}


@dataclass
class ControlLimits:
    """Physical output caps. None disables the respective clamp."""
    i_q_max: float | None = None
    u_max: float | None = None

    def __post_init__(self):
        if self.i_q_max is not None and self.i_q_max <= 0.0:
            raise ValueError("i_q_max must be > 0")
        if self.u_max is not None and self.u_max <= 0.0:
            raise ValueError("u_max must be > 0")


@dataclass
class ControllerState:
    theta_hat: np.ndarray = field(default_factory=lambda: np.zeros(4))
    p_track: np.ndarray = field(default_factory=lambda: np.zeros(4))
    a1: float = 0.0
    iq_ref_prev: float = 0.0
    sat_flags: int = 0

    def __post_init__(self):
        self.theta_hat = np.asarray(self.theta_hat, dtype=float).reshape(4)
        self.p_track = np.asarray(self.p_track, dtype=float).reshape(4)
        if np.any(self.theta_hat < 0.0):
            raise ValueError("theta_hat must be initialized >= 0")


@dataclass
class SubsystemDecomposition:
    a_coef: np.ndarray
    g_vals: np.ndarray

    def __post_init__(self):
        self.a_coef = np.asarray(self.a_coef, dtype=float).reshape(4)
        self.g_vals = np.asarray(self.g_vals, dtype=float).reshape(4)
        if np.any(self.a_coef == 0.0):
            raise ValueError("subsystem coefficients must be nonzero")


# ---------------------------------------------------------------------------
# pieces
# ---------------------------------------------------------------------------

def decompose(x_for_control, eq: EquivalentParams,
              p: EmlaParams) -> SubsystemDecomposition:
    """Chain coefficients A_1..A_4 and drifts g_1..g_4 at one state.

    x_for_control = (x1_hat, x2_hat, i_q, i_d): estimated motion pair
    plus measured currents.
    """
    x1, x2, x3, x4 = (float(v) for v in x_for_control)
    a2 = 1.5 * p.n_p * p.phi_pm / eq.a_eq
    a_coef = np.array([1.0, a2, 1.0 / p.l_q, 1.0 / p.l_d])
    g_vals = np.array([
        0.0,
        g2_term(x1, x2, x3, x4, p, eq),
        g3_term(x2, x3, x4, p, eq),
        g4_term(x2, x3, x4, p, eq),
    ])
    return SubsystemDecomposition(a_coef=a_coef, g_vals=g_vals)


def tracking_transform(x_for_control, x_ref, a1: float) -> np.ndarray:
    """P_i = x_i - x_id, with the virtual control folded into P_2."""
    x = np.asarray(x_for_control, dtype=float).reshape(4)
    r = np.asarray(x_ref, dtype=float).reshape(4)
    p = x - r
    p[1] -= a1
    return p


def virtual_control(p1: float, theta_hat_1: float, x_2d: float, g1: float,
                    a_coef_1: float, gains: RsbaGains,
                    ref_sign: float = -1.0) -> float:
    """Velocity-shaped virtual input for the position subsystem.

    ref_sign scales the x_2d feed: -1.0 follows the published law
    verbatim, +1.0 turns the term into a conventional feed-forward.
    """
    if a_coef_1 == 0.0:
        raise ValueError("a_coef_1 must be nonzero")
    damping = -(1.0 / (2.0 * a_coef_1)) \
        * (gains.beta[0] + gains.zeta[0] * theta_hat_1) * p1
    return damping + ref_sign * x_2d - g1 / a_coef_1


def adaptation_step(theta_hat_i: float, p_i: float, delta_i: float,
                    zeta_i: float, sigma_i: float, dt: float) -> float:
    """One RK4 step of the leakage + error-driven gain adaptation."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    drive = 0.5 * zeta_i * delta_i * p_i * p_i  # P held over the step
    decay = delta_i * sigma_i

    def rate(th):
        return -decay * th + drive

    k1 = rate(theta_hat_i)
    k2 = rate(theta_hat_i + 0.5 * dt * k1)
    k3 = rate(theta_hat_i + 0.5 * dt * k2)
    k4 = rate(theta_hat_i + dt * k3)
    out = theta_hat_i + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return max(out, 0.0)


@dataclass
class ControlSignals:
    u1: float      # = P_2, the virtual input seen by subsystem 1
    iq_ref: float
    uq: float
    ud: float
    sat_flags: int = 0


def _damped(a_i, beta_i, zeta_i, th_i, p_i, g_i):
    # shared modular block: damping plus drift inversion
    return -(1.0 / (2.0 * a_i)) * (beta_i + zeta_i * th_i) * p_i - g_i / a_i


def control_signals(d: SubsystemDecomposition, p_track, theta_hat,
                    gains: RsbaGains,
                    limits: ControlLimits | None = None) -> ControlSignals:
    """Physical commands via the modular blocks plus the coupling term."""
    a = d.a_coef
    g = d.g_vals
    p = np.asarray(p_track, dtype=float)
    th = np.asarray(theta_hat, dtype=float)
    w2 = _damped(a[1], gains.beta[1], gains.zeta[1], th[1], p[1], g[1])
    w3 = _damped(a[2], gains.beta[2], gains.zeta[2], th[2], p[2], g[2])
    w4 = _damped(a[3], gains.beta[3], gains.zeta[3], th[3], p[3], g[3])
    iq_ref = w2 - (a[0] / a[1]) * p[0]
    uq, ud = w3, w4
    flags = 0
    if limits is not None:
        if limits.i_q_max is not None and abs(iq_ref) > limits.i_q_max:
            iq_ref = math.copysign(limits.i_q_max, iq_ref)
            flags |= SAT_IQ
        if limits.u_max is not None and abs(uq) > limits.u_max:
            uq = math.copysign(limits.u_max, uq)
            flags |= SAT_UQ
        if limits.u_max is not None and abs(ud) > limits.u_max:
            ud = math.copysign(limits.u_max, ud)
            flags |= SAT_UD
    return ControlSignals(u1=float(p[1]), iq_ref=float(iq_ref),
                          uq=float(uq), ud=float(ud), sat_flags=flags)


def control_signals_direct(d: SubsystemDecomposition, p_track, theta_hat,
                           gains: RsbaGains) -> ControlSignals:
    """Single-expression form of the same law, no saturation.

    Kept as an independent spelling so the modular composition can be
    checked against it bit for bit.
    """
    a = d.a_coef
    g = d.g_vals
    p = np.asarray(p_track, dtype=float)
    th = np.asarray(theta_hat, dtype=float)
    iq_ref = (-(1.0 / (2.0 * a[1])) * (gains.beta[1] + gains.zeta[1] * th[1])
              * p[1] - g[1] / a[1]) - (a[0] / a[1]) * p[0]
    uq = -(1.0 / (2.0 * a[2])) * (gains.beta[2] + gains.zeta[2] * th[2]) \
        * p[2] - g[2] / a[2]
    ud = -(1.0 / (2.0 * a[3])) * (gains.beta[3] + gains.zeta[3] * th[3]) \
        * p[3] - g[3] / a[3]
    return ControlSignals(u1=float(p[1]), iq_ref=float(iq_ref),
                          uq=float(uq), ud=float(ud), sat_flags=0)


def cancellation_terms(d: SubsystemDecomposition, p_track):
    """The two halves of the subsystem-1/2 coupling, as implemented.

    First value: cross power injected into subsystem 1 by using P_2 as
    its input. Second: cross power added to subsystem 2 by the
    -(A1/A2)*P1 component of the current command. Their sum vanishes.
    """
    a = d.a_coef
    p = np.asarray(p_track, dtype=float)
    s1 = a[0] * p[0] * p[1]
    s1_prime = p[1] * (a[1] * (-(a[0] / a[1]) * p[0]))
    return s1, s1_prime


# ---------------------------------------------------------------------------
# full step
# ---------------------------------------------------------------------------

def controller_step(x_for_control, refs, s: ControllerState,
                    p: EmlaParams, eq: EquivalentParams, gains: RsbaGains,
                    dt: float, limits: ControlLimits | None = None,
                    a1_ref_sign: float = -1.0):
    """One sequential pass over the four subsystems.

    refs = (x_1d, x_2d). The current reference x_3d is the previous
    step's delivered (post-saturation) i_q*; x_4d = 0. Adaptation of a
    subsystem is skipped while its output was clipped on the previous
    step, which keeps theta_hat from winding up against the limits.
    Returns (new ControllerState, MotorInputs).
    """
    x = np.asarray(x_for_control, dtype=float).reshape(4)
    x_1d, x_2d = float(refs[0]), float(refs[1])
    d = decompose(x, eq, p)
    th = s.theta_hat.copy()
    frozen_12 = bool(s.sat_flags & SAT_IQ)
    frozen_3 = bool(s.sat_flags & SAT_UQ)
    frozen_4 = bool(s.sat_flags & SAT_UD)

    p1 = x[0] - x_1d
    if not frozen_12:
        th[0] = adaptation_step(th[0], p1, gains.delta[0], gains.zeta[0],
                                gains.sigma[0], dt)
    a1 = virtual_control(p1, th[0], x_2d, d.g_vals[0], d.a_coef[0], gains,
                         ref_sign=a1_ref_sign)
    x_ref = (x_1d, x_2d, s.iq_ref_prev, 0.0)
    p_track = tracking_transform(x, x_ref, a1)
    if not frozen_12:
        th[1] = adaptation_step(th[1], p_track[1], gains.delta[1],
                                gains.zeta[1], gains.sigma[1], dt)
    if not frozen_3:
        th[2] = adaptation_step(th[2], p_track[2], gains.delta[2],
                                gains.zeta[2], gains.sigma[2], dt)
    if not frozen_4:
        th[3] = adaptation_step(th[3], p_track[3], gains.delta[3],
                                gains.zeta[3], gains.sigma[3], dt)
    sig = control_signals(d, p_track, th, gains, limits)
    new_state = ControllerState(theta_hat=th, p_track=p_track, a1=a1,
                                iq_ref_prev=sig.iq_ref,
                                sat_flags=sig.sat_flags)
    inputs = MotorInputs(u_q=sig.uq, u_d=sig.ud, i_q_ref=sig.iq_ref)
    return new_state, inputs


# ---------------------------------------------------------------------------
# plain PI fallback (not part of the published design; sanity rig only)
# ---------------------------------------------------------------------------

@dataclass
class PiController:
    """Textbook cascaded PI: position -> current -> voltage.

    Exists purely as a contrast harness for the adaptive controller.
    """

    kp_pos: float = 400.0
    ki_pos: float = 40.0
    kp_cur: float = 4.0
    ki_cur: float = 2000.0
    int_pos: float = 0.0
    int_iq: float = 0.0
    int_id: float = 0.0
    iq_ref_prev: float = 0.0
    sat_flags: int = 0

    def step(self, x_for_control, refs, dt: float,
             limits: ControlLimits | None = None) -> MotorInputs:
        x = np.asarray(x_for_control, dtype=float).reshape(4)
        err = float(refs[0]) - x[0]
        if not (self.sat_flags & SAT_IQ):
            self.int_pos += err * dt
        iq_ref = self.kp_pos * err + self.ki_pos * self.int_pos
        flags = 0
        if limits is not None and limits.i_q_max is not None \
                and abs(iq_ref) > limits.i_q_max:
            iq_ref = math.copysign(limits.i_q_max, iq_ref)
            flags |= SAT_IQ
        eq_err = iq_ref - x[2]
        ed_err = 0.0 - x[3]
        if not (self.sat_flags & SAT_UQ):
            self.int_iq += eq_err * dt
        if not (self.sat_flags & SAT_UD):
            self.int_id += ed_err * dt
        uq = self.kp_cur * eq_err + self.ki_cur * self.int_iq
        ud = self.kp_cur * ed_err + self.ki_cur * self.int_id
        if limits is not None and limits.u_max is not None:
            if abs(uq) > limits.u_max:
                uq = math.copysign(limits.u_max, uq)
                flags |= SAT_UQ
            if abs(ud) > limits.u_max:
                ud = math.copysign(limits.u_max, ud)
                flags |= SAT_UD
        self.sat_flags = flags
        self.iq_ref_prev = iq_ref
        return MotorInputs(u_q=float(uq), u_d=float(ud),
                           i_q_ref=float(iq_ref))

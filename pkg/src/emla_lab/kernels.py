"""Hot numerical core of the closed-loop simulation.

A single flat function advances plant, observer, controller and gain
adaptation through every step and writes the trace rows.  It mirrors
the reference implementations in model.py / observer.py / control.py
expression by expression so the two spellings agree to rounding; the
unit tests hold them together.

When numba is importable (and not disabled by setting EMLA_LAB_NUMBA to
0/off/false/no) the loop is jit-compiled; otherwise the same Python
function runs as-is, slower but with identical semantics.
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba as _numba
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - environment without numba
    _numba = None
    _HAVE_NUMBA = False


def numba_requested() -> bool:
    flag = os.environ.get("EMLA_LAB_NUMBA", "").strip().lower()
    if flag in ("0", "off", "false", "no"):
        return False
    return _HAVE_NUMBA


# packed physical parameters
PP_NP, PP_PHI, PP_RS, PP_LD, PP_LQ, PP_AEQ, PP_BEQ, PP_CEQ, PP_DEQ, \
    PP_ARL = range(10)
PP_SIZE = 10

# packed observer parameters
OB_ALPHA0, OB_ALPHA1, OB_PICT0, OB_PICT1, OB_ELL, OB_M0, OB_MLAM, \
    OB_MODEL_TERMS, OB_FEED_LOAD, OB_IQ_MEASURED = range(10)
OB_SIZE = 10

# packed controller parameters: beta[0:4], zeta[4:8], delta[8:12],
# sigma[12:16], then the caps and the reference-feed sign
CT_BETA, CT_ZETA, CT_DELTA, CT_SIGMA = 0, 4, 8, 12
CT_IQ_MAX, CT_U_MAX, CT_REF_SIGN = 16, 17, 18
CT_SIZE = 19

N_COLS = 32  # trace row width; names live in sim.TRACE_COLUMNS

_ETA_FLOOR = 1e-12


def _simulate_loop(n_steps, dt, pp, ob, ct, x_init, xhat_init, eta_init,
                   th_init, x1d, x2d, dist_time, atan_amp, dist_coef,
                   unc_scale, f_load_arr, noise_arr, guard, stride, out):
    """Run the closed loop for n_steps; returns (status, rows, stop_step).

    status 0 = completed, 1 = diverged at stop_step (trace rows up to
    and including that step are valid).  Rows are written every
    `stride` steps.  All inputs are plain float64 arrays; disturbance
    channels arrive pre-split into a time-only part (native units) and
    an arctan(x2) coefficient, the only state-dependent form used, plus
    one conversion factor per channel from native units to that state
    row (the trace logs the native values).
    """
    np_ = pp[PP_NP]
    phi = pp[PP_PHI]
    rs = pp[PP_RS]
    ld = pp[PP_LD]
    lq = pp[PP_LQ]
    aeq = pp[PP_AEQ]
    beq = pp[PP_BEQ]
    ceq = pp[PP_CEQ]
    deq = pp[PP_DEQ]
    arl = pp[PP_ARL]
    a2 = 1.5 * np_ * phi / aeq
    a3 = 1.0 / lq
    a4 = 1.0 / ld

    alpha0 = ob[OB_ALPHA0]
    alpha1 = ob[OB_ALPHA1]
    pict0 = ob[OB_PICT0]
    pict1 = ob[OB_PICT1]
    ell = ob[OB_ELL]
    m0 = ob[OB_M0]
    mlam = ob[OB_MLAM]
    model_terms = ob[OB_MODEL_TERMS] != 0.0
    feed_load = ob[OB_FEED_LOAD] != 0.0
    iq_measured = ob[OB_IQ_MEASURED] != 0.0

    b1 = ct[CT_BETA + 0]
    b2 = ct[CT_BETA + 1]
    b3 = ct[CT_BETA + 2]
    b4 = ct[CT_BETA + 3]
    z1 = ct[CT_ZETA + 0]
    z2 = ct[CT_ZETA + 1]
    z3 = ct[CT_ZETA + 2]
    z4 = ct[CT_ZETA + 3]
    de1 = ct[CT_DELTA + 0]
    de2 = ct[CT_DELTA + 1]
    de3 = ct[CT_DELTA + 2]
    de4 = ct[CT_DELTA + 3]
    sg1 = ct[CT_SIGMA + 0]
    sg2 = ct[CT_SIGMA + 1]
    sg3 = ct[CT_SIGMA + 2]
    sg4 = ct[CT_SIGMA + 3]
    iq_max = ct[CT_IQ_MAX]
    u_max = ct[CT_U_MAX]
    ref_sign = ct[CT_REF_SIGN]
    us1 = unc_scale[0]
    us2 = unc_scale[1]
    us3 = unc_scale[2]
    us4 = unc_scale[3]
    dc1 = dist_coef[0]
    dc2 = dist_coef[1]
    dc3 = dist_coef[2]
    dc4 = dist_coef[3]

    x1 = x_init[0]
    x2 = x_init[1]
    x3 = x_init[2]
    x4 = x_init[3]
    xh1 = xhat_init[0]
    xh2 = xhat_init[1]
    eta = eta_init
    th1 = th_init[0]
    th2 = th_init[1]
    th3 = th_init[2]
    th4 = th_init[3]
    iq_prev = 0.0
    sat = 0

    sixth = dt / 6.0
    rows = 0
    status = 0
    stop_step = n_steps

    for k in range(n_steps):
        t = k * dt

        at = math.atan(x2)
        d1n = dist_time[0, k] + atan_amp[0, k] * at
        d2n = dist_time[1, k] + atan_amp[1, k] * at
        d3n = dist_time[2, k] + atan_amp[2, k] * at
        d4n = dist_time[3, k] + atan_amp[3, k] * at
        fl = f_load_arr[k]
        y = x1 + noise_arr[k]
        ybar_pre = y - xh1

        # -- observer: RK4 on (xh1, xh2, eta), y/g/u held over the step
        h_y = 20.0 * math.cos(y) ** 4 + 20.0 * math.sin(y) ** 4
        if model_terms:
            g_obs = (1.5 * np_ * (x3 * x4 * ld - x3 * x4 * lq)
                     - beq * xh2 - ceq * xh1) / aeq
            if feed_load:
                g_obs = g_obs - deq * fl / aeq
            if iq_measured:
                u_obs = a2 * x3
            else:
                u_obs = a2 * iq_prev
        else:
            g_obs = 0.0
            u_obs = 0.0

        e1 = xh1
        e2 = xh2
        ee = eta
        f_log = 0.0
        k1a = k1b = k1c = 0.0
        k2a = k2b = k2c = 0.0
        k3a = k3b = k3c = 0.0
        k4a = k4b = k4c = 0.0
        for stage in range(4):
            if stage == 0:
                s1, s2, se = e1, e2, ee
                ts = t
            elif stage == 1:
                s1 = e1 + 0.5 * dt * k1a
                s2 = e2 + 0.5 * dt * k1b
                se = ee + 0.5 * dt * k1c
                ts = t + 0.5 * dt
            elif stage == 2:
                s1 = e1 + 0.5 * dt * k2a
                s2 = e2 + 0.5 * dt * k2b
                se = ee + 0.5 * dt * k2c
                ts = t + 0.5 * dt
            else:
                s1 = e1 + dt * k3a
                s2 = e2 + dt * k3b
                se = ee + dt * k3c
                ts = t + dt
            ybar = y - s1
            m_t = m0 * math.exp(-mlam * ts)
            num = se * se * h_y * h_y * ybar
            den = se * h_y * abs(ybar) + m_t
            f = num / den
            da = s2 + alpha0 * ybar + pict0 * f
            db = u_obs + g_obs + alpha1 * ybar + pict1 * f
            dc = -m_t * ell * se + ell * h_y * abs(ybar)
            if stage == 0:
                k1a, k1b, k1c = da, db, dc
                f_log = f
            elif stage == 1:
                k2a, k2b, k2c = da, db, dc
            elif stage == 2:
                k3a, k3b, k3c = da, db, dc
            else:
                k4a, k4b, k4c = da, db, dc
        xh1 = e1 + sixth * (k1a + 2 * k2a + 2 * k3a + k4a)
        xh2 = e2 + sixth * (k1b + 2 * k2b + 2 * k3b + k4b)
        eta = ee + sixth * (k1c + 2 * k2c + 2 * k3c + k4c)
        if eta < _ETA_FLOOR:
            eta = _ETA_FLOOR

        # -- controller: sequential pass, adaptation before each output
        frozen_12 = (sat & 1) != 0
        frozen_3 = (sat & 2) != 0
        frozen_4 = (sat & 4) != 0
        r1 = x1d[k]
        r2 = x2d[k]

        p1 = xh1 - r1
        if not frozen_12:
            drive = 0.5 * z1 * de1 * p1 * p1
            decay = de1 * sg1
            q1 = -decay * th1 + drive
            q2 = -decay * (th1 + 0.5 * dt * q1) + drive
            q3 = -decay * (th1 + 0.5 * dt * q2) + drive
            q4 = -decay * (th1 + dt * q3) + drive
            th1 = th1 + sixth * (q1 + 2 * q2 + 2 * q3 + q4)
            if th1 < 0.0:
                th1 = 0.0
        a1 = -(1.0 / (2.0 * 1.0)) * (b1 + z1 * th1) * p1 + ref_sign * r2
        p2 = (xh2 - r2) - a1
        p3 = x3 - iq_prev
        p4 = x4 - 0.0
        if not frozen_12:
            drive = 0.5 * z2 * de2 * p2 * p2
            decay = de2 * sg2
            q1 = -decay * th2 + drive
            q2 = -decay * (th2 + 0.5 * dt * q1) + drive
            q3 = -decay * (th2 + 0.5 * dt * q2) + drive
            q4 = -decay * (th2 + dt * q3) + drive
            th2 = th2 + sixth * (q1 + 2 * q2 + 2 * q3 + q4)
            if th2 < 0.0:
                th2 = 0.0
        if not frozen_3:
            drive = 0.5 * z3 * de3 * p3 * p3
            decay = de3 * sg3
            q1 = -decay * th3 + drive
            q2 = -decay * (th3 + 0.5 * dt * q1) + drive
            q3 = -decay * (th3 + 0.5 * dt * q2) + drive
            q4 = -decay * (th3 + dt * q3) + drive
            th3 = th3 + sixth * (q1 + 2 * q2 + 2 * q3 + q4)
            if th3 < 0.0:
                th3 = 0.0
        if not frozen_4:
            drive = 0.5 * z4 * de4 * p4 * p4
            decay = de4 * sg4
            q1 = -decay * th4 + drive
            q2 = -decay * (th4 + 0.5 * dt * q1) + drive
            q3 = -decay * (th4 + 0.5 * dt * q2) + drive
            q4 = -decay * (th4 + dt * q3) + drive
            th4 = th4 + sixth * (q1 + 2 * q2 + 2 * q3 + q4)
            if th4 < 0.0:
                th4 = 0.0

        g2c = (1.5 * np_ * (x3 * x4 * ld - x3 * x4 * lq)
               - beq * xh2 - ceq * xh1) / aeq
        g3c = (-rs * x3 - np_ * arl * xh2 * (x4 * ld + phi)) / lq
        g4c = (-rs * x4 + np_ * arl * xh2 * x3 * lq) / ld
        w2 = -(1.0 / (2.0 * a2)) * (b2 + z2 * th2) * p2 - g2c / a2
        w3 = -(1.0 / (2.0 * a3)) * (b3 + z3 * th3) * p3 - g3c / a3
        w4 = -(1.0 / (2.0 * a4)) * (b4 + z4 * th4) * p4 - g4c / a4
        iq_ref = w2 - (1.0 / a2) * p1
        uq = w3
        ud = w4
        flags = 0
        if math.isfinite(iq_max) and abs(iq_ref) > iq_max:
            iq_ref = math.copysign(iq_max, iq_ref)
            flags |= 1
        if math.isfinite(u_max) and abs(uq) > u_max:
            uq = math.copysign(u_max, uq)
            flags |= 2
        if math.isfinite(u_max) and abs(ud) > u_max:
            ud = math.copysign(u_max, ud)
            flags |= 4

        # -- log the step record (pre-integration plant state)
        if k % stride == 0:
            tau_m = 1.5 * np_ * (x3 * (x4 * ld + phi) - x4 * x3 * lq)
            out[rows, 0] = t
            out[rows, 1] = x1
            out[rows, 2] = x2
            out[rows, 3] = x3
            out[rows, 4] = x4
            out[rows, 5] = r1
            out[rows, 6] = r2
            out[rows, 7] = xh1
            out[rows, 8] = xh2
            out[rows, 9] = eta
            out[rows, 10] = p1
            out[rows, 11] = p2
            out[rows, 12] = p3
            out[rows, 13] = p4
            out[rows, 14] = th1
            out[rows, 15] = th2
            out[rows, 16] = th3
            out[rows, 17] = th4
            out[rows, 18] = a1
            out[rows, 19] = iq_ref
            out[rows, 20] = uq
            out[rows, 21] = ud
            out[rows, 22] = tau_m
            out[rows, 23] = fl
            out[rows, 24] = d1n
            out[rows, 25] = d2n
            out[rows, 26] = d3n
            out[rows, 27] = d4n
            out[rows, 28] = float(flags)
            out[rows, 29] = y
            out[rows, 30] = f_log
            out[rows, 31] = ybar_pre
            rows += 1

        # -- plant: RK4 with voltages, current command, load and the
        #    injected terms all held over the step
        g2p = (1.5 * np_ * (x3 * x4 * ld - x3 * x4 * lq)
               - beq * x2 - ceq * x1) / aeq
        g3p = (-rs * x3 - np_ * arl * x2 * (x4 * ld + phi)) / lq
        g4p = (-rs * x4 + np_ * arl * x2 * x3 * lq) / ld
        ex1 = us1 * 0.0 + dc1 * d1n
        ex2 = us2 * g2p + dc2 * d2n
        ex3 = us3 * g3p + dc3 * d3n
        ex4 = us4 * g4p + dc4 * d4n

        w1 = x1
        v1 = x2
        c1 = x3
        c2 = x4
        j1a = j1b = j1c = j1d = 0.0
        j2a = j2b = j2c = j2d = 0.0
        j3a = j3b = j3c = j3d = 0.0
        for stage in range(4):
            if stage == 0:
                s1, s2, s3, s4 = w1, v1, c1, c2
            elif stage == 1:
                s1 = w1 + 0.5 * dt * j1a
                s2 = v1 + 0.5 * dt * j1b
                s3 = c1 + 0.5 * dt * j1c
                s4 = c2 + 0.5 * dt * j1d
            elif stage == 2:
                s1 = w1 + 0.5 * dt * j2a
                s2 = v1 + 0.5 * dt * j2b
                s3 = c1 + 0.5 * dt * j2c
                s4 = c2 + 0.5 * dt * j2d
            else:
                s1 = w1 + dt * j3a
                s2 = v1 + dt * j3b
                s3 = c1 + dt * j3c
                s4 = c2 + dt * j3d
            g2t = (1.5 * np_ * (s3 * s4 * ld - s3 * s4 * lq)
                   - beq * s2 - ceq * s1) / aeq
            g3t = (-rs * s3 - np_ * arl * s2 * (s4 * ld + phi)) / lq
            g4t = (-rs * s4 + np_ * arl * s2 * s3 * lq) / ld
            da = s2 + ex1
            db = a2 * s3 + g2t - deq * fl / aeq + ex2
            dc = uq / lq + g3t + ex3
            dd = ud / ld + g4t + ex4
            if stage == 0:
                j1a, j1b, j1c, j1d = da, db, dc, dd
            elif stage == 1:
                j2a, j2b, j2c, j2d = da, db, dc, dd
            elif stage == 2:
                j3a, j3b, j3c, j3d = da, db, dc, dd
            else:
                x1 = w1 + sixth * (j1a + 2 * j2a + 2 * j3a + da)
                x2 = v1 + sixth * (j1b + 2 * j2b + 2 * j3b + db)
                x3 = c1 + sixth * (j1c + 2 * j2c + 2 * j3c + dc)
                x4 = c2 + sixth * (j1d + 2 * j2d + 2 * j3d + dd)

        iq_prev = iq_ref
        sat = flags

        bad = False
        for v in (x1, x2, x3, x4, xh1, xh2, eta, th1, th2, th3, th4):
            if not (-guard <= v <= guard):
                bad = True
        if bad:
            status = 1
            stop_step = k
            break

    return status, rows, stop_step


if numba_requested():
    simulate_loop = _numba.njit(cache=True, fastmath=False)(_simulate_loop)
    BACKEND = "numba"
else:  # pure-python fallback, same function object semantics
    simulate_loop = _simulate_loop
    BACKEND = "python"

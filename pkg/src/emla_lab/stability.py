"""Post-hoc stability verification over simulation traces.

Everything here is pure post-processing: Hurwitz checks, Lyapunov
residuals, exponential-envelope fitting for error norms, composite
energy traces built from logged states, and the gain-derived decay
diagnostics that go into a verification report.  Nothing in this module
integrates anything; it only looks at numbers a run already produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .control import RsbaGains
from .observer import ObserverConfig, is_hurwitz_2x2

__all__ = [
    "EnvelopeFit",
    "LyapunovTrace",
    "BallDiagnostics",
    "is_hurwitz",
    "lyapunov_residual",
    "fit_envelope",
    "composite_lyapunov",
    "ball_radius_estimate",
    "verification_report",
]


def is_hurwitz(mat) -> bool:
    """True iff the 2x2 matrix has both eigenvalues in the open left
    half plane, decided by the exact trace/determinant criterion."""
    m = np.asarray(mat, dtype=float)
    if m.shape != (2, 2):
        raise ValueError("is_hurwitz expects a 2x2 matrix")
    return is_hurwitz_2x2(m)


def lyapunov_residual(a_bar, p_mat, q_mat) -> float:
    """Frobenius norm of p*A_bar + A_bar^T*p + Q.

    Zero (to rounding) for an exact Lyapunov pair; small but nonzero for
    matrices quoted at limited precision.
    """
    a = np.asarray(a_bar, dtype=float)
    p = np.asarray(p_mat, dtype=float)
    q = np.asarray(q_mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("a_bar must be square")
    if p.shape != a.shape or q.shape != a.shape:
        raise ValueError("p_mat and q_mat must match a_bar's shape")
    return float(np.linalg.norm(p @ a + a.T @ p + q, "fro"))


# ---------------------------------------------------------------------------
# envelope fitting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EnvelopeFit:
    """Exponential envelope e(t) <= c_bar * exp(-rate*(t-t0)) * e(t0) + floor.

    c_bar is relative to the series value at t0.  rate <= 0 means the
    series never decayed; such fits carry not_exponential=True and their
    c_bar/rate fields are diagnostic only.  The majorization inequality
    holds at every sample regardless.
    """
    c_bar: float
    rate: float
    floor: float
    r2: float
    not_exponential: bool = False


def _majorize(c_bar: float, rate: float, floor: float, r2: float,
              not_exp: bool, seg: np.ndarray, t_rel: np.ndarray,
              e0: float) -> EnvelopeFit:
    # inflate c_bar minimally until the envelope covers every sample;
    # degenerate bases (e0 = 0, or exp underflow under a sample still
    # above the floor) fall back to lifting the floor instead
    need = seg - floor
    pos = need > 0.0
    if np.any(pos):
        if e0 > 0.0:
            denom = e0 * np.exp(-rate * t_rel[pos])
            if np.all(denom > 0.0):
                c_bar = max(c_bar, float(np.max(need[pos] / denom)))
            else:
                floor = float(np.max(seg))
        else:
            floor = float(np.max(seg))
    return EnvelopeFit(c_bar=float(c_bar), rate=float(rate),
                       floor=float(floor), r2=float(r2),
                       not_exponential=not_exp)


def fit_envelope(error_norm_series, t0_index: int = 0,
                 dt: float = 1.0) -> EnvelopeFit:
    """Fit a decaying exponential plus floor to a nonnegative series.

    The floor is the maximum over the trailing 10% of samples.  Rate and
    amplitude come from a least-squares line through log(e - floor) over
    the stretch that still sits above the floor band; afterwards c_bar
    is inflated just enough that the envelope majorizes every sample.
    A fit whose rate comes out <= 0 is flagged not_exponential.
    """
    e = np.asarray(error_norm_series, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise ValueError("series must be a non-empty 1-d array")
    if not np.all(np.isfinite(e)) or np.any(e < 0.0):
        raise ValueError("series must be finite and nonnegative")
    if not 0 <= t0_index < e.size:
        raise ValueError("t0_index out of range")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    seg = e[t0_index:]
    if seg.size < 20:
        raise ValueError("need at least 20 samples past t0_index")

    tail = max(1, seg.size // 10)
    floor = float(np.max(seg[-tail:]))
    e0 = float(seg[0])
    t_rel = np.arange(seg.size, dtype=float) * dt

    resid = seg - floor
    # fit window: everything before the series settles into the floor
    # band for good, keeping only samples the log can see
    cut = max(1e-3 * (e0 - floor), 0.0)
    above = np.flatnonzero(resid > cut)
    if above.size < 2 or e0 <= floor:
        return _majorize(0.0, 0.0, floor, 0.0, True, seg, t_rel, e0)
    win = slice(0, above[-1] + 1)
    mask = resid[win] > 0.0
    tt = t_rel[win][mask]
    yy = np.log(resid[win][mask])
    if tt.size < 2 or np.ptp(tt) == 0.0:
        return _majorize(0.0, 0.0, floor, 0.0, True, seg, t_rel, e0)

    slope, intercept = np.polyfit(tt, yy, 1)
    rate = float(-slope)
    c_bar = float(np.exp(intercept)) / e0
    pred = intercept + slope * tt
    ss_res = float(np.sum((yy - pred) ** 2))
    ss_tot = float(np.sum((yy - np.mean(yy)) ** 2))
    r2 = 0.0 if ss_tot == 0.0 else min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return _majorize(c_bar, rate, floor, r2, rate <= 0.0, seg, t_rel, e0)


# ---------------------------------------------------------------------------
# composite energy trace
# ---------------------------------------------------------------------------

_REQUIRED_COLS = ("t", "x1hat", "x2hat", "eta_hat",
                  "P1", "P2", "P3", "P4", "th1", "th2", "th3", "th4")


@dataclass(frozen=True)
class LyapunovTrace:
    """Observer and subsystem energy series for one run.

    v0 weighs the estimation error through p plus the adaptive gain
    energy; v1..v4 are the per-subsystem tracking plus adaptation
    energies.  The unknown equilibrium offsets are fixed at zero
    (theta_star, eta_star), which shifts each series by a constant
    without touching its envelope.
    """
    t: np.ndarray
    v0: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    v3: np.ndarray
    v4: np.ndarray
    v_total: np.ndarray
    theta_star: tuple = (0.0, 0.0, 0.0, 0.0)
    eta_star: float = 0.0


def composite_lyapunov(trace: Mapping[str, np.ndarray], p_mat, delta,
                       ell: float, theta_star=None,
                       eta_star: float = 0.0) -> LyapunovTrace:
    """Build V0..V4 and their sum from a logged trace table.

    Needs ground-truth state columns (x1, x2) next to the estimates, so
    it only applies to simulation output, never to experimental data.
    The adaptation energies are measured about (theta_star, eta_star);
    the true equilibria are unknowable, so the default zeros shift each
    series by a constant without touching its envelope, and callers that
    care about the late-run shape can recenter on settled values.
    """
    missing = [c for c in ("x1", "x2") if c not in trace]
    if missing:
        raise ValueError(
            "composite Lyapunov needs ground-truth columns; missing: "
            + ", ".join(missing))
    missing = [c for c in _REQUIRED_COLS if c not in trace]
    if missing:
        raise ValueError("missing trace columns: " + ", ".join(missing))

    p = np.asarray(p_mat, dtype=float).reshape(2, 2)
    evals = np.linalg.eigvalsh(0.5 * (p + p.T))
    if evals[0] <= 0.0 or np.abs(p - p.T).max() > 1e-9 * np.abs(p).max():
        raise ValueError("p_mat must be symmetric positive definite")
    d = np.asarray(delta, dtype=float).reshape(4)
    if np.any(d <= 0.0):
        raise ValueError("delta must be strictly positive")
    if ell <= 0.0:
        raise ValueError("ell must be > 0")

    if theta_star is None:
        th_star = np.zeros(4)
    else:
        th_star = np.asarray(theta_star, dtype=float).reshape(4)
    if not (np.all(np.isfinite(th_star)) and math.isfinite(eta_star)):
        raise ValueError("equilibrium offsets must be finite")

    cols = {c: np.asarray(trace[c], dtype=float)
            for c in ("x1", "x2") + _REQUIRED_COLS}
    n = cols["t"].size
    for name, v in cols.items():
        if v.shape != (n,):
            raise ValueError(f"trace column {name} is not aligned")

    e1 = cols["x1"] - cols["x1hat"]
    e2 = cols["x2"] - cols["x2hat"]
    v0 = (p[0, 0] * e1 * e1 + 2.0 * p[0, 1] * e1 * e2
          + p[1, 1] * e2 * e2 + (cols["eta_hat"] - eta_star) ** 2 / ell)
    subs = [0.5 * (cols[f"P{i}"] ** 2
                   + (cols[f"th{i}"] - th_star[i - 1]) ** 2 / d[i - 1])
            for i in (1, 2, 3, 4)]
    total = v0 + subs[0] + subs[1] + subs[2] + subs[3]
    return LyapunovTrace(t=cols["t"], v0=v0, v1=subs[0], v2=subs[1],
                         v3=subs[2], v4=subs[3], v_total=total,
                         theta_star=tuple(float(v) for v in th_star),
                         eta_star=float(eta_star))


# ---------------------------------------------------------------------------
# gain-derived decay diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BallDiagnostics:
    """Per-subsystem decay coefficients next to the measured floor.

    phi[i] = min(beta_i, delta_i*sigma_i) and phi0 = min(1, m_lb*ell)
    bound how fast each energy term can shed; the analytic radius of the
    terminal ball also needs disturbance magnitudes nobody knows, so
    only the empirical floor is reported alongside.
    """
    phi: tuple
    phi0: float
    phi_total: float
    empirical_floor: float
    analytic_radius: None = None


def ball_radius_estimate(gains: RsbaGains, fitted_floor: float,
                         m_lb: float, ell: float) -> BallDiagnostics:
    if fitted_floor < 0.0:
        raise ValueError("fitted_floor must be >= 0")
    if m_lb < 0.0:
        raise ValueError("m_lb must be >= 0")
    if ell <= 0.0:
        raise ValueError("ell must be > 0")
    phi = tuple(float(min(b, d * s)) for b, d, s in
                zip(gains.beta, gains.delta, gains.sigma))
    phi0 = float(min(1.0, m_lb * ell))
    phi_total = float(min((phi0,) + phi))
    return BallDiagnostics(phi=phi, phi0=phi0, phi_total=phi_total,
                           empirical_floor=float(fitted_floor))


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def _fit_dict(fit: EnvelopeFit) -> dict:
    return {"c_bar": fit.c_bar, "rate": fit.rate, "floor": fit.floor,
            "r2": fit.r2, "not_exponential": fit.not_exponential}


def _decay_verdict(series: np.ndarray, dt: float):
    """Judge boundedness of one error series.

    The envelope is fitted from the series' worst excursion onward.  The
    log-line fit can come back flat on a run whose trailing window holds
    a re-excitation bump, so two shape checks back it up: the series
    never rose meaningfully above its terminal band in the first place,
    or the run ends well below its worst excursion.  A series whose end
    is its maximum fails all three.
    """
    n = series.size
    i_pk = int(np.argmax(series))
    peak = float(series[i_pk])
    i0 = max(0, min(i_pk, n - 20))
    fit = fit_envelope(series, t0_index=i0, dt=dt)
    if not fit.not_exponential:
        return fit, True
    if peak <= 0.0:
        return fit, True
    tail = max(1, n // 10)
    tail_max = float(np.max(series[-tail:]))
    body_max = float(np.max(series[:-tail])) if n > tail else tail_max
    in_band = peak <= 2.0 * tail_max and tail_max <= 2.0 * body_max
    came_down = tail_max <= 0.25 * peak
    return fit, bool(in_band or came_down)


def verification_report(trace: Mapping[str, np.ndarray],
                        obs_cfg: ObserverConfig, gains: RsbaGains,
                        dt: float, scenario: str = "scenario",
                        t0_index: int | None = None,
                        residual_tol: float = 5e-3) -> dict:
    """Assemble the JSON-ready verification summary for one run.

    Covers the observer matrix checks, the estimation-error envelope
    (when ground truth was logged), the composite energy envelope, and
    the gain diagnostics, each with a pass flag.  An explicit t0_index
    starts both envelope fits there and requires a decaying fit; the
    default lets each series start at its own worst excursion and also
    accepts runs whose error never left the terminal band.
    """
    a_bar = obs_cfg.a_bar()
    hurwitz_ok = is_hurwitz(a_bar)
    residual = lyapunov_residual(a_bar, obs_cfg.p_mat, obs_cfg.q_mat)
    report = {
        "scenario": scenario,
        "hurwitz": hurwitz_ok,
        "lyapunov_residual": residual,
        "lyapunov_residual_ok": residual <= residual_tol,
    }

    has_truth = all(c in trace for c in ("x1", "x2"))
    if has_truth:
        e1 = np.asarray(trace["x1"], float) - np.asarray(trace["x1hat"], float)
        e2 = np.asarray(trace["x2"], float) - np.asarray(trace["x2hat"], float)
        err_series = np.hypot(e1, e2)
        # measure adaptation energy about the settled gains; against the
        # unknowable true equilibria a drifting theta would ratchet the
        # energy upward even on a perfectly bounded run
        th_star = [float(np.asarray(trace[f"th{i}"], float)[-1])
                   for i in (1, 2, 3, 4)]
        eta_star = float(np.asarray(trace["eta_hat"], float)[-1])
        lyap = composite_lyapunov(trace, obs_cfg.p_mat, gains.delta,
                                  obs_cfg.ell, theta_star=th_star,
                                  eta_star=eta_star)
        if t0_index is None:
            err_fit, err_ok = _decay_verdict(err_series, dt)
            v_fit, v_ok = _decay_verdict(lyap.v_total, dt)
        else:
            err_fit = fit_envelope(err_series, t0_index=t0_index, dt=dt)
            v_fit = fit_envelope(lyap.v_total, t0_index=t0_index, dt=dt)
            err_ok = not err_fit.not_exponential
            v_ok = not v_fit.not_exponential
        report["observer_error_envelope"] = _fit_dict(err_fit)
        report["lyapunov_envelope"] = _fit_dict(v_fit)
        report["envelopes_decay"] = bool(err_ok and v_ok)
        floor = err_fit.floor
    else:
        report["observer_error_envelope"] = None
        report["lyapunov_envelope"] = None
        report["envelopes_decay"] = None
        floor = 0.0

    t = np.asarray(trace["t"], dtype=float)
    m_lb = obs_cfg.m_fn(float(t[-1])) if t.size else obs_cfg.m0
    ball = ball_radius_estimate(gains, floor, m_lb, obs_cfg.ell)
    report["decay_diagnostics"] = {
        "phi": list(ball.phi), "phi0": ball.phi0,
        "phi_total": ball.phi_total,
        "empirical_floor": ball.empirical_floor,
        "analytic_radius": None,
    }
    report["passed"] = bool(hurwitz_ok
                            and report["lyapunov_residual_ok"]
                            and report["envelopes_decay"] in (True, None))
    return report

"""Deterministic closed-loop simulation engine.

Builds the per-step input arrays (references, disturbances, load,
sensor noise), hands them to the compiled step loop in kernels.py, and
turns the raw trace back into named columns plus a metrics report.

Step order inside the loop: sample the reference, form the measurement
y = x1 + noise, advance the observer, run the controller on the fresh
estimate plus measured currents, evaluate the injected disturbance and
uncertainty terms, then integrate the plant one RK4 step with every
external input held constant over the step.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .control import ControlLimits, RsbaGains
from .model import equivalent_params
from .observer import ObserverConfig, default_h
from .params import EmlaParams, JointState
from .trajectory import BsplineCurve, quintic_reference, sample_trajectory

__all__ = [
    "TRACE_COLUMNS",
    "integrate_step_rk4",
    "HarmonicTerm",
    "ArctanDecayTerm",
    "UniformRandomTerm",
    "ConstantTerm",
    "ProfileTerm",
    "DisturbanceSpec",
    "eval_disturbance",
    "ConstantLoad",
    "ProfileLoad",
    "NoiseSpec",
    "ConstantReference",
    "QuinticReference",
    "SplineReference",
    "BridgedSplineReference",
    "TableReference",
    "ScenarioConfig",
    "MetricsReport",
    "SimResult",
    "run_scenario",
    "compute_metrics",
    "trace_to_csv",
    "read_trace_csv",
    "metrics_to_dict",
]

TRACE_COLUMNS = (
    "t", "x1", "x2", "x3", "x4", "x1d", "x2d", "x1hat", "x2hat",
    "eta_hat", "P1", "P2", "P3", "P4", "th1", "th2", "th3", "th4",
    "a1", "iq_ref", "uq", "ud", "tau_m", "f_load",
    "d1", "d2", "d3", "d4", "sat_flags", "y", "f_obs", "ybar",
)

assert len(TRACE_COLUMNS) == kernels.N_COLS


# ---------------------------------------------------------------------------
# generic integrator step
# ---------------------------------------------------------------------------

def integrate_step_rk4(deriv, state, dt: float) -> np.ndarray:
    """One classical RK4 step of ds/dt = deriv(s).

    Inputs that change at the control rate must already be frozen
    inside `deriv`; the step treats the system as autonomous.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    s = np.asarray(state, dtype=float)
    k1 = np.asarray(deriv(s), dtype=float)
    k2 = np.asarray(deriv(s + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(deriv(s + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(deriv(s + dt * k3), dtype=float)
    out = s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise ArithmeticError("non-finite state after RK4 step")
    return out


# ---------------------------------------------------------------------------
# disturbance terms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HarmonicTerm:
    """amplitude * sin(frequency*t + phase), or cos with cosine=True.

    frequency is angular (rad/s), matching how the injected waveforms
    are written.
    """
    amplitude: float
    frequency: float
    phase: float = 0.0
    cosine: bool = False


@dataclass(frozen=True)
class ArctanDecayTerm:
    """amplitude * arctan(x2) * exp(-decay * t)."""
    amplitude: float
    decay: float


@dataclass(frozen=True)
class UniformRandomTerm:
    """Uniform draw on [lo, hi], redrawn every control step."""
    lo: float
    hi: float
    seed: int

    def __post_init__(self):
        if self.hi < self.lo:
            raise ValueError("need hi >= lo")


@dataclass(frozen=True)
class ConstantTerm:
    value: float


@dataclass(frozen=True)
class ProfileTerm:
    """Piecewise-linear time profile, flat beyond the table ends."""
    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.size == 0 or t.shape != v.shape:
            raise ValueError("times and values must be matching 1-d tables")
        if np.any(np.diff(t) < 0.0):
            raise ValueError("times must be non-decreasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @classmethod
    def from_csv(cls, path):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(times=tuple(rows[:, 0]), values=tuple(rows[:, 1]))


def eval_disturbance(term, t: float, x2: float = 0.0,
                     draw: float | None = None) -> float:
    """Value of one disturbance term at time t.

    Random terms are reproducible only as part of a pre-drawn sequence,
    so for them the unit draw in [0, 1) must be supplied.
    """
    if t < 0.0:
        raise ValueError("t must be >= 0")
    if isinstance(term, HarmonicTerm):
        arg = term.frequency * t + term.phase
        wave = math.cos(arg) if term.cosine else math.sin(arg)
        return term.amplitude * wave
    if isinstance(term, ArctanDecayTerm):
        return term.amplitude * math.atan(x2) * math.exp(-term.decay * t)
    if isinstance(term, ConstantTerm):
        return term.value
    if isinstance(term, ProfileTerm):
        return float(np.interp(t, term.times, term.values))
    if isinstance(term, UniformRandomTerm):
        if draw is None:
            raise ValueError("random term needs its pre-drawn unit sample")
        return term.lo + (term.hi - term.lo) * float(draw)
    raise TypeError(f"unknown disturbance term {type(term).__name__}")


@dataclass(frozen=True)
class DisturbanceSpec:
    """Additive channel terms plus fractional model-error scales.

    With units="physical" (default) d1 adds to the position equation
    directly, d2 is a load-side force in N entering like the load
    channel, and d3/d4 are voltages on the two phase equations; the
    engine converts each to its state row.  units="row" injects all
    four channels into the state derivatives unconverted.
    uncertainty_scale multiplies the plant's own drift terms to make
    the injected model error.
    """
    d1: tuple = ()
    d2: tuple = ()
    d3: tuple = ()
    d4: tuple = ()
    uncertainty_scale: tuple = (0.0, 0.0, 0.0, 0.0)
    units: str = "physical"

    def __post_init__(self):
        sc = tuple(float(v) for v in self.uncertainty_scale)
        if len(sc) != 4:
            raise ValueError("uncertainty_scale must have 4 entries")
        if self.units not in ("physical", "row"):
            raise ValueError("units must be 'physical' or 'row'")
        object.__setattr__(self, "uncertainty_scale", sc)
        for name in ("d1", "d2", "d3", "d4"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def channels(self):
        return (self.d1, self.d2, self.d3, self.d4)

    def row_coefficients(self, p: EmlaParams) -> np.ndarray:
        """Native-units-to-state-row factors for the four channels."""
        if self.units == "row":
            return np.ones(4)
        eq = equivalent_params(p)
        return np.array([1.0, -eq.d_eq / eq.a_eq, 1.0 / p.l_q,
                         1.0 / p.l_d])


def _disturbance_arrays(spec: DisturbanceSpec, n: int, dt: float):
    """Split every channel into time-part and arctan-coefficient arrays."""
    t = np.arange(n, dtype=float) * dt
    time_part = np.zeros((4, n))
    atan_part = np.zeros((4, n))
    for ch, terms in enumerate(spec.channels()):
        for term in terms:
            if isinstance(term, HarmonicTerm):
                arg = term.frequency * t + term.phase
                wave = np.cos(arg) if term.cosine else np.sin(arg)
                time_part[ch] += term.amplitude * wave
            elif isinstance(term, ArctanDecayTerm):
                atan_part[ch] += term.amplitude * np.exp(-term.decay * t)
            elif isinstance(term, ConstantTerm):
                time_part[ch] += term.value
            elif isinstance(term, ProfileTerm):
                time_part[ch] += np.interp(t, term.times, term.values)
            elif isinstance(term, UniformRandomTerm):
                rng = np.random.Generator(np.random.PCG64(term.seed))
                time_part[ch] += rng.uniform(term.lo, term.hi, size=n)
            else:
                raise TypeError(
                    f"unknown disturbance term {type(term).__name__}")
    return time_part, atan_part


# ---------------------------------------------------------------------------
# load and sensor noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantLoad:
    value: float

    def sample(self, n: int, dt: float) -> np.ndarray:
        return np.full(n, float(self.value))


@dataclass(frozen=True)
class ProfileLoad:
    """Tabulated load force; hold=True keeps each value until the next
    breakpoint (staircase), otherwise the table is read linearly."""
    times: tuple
    values: tuple
    hold: bool = True

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.size == 0 or t.shape != v.shape:
            raise ValueError("times and values must be matching 1-d tables")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", tuple(float(x) for x in t))
        object.__setattr__(self, "values", tuple(float(x) for x in v))

    @classmethod
    def from_csv(cls, path, hold: bool = True):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(times=tuple(rows[:, 0]), values=tuple(rows[:, 1]),
                   hold=hold)

    def sample(self, n: int, dt: float) -> np.ndarray:
        t = np.arange(n, dtype=float) * dt
        times = np.asarray(self.times)
        values = np.asarray(self.values)
        if not self.hold:
            return np.interp(t, times, values)
        idx = np.searchsorted(times, t, side="right") - 1
        idx = np.clip(idx, 0, values.size - 1)
        return values[idx]


@dataclass(frozen=True)
class NoiseSpec:
    """Additive measurement noise on y: uniform on [-scale, scale] or
    gaussian with standard deviation scale."""
    kind: str
    scale: float
    seed: int

    def __post_init__(self):
        if self.kind not in ("uniform", "gaussian"):
            raise ValueError("kind must be 'uniform' or 'gaussian'")
        if self.scale < 0.0:
            raise ValueError("scale must be >= 0")

    def sample(self, n: int) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(self.seed))
        if self.kind == "uniform":
            return rng.uniform(-self.scale, self.scale, size=n)
        return self.scale * rng.standard_normal(n)


# ---------------------------------------------------------------------------
# reference sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantReference:
    value: float

    def sample(self, n: int, dt: float):
        return np.full(n, float(self.value)), np.zeros(n)


@dataclass(frozen=True)
class QuinticReference:
    """Rest-to-rest polynomial schedule through (position, dwell)
    waypoints; holds the last position once the schedule ends."""
    waypoints: tuple
    segment_duration: object

    def sample(self, n: int, dt: float):
        _, pos, vel = quintic_reference(list(self.waypoints),
                                        self.segment_duration, dt)
        x1d = np.full(n, pos[-1])
        x2d = np.zeros(n)
        m = min(n, pos.size)
        x1d[:m] = pos[:m]
        x2d[:m] = vel[:m]
        return x1d, x2d


@dataclass(frozen=True)
class SplineReference:
    """One joint of a B-spline trajectory, held at its endpoint."""
    curve: BsplineCurve
    joint: int = 0

    def __post_init__(self):
        if not 0 <= self.joint < self.curve.n_joints:
            raise ValueError("joint index out of range for the curve")

    def sample(self, n: int, dt: float):
        t = np.arange(n, dtype=float) * dt
        inside = np.minimum(t, self.curve.t_final)
        pos, vel, _ = sample_trajectory(self.curve, inside)
        x1d = pos[:, self.joint].copy()
        x2d = vel[:, self.joint].copy()
        x2d[t > self.curve.t_final] = 0.0
        return x1d, x2d


@dataclass(frozen=True)
class BridgedSplineReference:
    """B-spline trajectory entered through a quintic bridge segment.

    Motion controllers never step the reference: when the commanded
    trajectory starts away from the measured position, the setpoint is
    profiled from the rest state onto the trajectory.  The bridge is the
    unique quintic matching (start_position, 0, 0) at t = 0 and the
    curve's full boundary state (position, velocity, acceleration) at
    t = bridge_duration; the curve follows, held at its endpoint."""
    curve: BsplineCurve
    start_position: float
    bridge_duration: float
    joint: int = 0

    def __post_init__(self):
        if self.bridge_duration <= 0.0:
            raise ValueError("bridge_duration must be > 0")
        if not 0 <= self.joint < self.curve.n_joints:
            raise ValueError("joint index out of range for the curve")
        tb = float(self.bridge_duration)
        pos0, vel0, acc0 = sample_trajectory(self.curve, np.array([0.0]))
        p1, v1, a1 = (pos0[0, self.joint], vel0[0, self.joint],
                      acc0[0, self.joint])
        rows = np.zeros((6, 6))
        rows[0, 0] = 1.0                                   # p(0)
        rows[1, 1] = 1.0                                   # v(0)
        rows[2, 2] = 2.0                                   # a(0)
        rows[3] = [tb ** k for k in range(6)]              # p(tb)
        rows[4] = [k * tb ** (k - 1) if k else 0.0 for k in range(6)]
        rows[5] = [k * (k - 1) * tb ** (k - 2) if k > 1 else 0.0
                   for k in range(6)]
        rhs = np.array([float(self.start_position), 0.0, 0.0, p1, v1, a1])
        coef = np.linalg.solve(rows, rhs)
        object.__setattr__(self, "_coef", coef)

    def sample(self, n: int, dt: float):
        t = np.arange(n, dtype=float) * dt
        tb = float(self.bridge_duration)
        c = self._coef
        dc = np.polynomial.polynomial.polyder(c)
        x1d = np.polynomial.polynomial.polyval(t, c)
        x2d = np.polynomial.polynomial.polyval(t, dc)
        after = t >= tb
        if np.any(after):
            inside = np.minimum(t[after] - tb, self.curve.t_final)
            pos, vel, _ = sample_trajectory(self.curve, inside)
            x1d[after] = pos[:, self.joint]
            x2d[after] = vel[:, self.joint]
            past_end = np.zeros_like(after)
            past_end[after] = (t[after] - tb) > self.curve.t_final
            x2d[past_end] = 0.0
        return x1d, x2d


@dataclass(frozen=True)
class TableReference:
    """Linear interpolation through a (t, position[, velocity]) table."""
    times: tuple
    positions: tuple
    velocities: tuple | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        if t.ndim != 1 or t.size < 2 or t.shape != p.shape:
            raise ValueError("need matching 1-d tables with >= 2 rows")
        if np.any(np.diff(t) <= 0.0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_csv(cls, path):
        rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        vel = tuple(rows[:, 2]) if rows.shape[1] > 2 else None
        return cls(times=tuple(rows[:, 0]), positions=tuple(rows[:, 1]),
                   velocities=vel)

    def sample(self, n: int, dt: float):
        t = np.arange(n, dtype=float) * dt
        times = np.asarray(self.times, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        x1d = np.interp(t, times, pos)
        if self.velocities is not None:
            x2d = np.interp(t, times, np.asarray(self.velocities, float))
        else:
            x2d = np.interp(t, times, np.gradient(pos, times))
        x2d = np.where((t < times[0]) | (t > times[-1]), 0.0, x2d)
        return x1d, x2d


# ---------------------------------------------------------------------------
# scenario configuration
# ---------------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    params: EmlaParams
    gains: RsbaGains
    observer: ObserverConfig
    reference: object
    duration: float
    dt: float = 1e-4
    disturbance: DisturbanceSpec = field(default_factory=DisturbanceSpec)
    load: object = None
    noise: NoiseSpec | None = None
    x0: JointState = field(
        default_factory=lambda: JointState(0.0, 0.0, 0.0, 0.0))
    xhat0: tuple = (0.0, 0.0)
    eta0: float = 1.0
    theta0: tuple = (0.0, 0.0, 0.0, 0.0)
    limits: ControlLimits | None = None
    a1_ref_sign: float = -1.0
    feed_load_to_observer: bool = True
    # velocity-subsystem input fed to the observer: the clipped current
    # command ("command") or the measured q current ("measured")
    observer_current: str = "command"
    divergence_guard: float = 1e6
    trace_stride: int = 1
    convergence_threshold: float | None = None
    name: str = "scenario"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.duration < self.dt:
            raise ValueError("duration must be >= dt")
        if self.trace_stride < 1:
            raise ValueError("trace_stride must be >= 1")
        if self.divergence_guard <= 0.0:
            raise ValueError("divergence_guard must be > 0")
        if self.eta0 <= 0.0:
            raise ValueError("eta0 must be > 0")
        self.xhat0 = tuple(float(v) for v in self.xhat0)
        self.theta0 = tuple(float(v) for v in self.theta0)
        if len(self.xhat0) != 2:
            raise ValueError("xhat0 must have 2 entries")
        if len(self.theta0) != 4 or any(v < 0.0 for v in self.theta0):
            raise ValueError("theta0 must be 4 nonnegative entries")
        if not hasattr(self.reference, "sample"):
            raise ValueError("reference must provide sample(n, dt)")
        if self.observer_current not in ("command", "measured"):
            raise ValueError("observer_current must be 'command' or "
                             "'measured'")
        # the compiled loop implements the canonical double-integrator
        # observer with the bundled output weighting only
        obs = self.observer
        if (not np.array_equal(obs.a_mat, [[0.0, 1.0], [0.0, 0.0]])
                or not np.array_equal(obs.b_vec, [0.0, 1.0])
                or not np.array_equal(obs.c_vec, [1.0, 0.0])):
            raise ValueError("engine supports the canonical motion-"
                             "subsystem observer matrices only")
        if obs.h_fn is not default_h:
            raise ValueError("engine supports the bundled output "
                             "weighting function only")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetricsReport:
    """Tracking quality summary per run.

    pos_error / vel_error are the max absolute errors after the
    convergence time (full horizon when the run never converged);
    the _rms variants integrate over the same window.  torque_effort
    is the largest torque magnitude anywhere in the run.
    """
    pos_error: float
    pos_error_rms: float
    vel_error: float
    vel_error_rms: float
    torque_effort: float
    convergence_speed: float
    converged: bool
    threshold: float
    saturation_count: int
    diverged: bool = False


def compute_metrics(trace: Mapping[str, np.ndarray],
                    threshold: float | None = None,
                    diverged: bool = False) -> MetricsReport:
    """Extract the report from a trace table.

    The convergence time is the first sample from which the position
    error stays inside the threshold for the rest of the run; the
    default threshold is 2% of the initial error with a 1e-4 m floor.
    """
    for c in ("t", "x1", "x1d", "x2", "x2d", "tau_m", "sat_flags"):
        if c not in trace:
            raise ValueError(f"trace is missing column {c}")
    t = np.asarray(trace["t"], dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")
    e_pos = np.abs(np.asarray(trace["x1"], float)
                   - np.asarray(trace["x1d"], float))
    e_vel = np.abs(np.asarray(trace["x2"], float)
                   - np.asarray(trace["x2d"], float))
    if threshold is None:
        threshold = max(0.02 * float(e_pos[0]), 1e-4)
    threshold = float(threshold)
    if threshold <= 0.0:
        raise ValueError("threshold must be > 0")

    # largest error still ahead of each sample
    future_max = np.maximum.accumulate(e_pos[::-1])[::-1]
    inside = np.flatnonzero(future_max <= threshold)
    if inside.size:
        ci = int(inside[0])
        converged = True
        conv_speed = float(t[ci] - t[0])
    else:
        ci = 0
        converged = False
        conv_speed = math.inf

    tail_pos = e_pos[ci:]
    tail_vel = e_vel[ci:]
    tau = np.abs(np.asarray(trace["tau_m"], float))
    sat = np.asarray(trace["sat_flags"], float)
    return MetricsReport(
        pos_error=float(np.max(tail_pos)),
        pos_error_rms=float(np.sqrt(np.mean(tail_pos ** 2))),
        vel_error=float(np.max(tail_vel)),
        vel_error_rms=float(np.sqrt(np.mean(tail_vel ** 2))),
        torque_effort=float(np.max(tau)),
        convergence_speed=conv_speed,
        converged=converged,
        threshold=threshold,
        saturation_count=int(np.count_nonzero(sat)),
        diverged=diverged,
    )


def metrics_to_dict(m: MetricsReport) -> dict:
    out = {
        "pos_error": m.pos_error,
        "pos_error_rms": m.pos_error_rms,
        "vel_error": m.vel_error,
        "vel_error_rms": m.vel_error_rms,
        "torque_effort": m.torque_effort,
        "convergence_speed": (None if not math.isfinite(m.convergence_speed)
                              else m.convergence_speed),
        "converged": m.converged,
        "threshold": m.threshold,
        "saturation_count": m.saturation_count,
        "diverged": m.diverged,
    }
    return out


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimResult:
    trace: dict
    metrics: MetricsReport
    diverged: bool
    stop_step: int | None
    backend: str


def _pack_params(p: EmlaParams) -> np.ndarray:
    eq = equivalent_params(p)
    pp = np.empty(kernels.PP_SIZE)
    pp[kernels.PP_NP] = p.n_p
    pp[kernels.PP_PHI] = p.phi_pm
    pp[kernels.PP_RS] = p.r_s
    pp[kernels.PP_LD] = p.l_d
    pp[kernels.PP_LQ] = p.l_q
    pp[kernels.PP_AEQ] = eq.a_eq
    pp[kernels.PP_BEQ] = eq.b_eq
    pp[kernels.PP_CEQ] = eq.c_eq
    pp[kernels.PP_DEQ] = eq.d_eq
    pp[kernels.PP_ARL] = eq.alpha_rl
    return pp


def _pack_observer(cfg: ObserverConfig, feed_load: bool,
                   iq_measured: bool) -> np.ndarray:
    ob = np.empty(kernels.OB_SIZE)
    ob[kernels.OB_ALPHA0] = cfg.alpha[0]
    ob[kernels.OB_ALPHA1] = cfg.alpha[1]
    ob[kernels.OB_PICT0] = cfg.p_inv_ct[0]
    ob[kernels.OB_PICT1] = cfg.p_inv_ct[1]
    ob[kernels.OB_ELL] = cfg.ell
    ob[kernels.OB_M0] = cfg.m0
    ob[kernels.OB_MLAM] = cfg.m_lambda
    ob[kernels.OB_MODEL_TERMS] = 1.0 if cfg.use_model_terms else 0.0
    ob[kernels.OB_FEED_LOAD] = 1.0 if feed_load else 0.0
    ob[kernels.OB_IQ_MEASURED] = 1.0 if iq_measured else 0.0
    return ob


def _pack_control(gains: RsbaGains, limits: ControlLimits | None,
                  ref_sign: float) -> np.ndarray:
    ct = np.empty(kernels.CT_SIZE)
    ct[kernels.CT_BETA:kernels.CT_BETA + 4] = gains.beta
    ct[kernels.CT_ZETA:kernels.CT_ZETA + 4] = gains.zeta
    ct[kernels.CT_DELTA:kernels.CT_DELTA + 4] = gains.delta
    ct[kernels.CT_SIGMA:kernels.CT_SIGMA + 4] = gains.sigma
    iq_max = u_max = math.inf
    if limits is not None:
        if limits.i_q_max is not None:
            iq_max = limits.i_q_max
        if limits.u_max is not None:
            u_max = limits.u_max
    ct[kernels.CT_IQ_MAX] = iq_max
    ct[kernels.CT_U_MAX] = u_max
    ct[kernels.CT_REF_SIGN] = ref_sign
    return ct


def run_scenario(cfg: ScenarioConfig) -> SimResult:
    """Simulate one closed-loop scenario.

    Returns the named trace columns and the metrics report; a run that
    trips the divergence guard comes back flagged with the partial
    trace instead of raising.
    """
    n = cfg.n_steps
    x1d, x2d = cfg.reference.sample(n, cfg.dt)
    x1d = np.ascontiguousarray(x1d, dtype=float)
    x2d = np.ascontiguousarray(x2d, dtype=float)
    if x1d.shape != (n,) or x2d.shape != (n,):
        raise ValueError("reference sampler returned wrong shape")

    time_part, atan_part = _disturbance_arrays(cfg.disturbance, n, cfg.dt)
    if cfg.load is None:
        f_load = np.zeros(n)
    else:
        f_load = np.ascontiguousarray(cfg.load.sample(n, cfg.dt),
                                      dtype=float)
    noise = (np.zeros(n) if cfg.noise is None
             else np.ascontiguousarray(cfg.noise.sample(n), dtype=float))

    pp = _pack_params(cfg.params)
    ob = _pack_observer(cfg.observer, cfg.feed_load_to_observer,
                        cfg.observer_current == "measured")
    ct = _pack_control(cfg.gains, cfg.limits, cfg.a1_ref_sign)
    x_init = np.array(cfg.x0.as_tuple(), dtype=float)
    xhat_init = np.array(cfg.xhat0, dtype=float)
    th_init = np.array(cfg.theta0, dtype=float)
    unc = np.array(cfg.disturbance.uncertainty_scale, dtype=float)

    dist_coef = cfg.disturbance.row_coefficients(cfg.params)

    n_rows = (n + cfg.trace_stride - 1) // cfg.trace_stride
    out = np.empty((n_rows, kernels.N_COLS))
    status, rows, stop_step = kernels.simulate_loop(
        n, cfg.dt, pp, ob, ct, x_init, xhat_init, float(cfg.eta0),
        th_init, x1d, x2d, time_part, atan_part, dist_coef, unc, f_load,
        noise, float(cfg.divergence_guard), cfg.trace_stride, out)

    trace = {name: out[:rows, i].copy()
             for i, name in enumerate(TRACE_COLUMNS)}
    diverged = status == 1
    metrics = compute_metrics(trace, threshold=cfg.convergence_threshold,
                              diverged=diverged)
    return SimResult(trace=trace, metrics=metrics, diverged=diverged,
                     stop_step=stop_step if diverged else None,
                     backend=kernels.BACKEND)


# ---------------------------------------------------------------------------
# trace I/O
# ---------------------------------------------------------------------------

def trace_to_csv(trace: Mapping[str, np.ndarray], path) -> None:
    """Write the fixed-column trace; floats use shortest round-trip
    text so identical runs give identical bytes."""
    missing = [c for c in TRACE_COLUMNS if c not in trace]
    if missing:
        raise ValueError("trace is missing columns: " + ", ".join(missing))
    cols = [np.asarray(trace[c]) for c in TRACE_COLUMNS]
    n = cols[0].shape[0]
    for c in cols:
        if c.shape != (n,):
            raise ValueError("trace columns are not aligned")
    sat_idx = TRACE_COLUMNS.index("sat_flags")
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        for i in range(n):
            parts = []
            for j, c in enumerate(cols):
                v = float(c[i])
                parts.append(str(int(v)) if j == sat_idx else repr(v))
            fh.write(",".join(parts) + "\n")


def read_trace_csv(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError("empty trace file") from None
        rows = [[float(v) for v in row] for row in reader if row]
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        data = data.reshape(0, len(header))
    if data.shape[1] != len(header):
        raise ValueError("ragged trace file")
    return {name: data[:, i].copy() for i, name in enumerate(header)}

"""JSON scenario and trajectory-problem descriptions.

A scenario document carries everything one closed-loop run needs:
plant constants, controller gains, observer setup, reference source,
disturbance/load/noise inputs, initial conditions and output caps.
All values are SI; the few suffixed parameter keys (`_mh`,
`_n_per_um`) are converted at the boundary by params_from_dict and
never travel further.

Validation is strict: unknown fields are rejected, and every error
names the JSON path of the offending field (`disturbance.d2[1].lo`)
so a failing `validate` run points at the exact line to fix.
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from . import sim
from .control import ControlLimits, RsbaGains
from .observer import ObserverConfig
from .params import EmlaParams, PARAM_SETS, params_from_dict
from .trajectory import (BsplineCurve, LoadOracle, TrajectoryConstraints,
                         load_curve)

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "load_scenario",
    "scenario_from_dict",
    "load_trajectory_problem",
    "trajectory_problem_from_dict",
    "read_json",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Schema violation; `path` is the JSON path of the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path or "<root>"
        super().__init__(f"{self.path}: {message}")


def read_json(path) -> dict:
    """Parse a JSON file, reporting the parse location on failure."""
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            "<file>", f"malformed JSON at line {exc.lineno} column "
            f"{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "top level must be a JSON object")
    return doc


# ---------------------------------------------------------------------------
# field access helpers
# ---------------------------------------------------------------------------

def _join(path: str, key) -> str:
    if isinstance(key, int):
        return f"{path}[{key}]"
    return f"{path}.{key}" if path else str(key)


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _number(doc: dict, path: str, key: str, default=None, *,
            minimum=None, positive=False, required=False) -> float:
    where = _join(path, key)
    if key not in doc:
        if required:
            raise ConfigError(where, "required field is missing")
        return default
    v = doc[key]
    if not _is_number(v):
        raise ConfigError(where, f"expected a number, got {type(v).__name__}")
    v = float(v)
    if not math.isfinite(v):
        raise ConfigError(where, "must be finite")
    if positive and v <= 0.0:
        raise ConfigError(where, "must be > 0")
    if minimum is not None and v < minimum:
        raise ConfigError(where, f"must be >= {minimum}")
    return v


def _integer(doc: dict, path: str, key: str, default=None, *,
             minimum=None, required=False) -> int:
    where = _join(path, key)
    if key not in doc:
        if required:
            raise ConfigError(where, "required field is missing")
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(where, "expected an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(where, f"must be >= {minimum}")
    return v


def _boolean(doc: dict, path: str, key: str, default=None) -> bool:
    where = _join(path, key)
    if key not in doc:
        return default
    if not isinstance(doc[key], bool):
        raise ConfigError(where, "expected true or false")
    return doc[key]


def _string(doc: dict, path: str, key: str, default=None, *,
            choices=None, required=False) -> str:
    where = _join(path, key)
    if key not in doc:
        if required:
            raise ConfigError(where, "required field is missing")
        return default
    v = doc[key]
    if not isinstance(v, str):
        raise ConfigError(where, "expected a string")
    if choices is not None and v not in choices:
        raise ConfigError(where, f"must be one of {sorted(choices)}")
    return v


def _vector(doc: dict, path: str, key: str, length=None, default=None, *,
            required=False) -> list:
    where = _join(path, key)
    if key not in doc:
        if required:
            raise ConfigError(where, "required field is missing")
        return default
    v = doc[key]
    if not isinstance(v, list):
        raise ConfigError(where, "expected a list of numbers")
    for i, item in enumerate(v):
        if not _is_number(item):
            raise ConfigError(_join(where, i), "expected a number")
        if not math.isfinite(float(item)):
            raise ConfigError(_join(where, i), "must be finite")
    if length is not None and len(v) != length:
        raise ConfigError(where, f"expected exactly {length} entries, "
                          f"got {len(v)}")
    return [float(x) for x in v]


def _matrix2(doc: dict, path: str, key: str, *, required=False):
    where = _join(path, key)
    if key not in doc:
        if required:
            raise ConfigError(where, "required field is missing")
        return None
    v = doc[key]
    if (not isinstance(v, list) or len(v) != 2
            or any(not isinstance(r, list) or len(r) != 2 for r in v)):
        raise ConfigError(where, "expected a 2x2 matrix (list of two "
                          "2-entry rows)")
    out = np.empty((2, 2))
    for i, row in enumerate(v):
        for j, item in enumerate(row):
            if not _is_number(item):
                raise ConfigError(_join(_join(where, i), j),
                                  "expected a number")
            out[i, j] = float(item)
    if not np.all(np.isfinite(out)):
        raise ConfigError(where, "entries must be finite")
    return out


def _subdoc(doc: dict, path: str, key: str, *, required=False):
    where = _join(path, key)
    if key not in doc:
        if required:
            raise ConfigError(where, "required field is missing")
        return None
    if not isinstance(doc[key], dict):
        raise ConfigError(where, "expected an object")
    return doc[key]


def _reject_unknown(doc: dict, path: str, known) -> None:
    for key in doc:
        if key not in known:
            raise ConfigError(_join(path, key), "unknown field")


def _resolve(base_dir, rel) -> str:
    if os.path.isabs(rel):
        return rel
    return os.path.join(base_dir, rel)


# ---------------------------------------------------------------------------
# scenario sections
# ---------------------------------------------------------------------------

def _build_params(doc: dict, path: str) -> EmlaParams:
    joint = _string(doc, "", "joint", choices=set(PARAM_SETS))
    sub = _subdoc(doc, "", "params")
    if sub is None:
        if joint is None:
            raise ConfigError("params", "required field is missing "
                              "(give `params` or a `joint` name)")
        return PARAM_SETS[joint]()
    try:
        return params_from_dict(sub)
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from None


def _build_gains(doc: dict, path: str) -> RsbaGains:
    sub = _subdoc(doc, path, "gains", required=True)
    where = _join(path, "gains")
    _reject_unknown(sub, where, {"beta", "zeta", "delta", "sigma"})
    vals = {}
    for key in ("beta", "zeta", "delta", "sigma"):
        vals[key] = _vector(sub, where, key, length=4, required=True)
        for i, v in enumerate(vals[key]):
            if v <= 0.0:
                raise ConfigError(_join(_join(where, key), i), "must be > 0")
    return RsbaGains(**vals)


def _build_observer(doc: dict, path: str) -> ObserverConfig:
    sub = _subdoc(doc, path, "observer", required=True)
    where = _join(path, "observer")
    _reject_unknown(sub, where, {"alpha", "p", "q", "ell", "m0", "m_lambda"})
    alpha = np.array(_vector(sub, where, "alpha", length=2, required=True))
    p_mat = _matrix2(sub, where, "p", required=True)
    q_mat = _matrix2(sub, where, "q")
    if q_mat is None:
        # default Q from the Lyapunov identity at the given (alpha, p)
        a_bar = np.array([[-alpha[0], 1.0], [-alpha[1], 0.0]])
        q_mat = -(a_bar.T @ p_mat + p_mat @ a_bar)
    kw = dict(
        ell=_number(sub, where, "ell", 1.0, positive=True),
        m0=_number(sub, where, "m0", 200.0, positive=True),
        m_lambda=_number(sub, where, "m_lambda", 1e-3, positive=True),
    )
    try:
        return ObserverConfig(alpha=alpha, p_mat=p_mat, q_mat=q_mat, **kw)
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def _build_curve(sub: dict, where: str, base_dir) -> BsplineCurve:
    rel = _string(sub, where, "curve_file", required=True)
    path = _resolve(base_dir, rel)
    if not os.path.exists(path):
        raise ConfigError(_join(where, "curve_file"),
                          f"file not found: {path}")
    try:
        return load_curve(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(_join(where, "curve_file"), str(exc)) from None


_REFERENCE_FIELDS = {
    "constant": {"kind", "value"},
    "quintic": {"kind", "waypoints", "segment_duration"},
    "spline": {"kind", "curve_file", "joint_index"},
    "bridged_spline": {"kind", "curve_file", "joint_index",
                       "start_position", "bridge_duration"},
    "table": {"kind", "file", "times", "positions", "velocities"},
}


def _build_reference(doc: dict, path: str, base_dir, x0_pos: float):
    sub = _subdoc(doc, path, "reference", required=True)
    where = _join(path, "reference")
    kind = _string(sub, where, "kind", required=True,
                   choices=set(_REFERENCE_FIELDS))
    _reject_unknown(sub, where, _REFERENCE_FIELDS[kind])
    if kind == "constant":
        return sim.ConstantReference(
            _number(sub, where, "value", required=True))
    if kind == "quintic":
        wp = sub.get("waypoints")
        wp_where = _join(where, "waypoints")
        if (not isinstance(wp, list) or len(wp) < 2
                or any(not isinstance(r, list) or len(r) != 2 for r in wp)):
            raise ConfigError(wp_where, "expected >= 2 [position, "
                              "dwell_s] rows")
        rows = []
        for i, (pos, dwell) in enumerate(wp):
            if not (_is_number(pos) and _is_number(dwell)):
                raise ConfigError(_join(wp_where, i), "expected numbers")
            if dwell < 0.0:
                raise ConfigError(_join(_join(wp_where, i), 1),
                                  "dwell must be >= 0")
            rows.append((float(pos), float(dwell)))
        seg = sub.get("segment_duration")
        seg_where = _join(where, "segment_duration")
        if _is_number(seg):
            if seg <= 0.0:
                raise ConfigError(seg_where, "must be > 0")
            seg = float(seg)
        elif isinstance(seg, list):
            seg = _vector(sub, where, "segment_duration",
                          length=len(rows) - 1)
            for i, v in enumerate(seg):
                if v <= 0.0:
                    raise ConfigError(_join(seg_where, i), "must be > 0")
        else:
            raise ConfigError(seg_where, "required field is missing "
                              "(number or one number per leg)")
        return sim.QuinticReference(waypoints=tuple(rows),
                                    segment_duration=seg)
    if kind in ("spline", "bridged_spline"):
        curve = _build_curve(sub, where, base_dir)
        joint = _integer(sub, where, "joint_index", 0, minimum=0)
        if joint >= curve.n_joints:
            raise ConfigError(_join(where, "joint_index"),
                              f"curve has {curve.n_joints} joints")
        if kind == "spline":
            return sim.SplineReference(curve=curve, joint=joint)
        start = _number(sub, where, "start_position", x0_pos)
        tb = _number(sub, where, "bridge_duration", required=True,
                     positive=True)
        return sim.BridgedSplineReference(curve=curve, start_position=start,
                                          bridge_duration=tb, joint=joint)
    # table
    if "file" in sub:
        fpath = _resolve(base_dir, _string(sub, where, "file"))
        if not os.path.exists(fpath):
            raise ConfigError(_join(where, "file"),
                              f"file not found: {fpath}")
        try:
            return sim.TableReference.from_csv(fpath)
        except ValueError as exc:
            raise ConfigError(_join(where, "file"), str(exc)) from None
    times = _vector(sub, where, "times", required=True)
    positions = _vector(sub, where, "positions", required=True)
    velocities = _vector(sub, where, "velocities")
    try:
        return sim.TableReference(
            times=tuple(times), positions=tuple(positions),
            velocities=None if velocities is None else tuple(velocities))
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


_TERM_FIELDS = {
    "sin": {"kind", "amplitude", "frequency", "phase"},
    "cos": {"kind", "amplitude", "frequency", "phase"},
    "arctan_decay": {"kind", "amplitude", "decay"},
    "uniform": {"kind", "lo", "hi", "seed"},
    "constant": {"kind", "value"},
    "profile": {"kind", "times", "values"},
}


def _build_term(item, where: str):
    if not isinstance(item, dict):
        raise ConfigError(where, "expected an object")
    kind = _string(item, where, "kind", required=True,
                   choices=set(_TERM_FIELDS))
    _reject_unknown(item, where, _TERM_FIELDS[kind])
    if kind in ("sin", "cos"):
        return sim.HarmonicTerm(
            amplitude=_number(item, where, "amplitude", required=True),
            frequency=_number(item, where, "frequency", required=True),
            phase=_number(item, where, "phase", 0.0),
            cosine=(kind == "cos"))
    if kind == "arctan_decay":
        return sim.ArctanDecayTerm(
            amplitude=_number(item, where, "amplitude", required=True),
            decay=_number(item, where, "decay", required=True))
    if kind == "uniform":
        lo = _number(item, where, "lo", required=True)
        hi = _number(item, where, "hi", required=True)
        if hi < lo:
            raise ConfigError(_join(where, "hi"), "must be >= lo")
        return sim.UniformRandomTerm(
            lo=lo, hi=hi, seed=_integer(item, where, "seed", required=True,
                                        minimum=0))
    if kind == "constant":
        return sim.ConstantTerm(_number(item, where, "value", required=True))
    times = _vector(item, where, "times", required=True)
    values = _vector(item, where, "values", required=True)
    try:
        return sim.ProfileTerm(times=tuple(times), values=tuple(values))
    except ValueError as exc:
        raise ConfigError(where, str(exc)) from None


def _build_disturbance(doc: dict, path: str) -> sim.DisturbanceSpec:
    sub = _subdoc(doc, path, "disturbance")
    if sub is None:
        return sim.DisturbanceSpec()
    where = _join(path, "disturbance")
    _reject_unknown(sub, where,
                    {"d1", "d2", "d3", "d4", "uncertainty_scale", "units"})
    channels = {}
    for name in ("d1", "d2", "d3", "d4"):
        terms = sub.get(name, [])
        ch_where = _join(where, name)
        if not isinstance(terms, list):
            raise ConfigError(ch_where, "expected a list of terms")
        channels[name] = tuple(
            _build_term(item, _join(ch_where, i))
            for i, item in enumerate(terms))
    scale = _vector(sub, where, "uncertainty_scale", length=4,
                    default=[0.0, 0.0, 0.0, 0.0])
    units = _string(sub, where, "units", "physical",
                    choices={"physical", "row"})
    return sim.DisturbanceSpec(uncertainty_scale=tuple(scale), units=units,
                               **channels)


_LOAD_FIELDS = {
    "constant": {"kind", "value"},
    "staircase": {"kind", "times", "values"},
    "profile": {"kind", "times", "values"},
    "profile_csv": {"kind", "file", "hold"},
    "reference_oracle": {"kind", "m_eff", "b_eff", "g_eff", "rate_hz"},
}


def _build_load(doc: dict, path: str, base_dir, reference, duration):
    sub = _subdoc(doc, path, "load")
    if sub is None:
        return None
    where = _join(path, "load")
    kind = _string(sub, where, "kind", required=True,
                   choices=set(_LOAD_FIELDS))
    _reject_unknown(sub, where, _LOAD_FIELDS[kind])
    if kind == "constant":
        return sim.ConstantLoad(_number(sub, where, "value", required=True))
    if kind in ("staircase", "profile"):
        times = _vector(sub, where, "times", required=True)
        values = _vector(sub, where, "values", required=True)
        try:
            return sim.ProfileLoad(times=tuple(times), values=tuple(values),
                                   hold=(kind == "staircase"))
        except ValueError as exc:
            raise ConfigError(where, str(exc)) from None
    if kind == "profile_csv":
        fpath = _resolve(base_dir, _string(sub, where, "file",
                                           required=True))
        if not os.path.exists(fpath):
            raise ConfigError(_join(where, "file"),
                              f"file not found: {fpath}")
        return sim.ProfileLoad.from_csv(
            fpath, hold=_boolean(sub, where, "hold", True))
    # reference_oracle: affine load evaluated along the commanded
    # reference kinematics, tabulated at rate_hz
    m_eff = _number(sub, where, "m_eff", required=True, minimum=0.0)
    b_eff = _number(sub, where, "b_eff", required=True, minimum=0.0)
    g_eff = _number(sub, where, "g_eff", required=True)
    rate = _number(sub, where, "rate_hz", 1000.0, positive=True)
    step = 1.0 / rate
    n = int(round(duration / step)) + 1
    ts = np.arange(n) * step
    x1d, x2d = reference.sample(n, step)
    qdd = np.gradient(x2d, ts)
    force = m_eff * qdd + b_eff * x2d + g_eff
    return sim.ProfileLoad(times=tuple(ts), values=tuple(force), hold=False)


def _build_noise(doc: dict, path: str):
    sub = _subdoc(doc, path, "noise")
    if sub is None:
        return None
    where = _join(path, "noise")
    _reject_unknown(sub, where, {"kind", "scale", "seed"})
    return sim.NoiseSpec(
        kind=_string(sub, where, "kind", required=True,
                     choices={"uniform", "gaussian"}),
        scale=_number(sub, where, "scale", required=True, minimum=0.0),
        seed=_integer(sub, where, "seed", required=True, minimum=0))


def _build_limits(doc: dict, path: str):
    sub = _subdoc(doc, path, "limits")
    if sub is None:
        return None
    where = _join(path, "limits")
    _reject_unknown(sub, where, {"i_q_max", "u_max"})
    iq = _number(sub, where, "i_q_max", positive=True)
    um = _number(sub, where, "u_max", positive=True)
    return ControlLimits(i_q_max=iq, u_max=um)


def _reseed(obj, counter):
    """Stable replacement seed for one seeded input site."""
    if isinstance(obj, sim.UniformRandomTerm):
        return sim.UniformRandomTerm(lo=obj.lo, hi=obj.hi,
                                     seed=counter)
    return sim.NoiseSpec(kind=obj.kind, scale=obj.scale, seed=counter)


def _apply_seed_override(disturbance, noise, seed):
    site = 0
    channels = []
    for terms in disturbance.channels():
        new_terms = []
        for term in terms:
            if isinstance(term, sim.UniformRandomTerm):
                term = _reseed(term, seed + site)
                site += 1
            new_terms.append(term)
        channels.append(tuple(new_terms))
    disturbance = sim.DisturbanceSpec(
        d1=channels[0], d2=channels[1], d3=channels[2], d4=channels[3],
        uncertainty_scale=disturbance.uncertainty_scale,
        units=disturbance.units)
    if noise is not None:
        noise = _reseed(noise, seed + site)
    return disturbance, noise


_SCENARIO_FIELDS = {
    "schema_version", "name", "joint", "params", "gains", "observer",
    "reference", "duration_s", "dt_s", "disturbance", "load", "noise",
    "initial", "limits", "options",
}

_OPTION_FIELDS = {
    "a1_ref_sign", "feed_load_to_observer", "observer_current",
    "divergence_guard", "trace_stride", "convergence_threshold",
}


def scenario_from_dict(doc: dict, base_dir=".",
                       seed: int | None = None) -> sim.ScenarioConfig:
    """Validate a scenario document and build the engine config.

    `seed`, when given, replaces the seed of every seeded input (random
    disturbance terms, sensor noise) with values derived from it, in
    document order.
    """
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "top level must be a JSON object")
    _reject_unknown(doc, "", _SCENARIO_FIELDS)
    version = _integer(doc, "", "schema_version", required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version",
                          f"unsupported version {version} "
                          f"(this build reads {SCHEMA_VERSION})")
    name = _string(doc, "", "name", "scenario")

    params = _build_params(doc, "")
    gains = _build_gains(doc, "")
    observer = _build_observer(doc, "")

    init = _subdoc(doc, "", "initial")
    x = [0.0, 0.0, 0.0, 0.0]
    xhat = None
    eta0 = 1.0
    theta0 = [0.0, 0.0, 0.0, 0.0]
    if init is not None:
        _reject_unknown(init, "initial",
                        {"x", "x_hat", "eta_hat", "theta_hat"})
        x = _vector(init, "initial", "x", length=4, default=x)
        xhat = _vector(init, "initial", "x_hat", length=2)
        eta0 = _number(init, "initial", "eta_hat", 1.0, positive=True)
        theta0 = _vector(init, "initial", "theta_hat", length=4,
                         default=theta0)
        for i, v in enumerate(theta0):
            if v < 0.0:
                raise ConfigError(f"initial.theta_hat[{i}]",
                                  "must be >= 0")
    if xhat is None:
        xhat = [x[0], x[1]]

    duration = _number(doc, "", "duration_s", required=True, positive=True)
    dt = _number(doc, "", "dt_s", 1e-4, positive=True)
    if duration < dt:
        raise ConfigError("duration_s", "must be >= dt_s")

    reference = _build_reference(doc, "", base_dir, x[0])
    disturbance = _build_disturbance(doc, "")
    load = _build_load(doc, "", base_dir, reference, duration)
    noise = _build_noise(doc, "")
    limits = _build_limits(doc, "")

    opts = _subdoc(doc, "", "options") or {}
    _reject_unknown(opts, "options", _OPTION_FIELDS)
    sign = _string(opts, "options", "a1_ref_sign", "paper",
                   choices={"paper", "feedforward"})
    threshold = None
    if "convergence_threshold" in opts:
        threshold = _number(opts, "options", "convergence_threshold",
                            positive=True)

    if seed is not None:
        disturbance, noise = _apply_seed_override(disturbance, noise, seed)

    from .params import JointState
    try:
        return sim.ScenarioConfig(
            params=params, gains=gains, observer=observer,
            reference=reference, duration=duration, dt=dt,
            disturbance=disturbance, load=load, noise=noise,
            x0=JointState(*x), xhat0=tuple(xhat), eta0=eta0,
            theta0=tuple(theta0), limits=limits,
            a1_ref_sign=-1.0 if sign == "paper" else 1.0,
            feed_load_to_observer=_boolean(opts, "options",
                                           "feed_load_to_observer", True),
            observer_current=_string(opts, "options", "observer_current",
                                     "measured",
                                     choices={"command", "measured"}),
            divergence_guard=_number(opts, "options", "divergence_guard",
                                     1e6, positive=True),
            trace_stride=_integer(opts, "options", "trace_stride", 1,
                                  minimum=1),
            convergence_threshold=threshold,
            name=name)
    except ValueError as exc:
        raise ConfigError("<root>", str(exc)) from None


def load_scenario(path, seed: int | None = None) -> sim.ScenarioConfig:
    return scenario_from_dict(read_json(path),
                              base_dir=os.path.dirname(os.path.abspath(path)),
                              seed=seed)


# ---------------------------------------------------------------------------
# trajectory problem documents
# ---------------------------------------------------------------------------

_TRAJ_FIELDS = {"schema_version", "name", "constraints", "oracle", "solver"}

_CONSTRAINT_KEYS = ("q_start", "q_end", "v_start", "v_end",
                    "q_lb", "q_ub", "v_lb", "v_ub", "f_lb", "f_ub")

_ORACLE_FIELDS = {
    "affine": {"kind", "m_eff", "b_eff", "g_eff"},
    "table": {"kind", "files"},
}

_SOLVER_FIELDS = {"degree", "num_ctrl", "per_joint", "optimize_horizon",
                  "num_collocation"}


def trajectory_problem_from_dict(doc: dict, base_dir="."):
    """Validate a trajectory document; returns (constraints, oracle,
    solver options dict, name)."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "top level must be a JSON object")
    _reject_unknown(doc, "", _TRAJ_FIELDS)
    version = _integer(doc, "", "schema_version", required=True)
    if version != SCHEMA_VERSION:
        raise ConfigError("schema_version",
                          f"unsupported version {version} "
                          f"(this build reads {SCHEMA_VERSION})")
    name = _string(doc, "", "name", "trajectory")

    cons_doc = _subdoc(doc, "", "constraints", required=True)
    _reject_unknown(cons_doc, "constraints",
                    set(_CONSTRAINT_KEYS) | {"t_max", "num_collocation"})
    first = _vector(cons_doc, "constraints", _CONSTRAINT_KEYS[0],
                    required=True)
    n = len(first)
    if n == 0:
        raise ConfigError("constraints.q_start", "must not be empty")
    vecs = {_CONSTRAINT_KEYS[0]: first}
    for key in _CONSTRAINT_KEYS[1:]:
        vecs[key] = _vector(cons_doc, "constraints", key, length=n,
                            required=True)
    t_max = _number(cons_doc, "constraints", "t_max", required=True,
                    positive=True)
    num_col = _integer(cons_doc, "constraints", "num_collocation", 101,
                       minimum=10)
    try:
        cons = TrajectoryConstraints(t_max=t_max, num_collocation=num_col,
                                     **vecs)
        cons.check_boundary_feasible()
    except ValueError as exc:
        raise ConfigError("constraints", str(exc)) from None

    oracle_doc = _subdoc(doc, "", "oracle", required=True)
    kind = _string(oracle_doc, "oracle", "kind", required=True,
                   choices=set(_ORACLE_FIELDS))
    _reject_unknown(oracle_doc, "oracle", _ORACLE_FIELDS[kind])
    if kind == "affine":
        oracle = LoadOracle(
            kind="affine",
            m_eff=_vector(oracle_doc, "oracle", "m_eff", length=n,
                          required=True),
            b_eff=_vector(oracle_doc, "oracle", "b_eff", length=n,
                          required=True),
            g_eff=_vector(oracle_doc, "oracle", "g_eff", length=n,
                          required=True))
    else:
        files = oracle_doc.get("files")
        if (not isinstance(files, list) or len(files) != n
                or any(not isinstance(f, str) for f in files)):
            raise ConfigError("oracle.files",
                              f"expected {n} file paths (one per joint)")
        paths = [_resolve(base_dir, f) for f in files]
        for i, p in enumerate(paths):
            if not os.path.exists(p):
                raise ConfigError(f"oracle.files[{i}]",
                                  f"file not found: {p}")
        oracle = LoadOracle.from_profile_csv(paths)

    solver_doc = _subdoc(doc, "", "solver") or {}
    _reject_unknown(solver_doc, "solver", _SOLVER_FIELDS)
    solver = dict(
        degree=_integer(solver_doc, "solver", "degree", 5, minimum=3),
        num_ctrl=_integer(solver_doc, "solver", "num_ctrl", 10, minimum=6),
        per_joint=_boolean(solver_doc, "solver", "per_joint", False),
        optimize_horizon=_boolean(solver_doc, "solver", "optimize_horizon",
                                  True),
    )
    return cons, oracle, solver, name


def load_trajectory_problem(path):
    return trajectory_problem_from_dict(
        read_json(path), base_dir=os.path.dirname(os.path.abspath(path)))

"""B-spline trajectory generation and direct-collocation optimization.

Joint trajectories are clamped B-spline curves q(t) = B(t) c evaluated
on a normalized parameter, optimized to minimize the integrated squared
delivered power

    J = 1/2 * sum_k dt_k * (v_L(t_k) . f_L(t_k))^2

subject to box constraints on position, velocity and force sampled at
collocation points, with endpoint position/velocity equalities encoded
exactly by pinning the outer control points. The load map (v_L, f_L) is
a pluggable oracle; built-ins cover an affine-inertial model and a
time-tabulated force profile.

Quintic (rest-to-rest fifth order) reference schedules for repetitive
point-to-point motion live here as well.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BsplineCurve", "TrajectoryConstraints", "LoadOracle", "QuinticSegment",
    "QuinticSchedule", "make_clamped_knots", "bspline_basis",
    "eval_trajectory", "collocation_cost", "optimize_trajectory",
    "quintic_reference", "workspace_pointcloud", "trajectory_to_csv",
]


# ---------------------------------------------------------------------------
# B-spline basis
# ---------------------------------------------------------------------------

def make_clamped_knots(num_ctrl: int, degree: int) -> np.ndarray:
    """Uniform clamped knot vector on [0, 1] for `num_ctrl` control points."""
    if num_ctrl < degree + 1:
        raise ValueError("need at least degree+1 control points")
    n_interior = num_ctrl - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    return np.concatenate([np.zeros(degree + 1), interior,
                           np.ones(degree + 1)])


def _order_rows(knots, degree, t):
    # Cox-de Boor triangle: rows of basis values for orders 0..degree.
    m = len(knots) - 1
    row = np.zeros(m)
    if t >= knots[-1]:
        # right-closed convention at the final span
        for i in range(m - 1, -1, -1):
            if knots[i] < knots[i + 1]:
                row[i] = 1.0
                break
    else:
        for i in range(m):
            if knots[i] <= t < knots[i + 1]:
                row[i] = 1.0
                break
    rows = [row]
    for p in range(1, degree + 1):
        prev = rows[-1]
        cur = np.zeros(m - p)
        for i in range(m - p):
            acc = 0.0
            den_l = knots[i + p] - knots[i]
            if den_l > 0.0:
                acc += (t - knots[i]) / den_l * prev[i]
            den_r = knots[i + p + 1] - knots[i + 1]
            if den_r > 0.0:
                acc += (knots[i + p + 1] - t) / den_r * prev[i + 1]
            cur[i] = acc
        rows.append(cur)
    return rows


def _derivative_row(lower, knots, p):
    # d/dt N_{i,p} in terms of order p-1 values.
    n = len(lower) - 1
    out = np.zeros(n)
    for i in range(n):
        acc = 0.0
        den_l = knots[i + p] - knots[i]
        if den_l > 0.0:
            acc += p / den_l * lower[i]
        den_r = knots[i + p + 1] - knots[i + 1]
        if den_r > 0.0:
            acc -= p / den_r * lower[i + 1]
        out[i] = acc
    return out


def bspline_basis(t_norm: float, knots, degree: int):
    """Basis row and its first two derivative rows at one parameter.

    Parameters
    ----------
    t_norm : float
        Normalized parameter; values outside [0, 1] are clamped and
        reported through the returned flag.
    knots : array_like
        Clamped non-decreasing knot vector on [0, 1].
    degree : int
        Spline degree, at least 3.

    Returns
    -------
    (basis, d1, d2, clamped) where the rows have one entry per control
    point and `clamped` tells whether t_norm was clamped into range.
    Derivatives are with respect to the normalized parameter; divide by
    t_final and t_final**2 for real-time rates.
    """
    knots = np.asarray(knots, dtype=float)
    if degree < 3:
        raise ValueError("degree must be >= 3")
    clamped = bool(t_norm < 0.0 or t_norm > 1.0)
    t = min(max(float(t_norm), 0.0), 1.0)
    rows = _order_rows(knots, degree, t)
    n = len(knots) - degree - 1
    basis = rows[degree][:n]
    d1_full = _derivative_row(rows[degree - 1], knots, degree)
    # second derivative: differentiate the order p-1 row first
    dlow = _derivative_row(rows[degree - 2], knots, degree - 1)
    d2_full = np.zeros(len(rows[degree - 1]) - 1)
    for i in range(len(d2_full)):
        acc = 0.0
        den_l = knots[i + degree] - knots[i]
        if den_l > 0.0:
            acc += degree / den_l * dlow[i]
        den_r = knots[i + degree + 1] - knots[i + 1]
        if den_r > 0.0:
            acc -= degree / den_r * dlow[i + 1]
        d2_full[i] = acc
    return basis, d1_full[:n], d2_full[:n], clamped


def basis_matrices(grid_norm, knots, degree):
    """Stacked (B, dB, ddB) rows over a normalized parameter grid."""
    rows = [bspline_basis(t, knots, degree) for t in grid_norm]
    b = np.array([r[0] for r in rows])
    d1 = np.array([r[1] for r in rows])
    d2 = np.array([r[2] for r in rows])
    return b, d1, d2


# ---------------------------------------------------------------------------
# Curve container and evaluation
# ---------------------------------------------------------------------------

@dataclass
class BsplineCurve:
    degree: int
    knots: np.ndarray
    control_points: np.ndarray  # (num_ctrl, n_joints)
    t_final: float

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.control_points = np.atleast_2d(
            np.asarray(self.control_points, dtype=float))
        if self.control_points.shape[0] == 1 and \
                len(self.knots) - self.degree - 1 > 1:
            self.control_points = self.control_points.T
        n = len(self.knots) - self.degree - 1
        if self.control_points.shape[0] != n:
            raise ValueError("control point count does not match knots")
        if self.t_final <= 0.0:
            raise ValueError("t_final must be > 0")

    @property
    def num_ctrl(self):
        return self.control_points.shape[0]

    @property
    def n_joints(self):
        return self.control_points.shape[1]


def eval_trajectory(curve: BsplineCurve, t: float):
    """(q, qdot, qddot) at time t in [0, t_final]."""
    if not 0.0 <= t <= curve.t_final:
        raise ValueError(f"t={t} outside [0, {curve.t_final}]")
    b, d1, d2, _ = bspline_basis(t / curve.t_final, curve.knots, curve.degree)
    q = b @ curve.control_points
    qd = d1 @ curve.control_points / curve.t_final
    qdd = d2 @ curve.control_points / curve.t_final**2
    return q, qd, qdd


def sample_trajectory(curve: BsplineCurve, times):
    """Vectorized eval over an array of times (q, qd, qdd arrays)."""
    tn = np.asarray(times, dtype=float) / curve.t_final
    b, d1, d2 = basis_matrices(tn, curve.knots, curve.degree)
    return (b @ curve.control_points,
            d1 @ curve.control_points / curve.t_final,
            d2 @ curve.control_points / curve.t_final**2)


# ---------------------------------------------------------------------------
# Load oracles
# ---------------------------------------------------------------------------

class LoadOracle:
    """Maps joint motion to the actuator-side (v_L, f_L) pair.

    kind "affine": f = m_eff*qdd + b_eff*qd + g_eff per joint.
    kind "table":  f interpolated from a (t, f_l) table per joint,
                   flat extrapolation outside the tabulated range.
    kind "custom": any callable (t, q, qd, qdd) -> (v, f); gradients
                   fall back to finite differences in the optimizer.

    In every case v_L = qd (prismatic joints driven directly).
    """

    def __init__(self, kind="affine", m_eff=None, b_eff=None, g_eff=None,
                 tables=None, fn=None):
        self.kind = kind
        if kind == "affine":
            self.m_eff = np.atleast_1d(np.asarray(m_eff, dtype=float))
            self.b_eff = np.atleast_1d(np.asarray(b_eff, dtype=float))
            self.g_eff = np.atleast_1d(np.asarray(g_eff, dtype=float))
        elif kind == "table":
            # tables: list of (t_array, f_array) per joint
            self.tables = [(np.asarray(t, float), np.asarray(f, float))
                           for t, f in tables]
        elif kind == "custom":
            self.fn = fn
        else:
            raise ValueError(f"unknown oracle kind: {kind}")

    @classmethod
    def from_profile_csv(cls, paths):
        """Table oracle from CSV files with columns t, f_l."""
        tables = []
        for path in paths:
            ts, fs = [], []
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or \
                        {"t", "f_l"} - set(reader.fieldnames):
                    raise ValueError(f"{path}: expected columns t, f_l")
                for row in reader:
                    ts.append(float(row["t"]))
                    fs.append(float(row["f_l"]))
            tables.append((np.array(ts), np.array(fs)))
        return cls(kind="table", tables=tables)

    def __call__(self, t, q, qd, qdd):
        q = np.atleast_1d(q)
        qd = np.atleast_1d(qd)
        qdd = np.atleast_1d(qdd)
        if self.kind == "affine":
            f = self.m_eff * qdd + self.b_eff * qd + self.g_eff
        elif self.kind == "table":
            f = np.array([np.interp(t, tt, ff) for tt, ff in self.tables])
        else:
            v, f = self.fn(t, q, qd, qdd)
            return np.atleast_1d(v), np.atleast_1d(f)
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(qd))):
            raise ValueError("load oracle produced non-finite values")
        return qd, f


# ---------------------------------------------------------------------------
# Collocation cost
# ---------------------------------------------------------------------------

def _grid_weights(grid):
    grid = np.asarray(grid, dtype=float)
    if len(grid) < 2:
        raise ValueError("need at least two collocation points")
    dt = np.diff(grid)
    return np.concatenate([[dt[0]], dt])


def collocation_cost(curve: BsplineCurve, oracle: LoadOracle, grid,
                     per_joint: bool = False) -> float:
    """J = 1/2 * sum_k dt_k * (v . f)^2 over the collocation grid.

    With per_joint=True the power is squared joint by joint before
    summation instead of squaring the total.
    """
    w = _grid_weights(grid)
    q, qd, qdd = sample_trajectory(curve, grid)
    total = 0.0
    for k, t in enumerate(grid):
        try:
            v, f = oracle(t, q[k], qd[k], qdd[k])
        except Exception as exc:
            raise RuntimeError(
                f"load oracle failed at grid index {k}") from exc
        if per_joint:
            total += w[k] * float(np.sum((v * f) ** 2))
        else:
            total += w[k] * float(np.dot(v, f)) ** 2
    return 0.5 * total


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------

@dataclass
class TrajectoryConstraints:
    q_start: np.ndarray
    q_end: np.ndarray
    v_start: np.ndarray
    v_end: np.ndarray
    q_lb: np.ndarray
    q_ub: np.ndarray
    v_lb: np.ndarray
    v_ub: np.ndarray
    f_lb: np.ndarray
    f_ub: np.ndarray
    t_max: float
    num_collocation: int = 101

    def __post_init__(self):
        for name in ("q_start", "q_end", "v_start", "v_end", "q_lb", "q_ub",
                     "v_lb", "v_ub", "f_lb", "f_ub"):
            setattr(self, name,
                    np.atleast_1d(np.asarray(getattr(self, name), float)))
        if self.num_collocation < 10:
            raise ValueError("num_collocation must be >= 10")
        if self.t_max <= 0.0:
            raise ValueError("t_max must be > 0")
        for lo, hi, tag in ((self.q_lb, self.q_ub, "q"),
                            (self.v_lb, self.v_ub, "v"),
                            (self.f_lb, self.f_ub, "f")):
            if np.any(lo > hi):
                raise ValueError(f"{tag}_lb exceeds {tag}_ub")

    @property
    def n_joints(self):
        return len(self.q_start)

    def check_boundary_feasible(self):
        if np.any(self.q_start < self.q_lb) or np.any(self.q_start > self.q_ub):
            raise ValueError("infeasible boundary conditions: q_start "
                             "outside the position box")
        if np.any(self.q_end < self.q_lb) or np.any(self.q_end > self.q_ub):
            raise ValueError("infeasible boundary conditions: q_end "
                             "outside the position box")
        if np.any(self.v_start < self.v_lb) or np.any(self.v_start > self.v_ub):
            raise ValueError("infeasible boundary conditions: v_start "
                             "outside the velocity box")
        if np.any(self.v_end < self.v_lb) or np.any(self.v_end > self.v_ub):
            raise ValueError("infeasible boundary conditions: v_end "
                             "outside the velocity box")


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------

def _pin_endpoints(ctrl, cons: TrajectoryConstraints, knots, degree, t_m):
    """Enforce endpoint position/velocity equalities on the control net."""
    n = ctrl.shape[0]
    span0 = knots[degree + 1] - knots[1]
    span1 = knots[-2] - knots[-degree - 2]
    ctrl[0] = cons.q_start
    ctrl[-1] = cons.q_end
    # clamped-endpoint derivative: qdot(0) = degree/span0 * (c1-c0) / t_m
    ctrl[1] = ctrl[0] + cons.v_start * t_m * span0 / degree
    ctrl[n - 2] = ctrl[-1] - cons.v_end * t_m * span1 / degree
    return ctrl


class _Problem:
    """Fixed-horizon penalty subproblem over the free control points."""

    def __init__(self, cons, oracle, knots, degree, num_ctrl, t_m,
                 per_joint=False):
        self.cons = cons
        self.oracle = oracle
        self.knots = knots
        self.degree = degree
        self.num_ctrl = num_ctrl
        self.t_m = t_m
        self.per_joint = per_joint
        self.grid = np.linspace(0.0, t_m, cons.num_collocation)
        gn = self.grid / t_m
        self.B, self.D1, self.D2 = basis_matrices(gn, knots, degree)
        self.w = _grid_weights(self.grid)
        self.na = cons.n_joints
        if oracle.kind == "affine":
            # scalar oracle params apply to every joint
            oracle.m_eff = np.broadcast_to(oracle.m_eff, (self.na,)).copy()
            oracle.b_eff = np.broadcast_to(oracle.b_eff, (self.na,)).copy()
            oracle.g_eff = np.broadcast_to(oracle.g_eff, (self.na,)).copy()

    def assemble(self, z):
        ctrl = np.zeros((self.num_ctrl, self.na))
        ctrl = _pin_endpoints(ctrl, self.cons, self.knots, self.degree,
                              self.t_m)
        ctrl[2:self.num_ctrl - 2] = z.reshape(self.num_ctrl - 4, self.na)
        return ctrl

    def motion(self, ctrl):
        q = self.B @ ctrl
        v = self.D1 @ ctrl / self.t_m
        a = self.D2 @ ctrl / self.t_m**2
        return q, v, a

    def force(self, t_k, q_k, v_k, a_k):
        return self.oracle(t_k, q_k, v_k, a_k)

    def cost_and_grad(self, z):
        ctrl = self.assemble(z)
        q, v, a = self.motion(ctrl)
        grad_c = np.zeros_like(ctrl)
        total = 0.0
        fd = self.oracle.kind == "custom"
        for k in range(len(self.grid)):
            _, f = self.force(self.grid[k], q[k], v[k], a[k])
            wk = self.w[k]
            if self.per_joint:
                p = v[k] * f
                total += wk * float(np.sum(p * p))
                dp_df = v[k]
                dp_dv = f
                coef = wk * p  # one squared term per joint
            else:
                p = float(np.dot(v[k], f))
                total += wk * p * p
                dp_df = v[k]
                dp_dv = f
                coef = wk * p * np.ones(self.na)
            if fd:
                continue
            # d p_j / d c_i: through v and, for the affine oracle, f
            for j in range(self.na):
                gv = coef[j] * dp_dv[j] / self.t_m
                grad_c[:, j] += gv * self.D1[k]
                if self.oracle.kind == "affine":
                    gf = coef[j] * dp_df[j]
                    grad_c[:, j] += gf * (
                        self.oracle.m_eff[j] * self.D2[k] / self.t_m**2
                        + self.oracle.b_eff[j] * self.D1[k] / self.t_m)
        cost = 0.5 * total
        if fd:
            return cost, self._fd_grad(z, self._cost_only)
        return cost, grad_c[2:self.num_ctrl - 2].ravel()

    def _cost_only(self, z):
        ctrl = self.assemble(z)
        q, v, a = self.motion(ctrl)
        total = 0.0
        for k in range(len(self.grid)):
            _, f = self.force(self.grid[k], q[k], v[k], a[k])
            if self.per_joint:
                total += self.w[k] * float(np.sum((v[k] * f) ** 2))
            else:
                total += self.w[k] * float(np.dot(v[k], f)) ** 2
        return 0.5 * total

    @staticmethod
    def _fd_grad(z, fn, h=1e-6):
        g = np.zeros_like(z)
        for i in range(len(z)):
            zp = z.copy(); zp[i] += h
            zm = z.copy(); zm[i] -= h
            g[i] = (fn(zp) - fn(zm)) / (2 * h)
        return g

    def violations(self, z):
        """Signed constraint violations over the grid (positive = broken)."""
        ctrl = self.assemble(z)
        q, v, a = self.motion(ctrl)
        f = np.zeros_like(q)
        for k in range(len(self.grid)):
            _, f[k] = self.force(self.grid[k], q[k], v[k], a[k])
        c = self.cons
        parts = [np.maximum(0.0, q - c.q_ub), np.maximum(0.0, c.q_lb - q),
                 np.maximum(0.0, v - c.v_ub), np.maximum(0.0, c.v_lb - v),
                 np.maximum(0.0, f - c.f_ub), np.maximum(0.0, c.f_lb - f)]
        return parts, q, v, a, f

    def penalty_and_grad(self, z, weight):
        cost, grad = self.cost_and_grad(z)
        parts, q, v, a, f = self.violations(z)
        pen = sum(float(np.sum(p * p)) for p in parts)
        qub, qlb, vub, vlb, fub, flb = parts
        gp = np.zeros((self.num_ctrl, self.na))
        for j in range(self.na):
            gq = 2.0 * (qub[:, j] - qlb[:, j])
            gv = 2.0 * (vub[:, j] - vlb[:, j]) / self.t_m
            gf = 2.0 * (fub[:, j] - flb[:, j])
            gp[:, j] += self.B.T @ gq + self.D1.T @ gv
            if self.oracle.kind == "affine":
                gp[:, j] += (self.oracle.m_eff[j] * (self.D2.T @ gf)
                             / self.t_m**2
                             + self.oracle.b_eff[j] * (self.D1.T @ gf)
                             / self.t_m)
            elif self.oracle.kind == "custom":
                pass  # folded into the FD fallback below
        gpen = gp[2:self.num_ctrl - 2].ravel()
        if self.oracle.kind == "custom":
            gpen = self._fd_grad(
                z, lambda zz: sum(float(np.sum(p * p))
                                  for p in self.violations(zz)[0]))
        return cost + weight * pen, grad + weight * gpen, cost, pen

    def max_violation(self, z):
        parts, *_ = self.violations(z)
        return max(float(p.max()) if p.size else 0.0 for p in parts)


def _bfgs(fun_grad, z0, max_iter=200, gtol=1e-10):
    """Plain dense BFGS with Armijo backtracking."""
    z = z0.copy()
    n = len(z)
    h_inv = np.eye(n)
    f, g = fun_grad(z)
    n_iter = 0
    for _ in range(max_iter):
        n_iter += 1
        if np.linalg.norm(g) < gtol:
            break
        d = -h_inv @ g
        if np.dot(d, g) > 0:  # reset on loss of descent direction
            h_inv = np.eye(n)
            d = -g
        step = 1.0
        ok = False
        for _ in range(40):
            z_new = z + step * d
            f_new, g_new = fun_grad(z_new)
            if f_new <= f + 1e-4 * step * np.dot(g, d):
                ok = True
                break
            step *= 0.5
        if not ok:
            break
        s = z_new - z
        yv = g_new - g
        sy = np.dot(s, yv)
        if sy > 1e-12:
            rho_k = 1.0 / sy
            eye_m = np.eye(n)
            h_inv = (eye_m - rho_k * np.outer(s, yv)) @ h_inv @ \
                    (eye_m - rho_k * np.outer(yv, s)) + rho_k * np.outer(s, s)
        z, f, g = z_new, f_new, g_new
    return z, f, n_iter


def _pattern_search(fn, z0, step0=1e-3, shrink=0.5, max_iter=400,
                    tol=1e-12):
    """Coordinate pattern search fallback, derivative free."""
    z = z0.copy()
    f = fn(z)
    step = step0
    it = 0
    while step > tol and it < max_iter:
        improved = False
        for i in range(len(z)):
            for sgn in (1.0, -1.0):
                zc = z.copy()
                zc[i] += sgn * step
                fc = fn(zc)
                if fc < f:
                    z, f = zc, fc
                    improved = True
        if not improved:
            step *= shrink
        it += 1
    return z, f, it


def _solve_fixed_horizon(cons, oracle, knots, degree, num_ctrl, t_m,
                         per_joint, z0=None):
    prob = _Problem(cons, oracle, knots, degree, num_ctrl, t_m, per_joint)
    na = cons.n_joints
    if z0 is None:
        # straight-line seed through the free interior points
        frac = np.linspace(0.0, 1.0, num_ctrl)[2:num_ctrl - 2]
        z0 = (cons.q_start[None, :]
              + frac[:, None] * (cons.q_end - cons.q_start)[None, :]).ravel()
    seed_cost = prob._cost_only(z0)
    seed_viol = prob.max_violation(z0)
    best = (z0.copy(), seed_cost, seed_viol)
    z = z0.copy()
    weight = 1e3
    iters = 0
    for _ in range(10):
        def fg(zz):
            tot, grad, *_ = prob.penalty_and_grad(zz, weight)
            return tot, grad
        z, _, used = _bfgs(fg, z, max_iter=120)
        iters += used
        cost = prob._cost_only(z)
        viol = prob.max_violation(z)
        better = (viol <= 1e-6 and best[2] > 1e-6) or \
                 (viol <= 1e-6 and cost < best[1]) or \
                 (best[2] > 1e-6 and viol < best[2])
        if better:
            best = (z.copy(), cost, viol)
        if viol <= 1e-6:
            break
        weight *= 10.0
        if weight > 1e12:
            break
    if best[2] > 1e-6:
        # derivative-free fallback on the penalized objective
        def pfn_nograd(zz):
            c = prob._cost_only(zz)
            parts, *_ = prob.violations(zz)
            return c + weight * sum(float(np.sum(p * p)) for p in parts)
        z, _, extra = _pattern_search(pfn_nograd, z)
        iters += extra
        cost = prob._cost_only(z)
        viol = prob.max_violation(z)
        if viol < best[2] or (viol <= 1e-6 and cost < best[1]):
            best = (z.copy(), cost, viol)
    z_best, cost, viol = best
    # never return anything costlier than a feasible seed
    if seed_viol <= 1e-6 and cost > seed_cost:
        z_best, cost, viol = z0, seed_cost, seed_viol
    ctrl = prob.assemble(z_best)
    return ctrl, cost, viol, iters


def optimize_trajectory(cons: TrajectoryConstraints, oracle: LoadOracle,
                        seed_curve: BsplineCurve | None = None,
                        degree: int = 5, num_ctrl: int = 10,
                        per_joint: bool = False,
                        optimize_horizon: bool = True):
    """Minimize collocated squared power under box constraints.

    Returns (BsplineCurve, report) where the report carries iteration
    counts, the final cost, the worst constraint violation, the chosen
    horizon and a convergence flag. The horizon t_M is searched by
    golden section on [0.05*t_max, t_max] with the fixed-horizon penalty
    problem solved at each probe; equality boundary conditions hold
    exactly by construction.
    """
    cons.check_boundary_feasible()
    if num_ctrl < 6:
        raise ValueError("num_ctrl must be >= 6 to pin both endpoints")
    knots = make_clamped_knots(num_ctrl, degree)
    if seed_curve is not None:
        if seed_curve.num_ctrl != num_ctrl or seed_curve.degree != degree:
            raise ValueError("seed curve shape mismatch")
        z_seed = seed_curve.control_points[2:num_ctrl - 2].ravel()
    else:
        z_seed = None

    cache = {}

    def inner(t_m):
        key = round(float(t_m), 12)
        if key not in cache:
            cache[key] = _solve_fixed_horizon(
                cons, oracle, knots, degree, num_ctrl, t_m, per_joint,
                None if z_seed is None else z_seed.copy())
        return cache[key]

    if optimize_horizon:
        lo, hi = 0.05 * cons.t_max, cons.t_max
        invphi = (math.sqrt(5.0) - 1.0) / 2.0
        a, b = lo, hi
        c = b - invphi * (b - a)
        d = a + invphi * (b - a)
        fc, fd_ = inner(c)[1], inner(d)[1]
        while b - a > 1e-2 * cons.t_max:
            if fc < fd_:
                b, d, fd_ = d, c, fc
                c = b - invphi * (b - a)
                fc = inner(c)[1]
            else:
                a, c, fc = c, d, fd_
                d = a + invphi * (b - a)
                fd_ = inner(d)[1]
        candidates = [c, d, cons.t_max]
        t_m = min(candidates, key=lambda tm: inner(tm)[1])
    else:
        t_m = cons.t_max
    ctrl, cost, viol, iters = inner(t_m)
    curve = BsplineCurve(degree=degree, knots=knots, control_points=ctrl,
                         t_final=float(t_m))
    report = {
        "iterations": int(iters),
        "final_cost": float(cost),
        "max_violation": float(viol),
        "t_final": float(t_m),
        "converged": bool(viol <= 1e-6),
        "horizon_probes": len(cache),
    }
    return curve, report


# ---------------------------------------------------------------------------
# Quintic references
# ---------------------------------------------------------------------------

@dataclass
class QuinticSegment:
    """Rest-to-rest fifth-order segment from p0 to p1 over duration T."""

    p0: float
    p1: float
    duration: float

    def eval(self, t):
        tau = min(max(t / self.duration, 0.0), 1.0)
        s = 10.0 * tau**3 - 15.0 * tau**4 + 6.0 * tau**5
        ds = (30.0 * tau**2 - 60.0 * tau**3 + 30.0 * tau**4) / self.duration
        dd = (60.0 * tau - 180.0 * tau**2 + 120.0 * tau**3) / self.duration**2
        d = self.p1 - self.p0
        return self.p0 + d * s, d * ds, d * dd


@dataclass
class QuinticSchedule:
    """Chained quintic segments with dwells; C2 at every joint point."""

    segments: list = field(default_factory=list)  # (t_start, seg-or-hold)
    total: float = 0.0

    def eval(self, t):
        if t <= 0.0:
            first = self.segments[0][1]
            p = first.p0 if isinstance(first, QuinticSegment) else first
            return p, 0.0
        if t >= self.total:
            last = self.segments[-1][1]
            p = last.p1 if isinstance(last, QuinticSegment) else last
            return p, 0.0
        for t0, seg in reversed(self.segments):
            if t >= t0:
                if isinstance(seg, QuinticSegment):
                    p, v, _ = seg.eval(t - t0)
                    return p, v
                return seg, 0.0
        raise RuntimeError("unreachable")


def build_quintic_schedule(waypoints, segment_duration) -> QuinticSchedule:
    """Schedule from [(position, dwell_after), ...] waypoint rows.

    segment_duration is scalar or one duration per leg. Dwells hold the
    position reached; boundary velocity and acceleration are zero at
    every waypoint, which keeps the chain C2.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    n_legs = len(waypoints) - 1
    if np.isscalar(segment_duration):
        durations = [float(segment_duration)] * n_legs
    else:
        durations = [float(v) for v in segment_duration]
        if len(durations) != n_legs:
            raise ValueError("one duration per leg required")
    if any(d <= 0.0 for d in durations):
        raise ValueError("segment durations must be positive")
    sched = QuinticSchedule()
    t = 0.0
    p_prev, dwell0 = waypoints[0]
    if dwell0 < 0.0:
        raise ValueError("negative dwell makes the schedule non-monotone")
    if dwell0 > 0.0:
        sched.segments.append((t, float(p_prev)))
        t += dwell0
    for (p_next, dwell), dur in zip(waypoints[1:], durations):
        if dwell < 0.0:
            raise ValueError("negative dwell makes the schedule non-monotone")
        sched.segments.append((t, QuinticSegment(float(p_prev),
                                                 float(p_next), dur)))
        t += dur
        if dwell > 0.0:
            sched.segments.append((t, float(p_next)))
            t += dwell
        p_prev = p_next
    sched.total = t
    return sched


def quintic_reference(waypoints, segment_duration, dt):
    """Sampled (t, x_1d, x_2d) arrays for a quintic waypoint schedule."""
    sched = build_quintic_schedule(waypoints, segment_duration)
    n = int(round(sched.total / dt)) + 1
    t = np.arange(n) * dt
    pos = np.empty(n)
    vel = np.empty(n)
    for i, ti in enumerate(t):
        pos[i], vel[i] = sched.eval(ti)
    return t, pos, vel


# ---------------------------------------------------------------------------
# Extras
# ---------------------------------------------------------------------------

def workspace_pointcloud(q_lb, q_ub, n_per_axis, fk):
    """Grid-sample the joint box and push samples through fk."""
    q_lb = np.atleast_1d(np.asarray(q_lb, float))
    q_ub = np.atleast_1d(np.asarray(q_ub, float))
    axes = [np.linspace(lo, hi, n_per_axis) for lo, hi in zip(q_lb, q_ub)]
    mesh = np.meshgrid(*axes, indexing="ij")
    qs = np.stack([m.ravel() for m in mesh], axis=1)
    return np.array([fk(q) for q in qs])


def curve_to_dict(curve: BsplineCurve) -> dict:
    return {
        "schema_version": 1,
        "degree": int(curve.degree),
        "t_final": float(curve.t_final),
        "knots": [float(v) for v in curve.knots],
        "control_points": [[float(v) for v in row]
                           for row in curve.control_points],
    }


def curve_from_dict(d: dict) -> BsplineCurve:
    version = d.get("schema_version")
    if version != 1:
        raise ValueError(f"unsupported curve schema_version: {version!r}")
    for key in ("degree", "t_final", "knots", "control_points"):
        if key not in d:
            raise ValueError(f"curve file missing field: {key}")
    return BsplineCurve(degree=int(d["degree"]),
                        knots=np.asarray(d["knots"], dtype=float),
                        control_points=np.asarray(d["control_points"],
                                                  dtype=float),
                        t_final=float(d["t_final"]))


def save_curve(curve: BsplineCurve, path) -> None:
    with open(path, "w") as fh:
        json.dump(curve_to_dict(curve), fh, indent=1)
        fh.write("\n")


def load_curve(path) -> BsplineCurve:
    with open(path) as fh:
        return curve_from_dict(json.load(fh))


def trajectory_to_csv(curve: BsplineCurve, path, n_samples=1001):
    times = np.linspace(0.0, curve.t_final, n_samples)
    q, v, a = sample_trajectory(curve, times)
    na = curve.n_joints
    header = (["t"] + [f"q_{j+1}" for j in range(na)]
              + [f"v_{j+1}" for j in range(na)]
              + [f"a_{j+1}" for j in range(na)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k, t in enumerate(times):
            writer.writerow([repr(float(t))]
                            + [repr(float(x)) for x in q[k]]
                            + [repr(float(x)) for x in v[k]]
                            + [repr(float(x)) for x in a[k]])

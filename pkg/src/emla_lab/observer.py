"""Robust adaptive position/velocity observer for one actuator joint.

Estimates the motion pair (x_L, dx_L) from the position measurement
alone. The estimate propagates the known motion model plus a linear
output-error feedback alpha*(y - x1_hat) and a bounded robustifying
injection p^-1 C^T f that absorbs model uncertainty, with the scalar
gain eta_hat adapted online from the output error. All of the fixed
pieces (A, B, C, alpha, p, Q, ell, m, H) live in ObserverConfig; the
mutable pair (x_hat, eta_hat) is a plain value advanced by RK4 with
zero-order-hold measurements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ETA_FLOOR = 1e-12  # float hygiene: keeps eta_hat strictly positive


def default_h(y: float) -> float:
    return 20.0 * math.cos(y) ** 4 + 20.0 * math.sin(y) ** 4


def is_hurwitz_2x2(mat) -> bool:
    # trace/determinant criterion, no eigensolve needed
    m = np.asarray(mat, dtype=float)
    return bool(m[0, 0] + m[1, 1] < 0.0 and
                m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] > 0.0)


def _is_spd_2x2(m) -> bool:
    m = np.asarray(m, dtype=float)
    if abs(m[0, 1] - m[1, 0]) > 1e-9 * (1.0 + abs(m[0, 1])):
        return False
    return bool(m[0, 0] > 0.0 and np.linalg.det(m) > 0.0)


# ---------------------------------------------------------------------------
# gain synthesis and Lyapunov solve
# ---------------------------------------------------------------------------

def synthesize_gain(a_mat, c_vec, pole_targets=(-1.0, -2.0), seed: int = 0):
    """Output-injection gain alpha with A - alpha*C Hurwitz.

    With pole_targets given, alpha comes from closed-form 2x2 pole
    placement. With pole_targets=None the routine falls back to the
    randomized draw-and-test loop (seeded), after first accepting
    alpha = 0 whenever A alone is already Hurwitz.

    Returns (alpha, a_bar).
    """
    a = np.asarray(a_mat, dtype=float).reshape(2, 2)
    c = np.asarray(c_vec, dtype=float).reshape(2)
    obs_mat = np.vstack([c, c @ a])
    if abs(np.linalg.det(obs_mat)) < 1e-12:
        raise ValueError("pair (A, C) is unobservable")

    if pole_targets is None:
        if is_hurwitz_2x2(a):
            return np.zeros(2), a.copy()
        rng = np.random.default_rng(seed)
        for _ in range(10_000):
            alpha = rng.standard_normal(2)
            a_bar = a - np.outer(alpha, c)
            if is_hurwitz_2x2(a_bar):
                return alpha, a_bar
        raise RuntimeError("randomized gain search failed to find a "
                           "Hurwitz closed loop")

    p1, p2 = complex(pole_targets[0]), complex(pole_targets[1])
    if p1.real >= 0.0 or p2.real >= 0.0:
        raise ValueError("pole targets must have negative real part")
    tr_want = (p1 + p2).real
    det_want = (p1 * p2).real
    # trace and determinant of A - alpha*C are linear in alpha
    m = np.array([
        [c[0], c[1]],
        [c[0] * a[1, 1] - c[1] * a[1, 0],
         c[1] * a[0, 0] - c[0] * a[0, 1]],
    ])
    rhs = np.array([a[0, 0] + a[1, 1] - tr_want,
                    np.linalg.det(a) - det_want])
    alpha = np.linalg.solve(m, rhs)
    a_bar = a - np.outer(alpha, c)
    return alpha, a_bar


def solve_lyapunov_2x2(a_bar, q_mat) -> np.ndarray:
    """Symmetric p with p A_bar + A_bar^T p = -Q, solved exactly.

    Three unknowns (p11, p12, p22) give a 3x3 linear system. Requires
    a Hurwitz A_bar and symmetric positive definite Q.
    """
    ab = np.asarray(a_bar, dtype=float).reshape(2, 2)
    q = np.asarray(q_mat, dtype=float).reshape(2, 2)
    if not is_hurwitz_2x2(ab):
        raise ValueError("a_bar is not Hurwitz; Lyapunov system is "
                         "singular or indefinite")
    if not _is_spd_2x2(q):
        raise ValueError("q_mat must be symmetric positive definite")
    a11, a12, a21, a22 = ab[0, 0], ab[0, 1], ab[1, 0], ab[1, 1]
    # rows: equation (1,1), (1,2), (2,2) of p*Ab + Ab^T*p = -Q
    sys = np.array([
        [2.0 * a11, 2.0 * a21, 0.0],
        [a12, a11 + a22, a21],
        [0.0, 2.0 * a12, 2.0 * a22],
    ])
    rhs = -np.array([q[0, 0], q[0, 1], q[1, 1]])
    p11, p12, p22 = np.linalg.solve(sys, rhs)
    p = np.array([[p11, p12], [p12, p22]])
    residual = p @ ab + ab.T @ p + q
    if np.abs(residual).max() > 1e-9 * (1.0 + np.abs(q).max()):
        raise ArithmeticError("Lyapunov residual above tolerance")
    if not _is_spd_2x2(p):
        raise ArithmeticError("Lyapunov solution is not positive definite")
    return p


def random_pq(a_bar, seed: int = 0):
    """Draw Q = R R^T until the Lyapunov solution is SPD; returns (p, Q)."""
    rng = np.random.default_rng(seed)
    for _ in range(1000):
        r = rng.standard_normal((2, 2))
        q = r @ r.T
        if np.linalg.det(q) < 1e-9:
            continue
        try:
            p = solve_lyapunov_2x2(a_bar, q)
        except ArithmeticError:
            continue
        return p, q
    raise RuntimeError("failed to draw a positive definite (p, Q) pair")


# ---------------------------------------------------------------------------
# robustifier
# ---------------------------------------------------------------------------

def robustifier(y_bar: float, eta_hat: float, h_val: float,
                m_val: float) -> float:
    """Bounded output-error injection f with |f| <= eta_hat * h_val."""
    if m_val <= 0.0:
        raise ValueError("m_val must be > 0")
    num = eta_hat * eta_hat * h_val * h_val * y_bar
    den = eta_hat * h_val * abs(y_bar) + m_val
    return num / den


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class ObserverConfig:
    alpha: np.ndarray
    p_mat: np.ndarray
    q_mat: np.ndarray
    ell: float = 1.0
    m0: float = 200.0
    m_lambda: float = 1e-3
    h_fn: object = default_h
    a_mat: np.ndarray = field(
        default_factory=lambda: np.array([[0.0, 1.0], [0.0, 0.0]]))
    b_vec: np.ndarray = field(
        default_factory=lambda: np.array([0.0, 1.0]))
    c_vec: np.ndarray = field(
        default_factory=lambda: np.array([1.0, 0.0]))
    use_model_terms: bool = True

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float).reshape(2)
        self.p_mat = np.asarray(self.p_mat, dtype=float).reshape(2, 2)
        self.q_mat = np.asarray(self.q_mat, dtype=float).reshape(2, 2)
        self.a_mat = np.asarray(self.a_mat, dtype=float).reshape(2, 2)
        self.b_vec = np.asarray(self.b_vec, dtype=float).reshape(2)
        self.c_vec = np.asarray(self.c_vec, dtype=float).reshape(2)
        self.validate()
        # precompute p^-1 C^T (the robustifier injection direction)
        self.p_inv_ct = np.linalg.solve(self.p_mat, self.c_vec)

    def validate(self):
        if self.ell <= 0.0:
            raise ValueError("ell must be > 0")
        if self.m0 <= 0.0 or self.m_lambda <= 0.0:
            raise ValueError("m schedule needs m0 > 0 and m_lambda > 0")
        a_bar = self.a_bar()
        if not is_hurwitz_2x2(a_bar):
            raise ValueError("A - alpha*C must be Hurwitz")
        if not _is_spd_2x2(self.p_mat):
            raise ValueError("p_mat must be symmetric positive definite")
        if not _is_spd_2x2(self.q_mat):
            raise ValueError("q_mat must be symmetric positive definite")
        residual = self.p_mat @ a_bar + a_bar.T @ self.p_mat + self.q_mat
        if np.abs(residual).max() > 1e-9 * (1.0 + np.abs(self.q_mat).max()):
            raise ValueError("p, Q do not satisfy the Lyapunov identity")

    def a_bar(self) -> np.ndarray:
        return self.a_mat - np.outer(self.alpha, self.c_vec)

    def m_fn(self, t: float) -> float:
        return self.m0 * math.exp(-self.m_lambda * t)

    @classmethod
    def from_poles(cls, pole_targets=(-1.0, -2.0), q_mat=None, **kw):
        alpha, a_bar = synthesize_gain(
            np.array([[0.0, 1.0], [0.0, 0.0]]), np.array([1.0, 0.0]),
            pole_targets)
        if q_mat is None:
            q_mat = np.eye(2)
        p = solve_lyapunov_2x2(a_bar, q_mat)
        return cls(alpha=alpha, p_mat=p, q_mat=q_mat, **kw)


@dataclass
class ObserverState:
    x_hat: np.ndarray
    eta_hat: float

    def __post_init__(self):
        self.x_hat = np.asarray(self.x_hat, dtype=float).reshape(2)
        if self.eta_hat <= 0.0:
            raise ValueError("eta_hat must start > 0")


# ---------------------------------------------------------------------------
# step
# ---------------------------------------------------------------------------

def observer_step(s: ObserverState, cfg: ObserverConfig, y: float,
                  g_val, u_val, dt: float, t: float = 0.0) -> ObserverState:
    """One RK4 step of the estimate and adaptation dynamics.

    y, g_val and u_val are held constant over the step (zero-order
    hold); the decay schedule m(t) is evaluated at the RK4 stage times.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    g = np.asarray(g_val, dtype=float).reshape(2)
    u = np.asarray(u_val, dtype=float).reshape(2)
    if not cfg.use_model_terms:
        g = np.zeros(2)
        u = np.zeros(2)
    h_y = float(cfg.h_fn(y))
    a = cfg.a_mat
    b = cfg.b_vec
    alpha = cfg.alpha
    pict = cfg.p_inv_ct
    ell = cfg.ell

    def rhs(x1, x2, eta, t_stage):
        ybar = y - (cfg.c_vec[0] * x1 + cfg.c_vec[1] * x2)
        m_t = cfg.m_fn(t_stage)
        f = robustifier(ybar, eta, h_y, m_t)
        dx1 = (a[0, 0] * x1 + a[0, 1] * x2 + b[0] * u[0] + g[0]
               + alpha[0] * ybar + pict[0] * f)
        dx2 = (a[1, 0] * x1 + a[1, 1] * x2 + b[1] * u[1] + g[1]
               + alpha[1] * ybar + pict[1] * f)
        deta = -m_t * ell * eta + ell * h_y * abs(ybar)
        return dx1, dx2, deta

    x1, x2, eta = s.x_hat[0], s.x_hat[1], s.eta_hat
    k1 = rhs(x1, x2, eta, t)
    k2 = rhs(x1 + 0.5 * dt * k1[0], x2 + 0.5 * dt * k1[1],
             eta + 0.5 * dt * k1[2], t + 0.5 * dt)
    k3 = rhs(x1 + 0.5 * dt * k2[0], x2 + 0.5 * dt * k2[1],
             eta + 0.5 * dt * k2[2], t + 0.5 * dt)
    k4 = rhs(x1 + dt * k3[0], x2 + dt * k3[1], eta + dt * k3[2], t + dt)
    sixth = dt / 6.0
    x1_new = x1 + sixth * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    x2_new = x2 + sixth * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    eta_new = eta + sixth * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])

    if not (math.isfinite(x1_new) and math.isfinite(x2_new)):
        raise ArithmeticError("non-finite observer update in x_hat")
    if not math.isfinite(eta_new):
        raise ArithmeticError("non-finite observer update in eta_hat")
    return ObserverState(x_hat=np.array([x1_new, x2_new]),
                         eta_hat=max(eta_new, ETA_FLOOR))

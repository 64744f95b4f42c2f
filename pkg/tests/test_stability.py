"""Verification-layer tests: Hurwitz criterion, Lyapunov residuals,
envelope fitting, composite energy traces, decay diagnostics."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emla_lab.control import GAIN_SETS, RsbaGains
from emla_lab.observer import (ObserverConfig, ObserverState, observer_step,
                               solve_lyapunov_2x2)
from emla_lab.stability import (BallDiagnostics, EnvelopeFit,
                                ball_radius_estimate, composite_lyapunov,
                                fit_envelope, is_hurwitz, lyapunov_residual,
                                verification_report)

ALPHA_REF = np.array([0.3192, 0.3129])
A_BAR_REF = np.array([[-0.3192, 1.0], [-0.3129, 0.0]])
P_REF = np.array([[1.4078, -0.1975], [-0.1975, 4.4535]])
Q_REF = np.array([[0.7752, -0.0775], [-0.0775, 0.3949]])

ZERO2 = np.zeros(2)


def reference_config(**kw):
    p = solve_lyapunov_2x2(A_BAR_REF, Q_REF)
    return ObserverConfig(alpha=ALPHA_REF, p_mat=p, q_mat=Q_REF, **kw)


# ---------------------------------------------------------------------------
# Hurwitz criterion
# ---------------------------------------------------------------------------

def test_hurwitz_examples():
    assert is_hurwitz([[-1.0, 0.0], [0.0, -2.0]])
    assert not is_hurwitz([[0.0, 1.0], [0.0, 0.0]])
    assert is_hurwitz(A_BAR_REF)


def test_hurwitz_agrees_with_eigenvalues():
    rng = np.random.Generator(np.random.PCG64(7))
    for _ in range(10_000):
        m = rng.standard_normal((2, 2))
        by_eig = bool(np.all(np.linalg.eigvals(m).real < 0.0))
        assert is_hurwitz(m) == by_eig


def test_hurwitz_rejects_wrong_shape():
    with pytest.raises(ValueError):
        is_hurwitz(np.eye(3))


# ---------------------------------------------------------------------------
# Lyapunov residual
# ---------------------------------------------------------------------------

def test_residual_of_exact_solution():
    q = np.array([[2.0, 0.3], [0.3, 1.0]])
    p = solve_lyapunov_2x2(A_BAR_REF, q)
    assert lyapunov_residual(A_BAR_REF, p, q) <= 1e-9


def test_residual_of_rounded_reference_triple():
    assert lyapunov_residual(A_BAR_REF, P_REF, Q_REF) <= 5e-3


def test_residual_with_zero_p_is_q_norm():
    r = lyapunov_residual(A_BAR_REF, np.zeros((2, 2)), Q_REF)
    assert r == pytest.approx(np.linalg.norm(Q_REF, "fro"), rel=1e-12)


def test_residual_shape_mismatch():
    with pytest.raises(ValueError):
        lyapunov_residual(A_BAR_REF, np.zeros((3, 3)), Q_REF)


# ---------------------------------------------------------------------------
# envelope fitting
# ---------------------------------------------------------------------------

def _check_majorized(series, fit, t0=0, dt=1.0):
    seg = np.asarray(series, float)[t0:]
    t_rel = np.arange(seg.size) * dt
    env = fit.c_bar * np.exp(-fit.rate * t_rel) * seg[0] + fit.floor
    scale = max(1.0, float(np.max(seg)))
    assert np.all(seg <= env + 1e-12 * scale)


def test_envelope_pure_exponential():
    t = np.arange(0.0, 10.0 + 1e-12, 0.01)
    e = 5.0 * np.exp(-2.0 * t)
    fit = fit_envelope(e, 0, dt=0.01)
    assert not fit.not_exponential
    assert fit.rate == pytest.approx(2.0, rel=0.05)
    assert fit.c_bar == pytest.approx(1.0, abs=0.01)
    assert fit.floor <= 1e-6
    assert fit.r2 > 0.999
    _check_majorized(e, fit, dt=0.01)


def test_envelope_constant_series_flagged():
    fit = fit_envelope(np.full(50, 3.0), 0, dt=0.1)
    assert fit.not_exponential
    assert fit.rate <= 0.0
    assert fit.floor == pytest.approx(3.0)
    _check_majorized(np.full(50, 3.0), fit, dt=0.1)


def test_envelope_growing_series_flagged():
    e = np.exp(0.5 * np.arange(40) * 0.1)
    fit = fit_envelope(e, 0, dt=0.1)
    assert fit.not_exponential
    _check_majorized(e, fit, dt=0.1)


def test_envelope_noisy_decay_majorizes():
    rng = np.random.Generator(np.random.PCG64(3))
    t = np.arange(2000) * 0.01
    e = 2.0 * np.exp(-1.5 * t) + 1e-3 * (1.0 + 0.5 * np.sin(40.0 * t)) \
        + 5e-4 * rng.random(t.size)
    fit = fit_envelope(e, 0, dt=0.01)
    assert not fit.not_exponential
    assert fit.rate > 1.0
    assert fit.floor <= 3e-3
    _check_majorized(e, fit, dt=0.01)


def test_envelope_spike_still_majorized():
    t = np.arange(500) * 0.01
    e = np.exp(-2.0 * t)
    e[250] = 5.0  # isolated excursion above the fitted line
    fit = fit_envelope(e, 0, dt=0.01)
    _check_majorized(e, fit, dt=0.01)


def test_envelope_respects_t0_index():
    t = np.arange(0.0, 6.0, 0.01)
    e = np.concatenate([np.full(100, 0.5), 3.0 * np.exp(-2.0 * t)])
    fit = fit_envelope(e, t0_index=100, dt=0.01)
    assert fit.rate == pytest.approx(2.0, rel=0.05)
    _check_majorized(e, fit, t0=100, dt=0.01)


def test_envelope_input_validation():
    with pytest.raises(ValueError):
        fit_envelope(np.array([]), 0)
    with pytest.raises(ValueError):
        fit_envelope(np.ones(10), 0)  # fewer than 20 samples past t0
    with pytest.raises(ValueError):
        fit_envelope(np.ones(50), 45)
    with pytest.raises(ValueError):
        fit_envelope(np.ones(50), 50)
    with pytest.raises(ValueError):
        fit_envelope(-np.ones(50), 0)
    with pytest.raises(ValueError):
        fit_envelope(np.full(50, np.nan), 0)
    with pytest.raises(ValueError):
        fit_envelope(np.ones(50), 0, dt=0.0)


@settings(max_examples=120, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_envelope_always_majorizes(seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    kind = rng.integers(0, 4)
    n = int(rng.integers(25, 400))
    t = np.arange(n) * 0.05
    if kind == 0:
        e = rng.uniform(0.1, 5.0) * np.exp(-rng.uniform(0.05, 3.0) * t)
    elif kind == 1:
        e = np.abs(np.cumsum(rng.standard_normal(n))) * 0.1
    elif kind == 2:
        e = rng.uniform(0.0, 2.0, size=n)
    else:
        e = rng.uniform(0.1, 2.0) * np.exp(-rng.uniform(0.1, 2.0) * t) \
            + rng.uniform(0.0, 0.05) * rng.random(n)
    fit = fit_envelope(e, 0, dt=0.05)
    assert 0.0 <= fit.r2 <= 1.0
    assert fit.floor >= 0.0
    _check_majorized(e, fit, dt=0.05)


def test_envelope_mismatched_observer_run_decays_below_desk_floor():
    # static truth, estimate launched 60 mm away, no noise: the error
    # must fit a positive-rate envelope whose floor is numerically zero
    cfg = ObserverConfig.from_poles((-3.0, -2.0))
    s = ObserverState(x_hat=np.array([0.24, 0.0]), eta_hat=0.5)
    dt, n = 1e-3, 8000
    truth = np.array([0.3, 0.0])
    err = np.empty(n + 1)
    err[0] = np.hypot(*(truth - s.x_hat))
    for k in range(n):
        s = observer_step(s, cfg, y=truth[0], g_val=ZERO2, u_val=ZERO2,
                          dt=dt, t=k * dt)
        err[k + 1] = np.hypot(*(truth - s.x_hat))
    fit = fit_envelope(err, 0, dt=dt)
    assert not fit.not_exponential
    assert fit.rate > 0.0
    assert fit.floor <= 1e-6
    _check_majorized(err, fit, dt=dt)


def test_noise_floor_drops_as_error_weight_grows():
    # same output gain, same noise draw; scaling up p (and Q with it)
    # weakens the robustifier injection, so the steady noise ball must
    # not widen as p's smallest eigenvalue grows
    p_base = solve_lyapunov_2x2(A_BAR_REF, Q_REF)

    def floor_for(scale):
        cfg = ObserverConfig(alpha=ALPHA_REF, p_mat=scale * p_base,
                             q_mat=scale * Q_REF, m0=0.5, m_lambda=1e-9,
                             ell=1.0)
        rng = np.random.Generator(np.random.PCG64(20260822))
        n = 12_000
        noise = rng.uniform(-0.01, 0.01, size=n)
        s = ObserverState(x_hat=np.array([0.3, 0.0]), eta_hat=0.5)
        err = np.empty(n)
        for k in range(n):
            s = observer_step(s, cfg, y=0.3 + noise[k], g_val=ZERO2,
                              u_val=ZERO2, dt=1e-3, t=k * 1e-3)
            err[k] = np.hypot(0.3 - s.x_hat[0], -s.x_hat[1])
        return fit_envelope(err, t0_index=n // 3, dt=1e-3).floor

    floors = [floor_for(sc) for sc in (1.0, 2.0, 4.0)]
    assert floors[1] <= floors[0]
    assert floors[2] <= floors[1]


# ---------------------------------------------------------------------------
# composite energy trace
# ---------------------------------------------------------------------------

def _trace_from_arrays(n, fill=0.0):
    cols = ("t", "x1", "x2", "x1hat", "x2hat", "eta_hat",
            "P1", "P2", "P3", "P4", "th1", "th2", "th3", "th4")
    tr = {c: np.full(n, fill) for c in cols}
    tr["t"] = np.arange(n) * 1e-3
    return tr


def test_composite_all_zero_is_zero():
    lt = composite_lyapunov(_trace_from_arrays(10), np.eye(2),
                            np.ones(4), 1.0)
    assert np.all(lt.v_total == 0.0)
    assert np.all(lt.v0 == 0.0)


def test_composite_single_sample_hand_value():
    tr = _trace_from_arrays(1)
    tr["x1"][0], tr["x2"][0] = 0.1, -0.2
    tr["eta_hat"][0] = 0.5
    for i, (pv, thv) in enumerate(zip((0.1, 0.2, 0.3, 0.4),
                                      (1.0, 2.0, 3.0, 4.0)), start=1):
        tr[f"P{i}"][0] = pv
        tr[f"th{i}"][0] = thv
    lt = composite_lyapunov(tr, [[2.0, 0.0], [0.0, 1.0]],
                            [1.0, 2.0, 3.0, 4.0], 2.0)
    assert lt.v0[0] == pytest.approx(0.185, rel=1e-12)
    assert lt.v1[0] == pytest.approx(0.505, rel=1e-12)
    assert lt.v2[0] == pytest.approx(1.02, rel=1e-12)
    assert lt.v3[0] == pytest.approx(1.545, rel=1e-12)
    assert lt.v4[0] == pytest.approx(2.08, rel=1e-12)
    assert lt.v_total[0] == pytest.approx(5.335, rel=1e-12)
    assert lt.theta_star == 0.0 and lt.eta_star == 0.0


def test_composite_nonnegative_on_random_traces():
    rng = np.random.Generator(np.random.PCG64(11))
    p = solve_lyapunov_2x2(A_BAR_REF, Q_REF)
    for _ in range(100):
        tr = _trace_from_arrays(50)
        for c in tr:
            if c != "t":
                tr[c] = rng.standard_normal(50) * 10.0
        lt = composite_lyapunov(tr, p, (100.0, 100.0, 110.0, 110.0), 1.0)
        assert np.all(lt.v_total >= 0.0)
        assert np.all(lt.v0 >= 0.0)


def test_composite_missing_ground_truth():
    tr = _trace_from_arrays(10)
    del tr["x1"]
    with pytest.raises(ValueError, match="ground-truth.*x1"):
        composite_lyapunov(tr, np.eye(2), np.ones(4), 1.0)


def test_composite_misaligned_columns():
    tr = _trace_from_arrays(10)
    tr["P3"] = np.zeros(9)
    with pytest.raises(ValueError, match="P3"):
        composite_lyapunov(tr, np.eye(2), np.ones(4), 1.0)


def test_composite_rejects_bad_weights():
    tr = _trace_from_arrays(5)
    with pytest.raises(ValueError):
        composite_lyapunov(tr, [[0.0, 0.0], [0.0, 1.0]], np.ones(4), 1.0)
    with pytest.raises(ValueError):
        composite_lyapunov(tr, np.eye(2), (1.0, -1.0, 1.0, 1.0), 1.0)
    with pytest.raises(ValueError):
        composite_lyapunov(tr, np.eye(2), np.ones(4), 0.0)


# ---------------------------------------------------------------------------
# decay diagnostics
# ---------------------------------------------------------------------------

def test_ball_diagnostics_lift_gains():
    g = GAIN_SETS["lift"]
    b = ball_radius_estimate(g, 1e-5, m_lb=150.0, ell=1.0)
    expect = tuple(min(be, de * si) for be, de, si in
                   zip(g.beta, g.delta, g.sigma))
    assert b.phi == expect
    assert b.phi == (pytest.approx(0.1), pytest.approx(0.1),
                     pytest.approx(1.1), pytest.approx(1.1))
    assert b.phi0 == 1.0
    assert b.phi_total <= b.phi0
    assert b.phi_total == pytest.approx(0.1)
    assert b.empirical_floor == 1e-5
    assert b.analytic_radius is None


def test_ball_diagnostics_min_selection():
    g = RsbaGains(beta=(2.0,) * 4, zeta=(1.0,) * 4, delta=(3.0,) * 4,
                  sigma=(1.0,) * 4)
    b = ball_radius_estimate(g, 0.0, m_lb=10.0, ell=1.0)
    assert b.phi == (2.0, 2.0, 2.0, 2.0)


def test_ball_diagnostics_beta_saturation():
    common = dict(zeta=(1.0,) * 4, delta=(110.0,) * 4, sigma=(0.01,) * 4)
    lo = ball_radius_estimate(RsbaGains(beta=(1000.0,) * 4, **common),
                              0.0, 1.0, 1.0)
    hi = ball_radius_estimate(RsbaGains(beta=(2000.0,) * 4, **common),
                              0.0, 1.0, 1.0)
    assert lo.phi == hi.phi


def test_ball_diagnostics_small_m_limits_phi0():
    g = GAIN_SETS["lift"]
    b = ball_radius_estimate(g, 0.0, m_lb=0.05, ell=1.0)
    assert b.phi0 == pytest.approx(0.05)
    assert b.phi_total == pytest.approx(0.05)


def test_ball_diagnostics_validation():
    g = GAIN_SETS["lift"]
    with pytest.raises(ValueError):
        ball_radius_estimate(g, -1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        ball_radius_estimate(g, 0.0, -1.0, 1.0)
    with pytest.raises(ValueError):
        ball_radius_estimate(g, 0.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def test_verification_report_round_trips_json():
    n = 4000
    dt = 1e-3
    t = np.arange(n) * dt
    decay = np.exp(-2.0 * t)
    tr = _trace_from_arrays(n)
    tr["x1"] = 0.3 + 0.05 * decay
    tr["x2"] = -0.1 * decay
    tr["x1hat"] = np.full(n, 0.3)
    tr["x2hat"] = np.zeros(n)
    tr["eta_hat"] = 0.5 * decay + 1e-9
    for i in range(1, 5):
        tr[f"P{i}"] = 0.02 * i * decay
        tr[f"th{i}"] = 0.1 * i * decay
    cfg = reference_config()
    rpt = verification_report(tr, cfg, GAIN_SETS["lift"], dt,
                              scenario="synthetic-decay")
    assert rpt["hurwitz"] is True
    assert rpt["lyapunov_residual"] <= 1e-9
    assert rpt["lyapunov_residual_ok"]
    assert not rpt["observer_error_envelope"]["not_exponential"]
    assert not rpt["lyapunov_envelope"]["not_exponential"]
    assert rpt["envelopes_decay"] is True
    assert rpt["decay_diagnostics"]["phi"] == [pytest.approx(0.1),
                                               pytest.approx(0.1),
                                               pytest.approx(1.1),
                                               pytest.approx(1.1)]
    assert rpt["passed"] is True
    again = json.loads(json.dumps(rpt))
    assert again["scenario"] == "synthetic-decay"


def test_verification_report_without_ground_truth():
    tr = _trace_from_arrays(100)
    del tr["x1"], tr["x2"]
    rpt = verification_report(tr, reference_config(), GAIN_SETS["lift"],
                              1e-3)
    assert rpt["observer_error_envelope"] is None
    assert rpt["envelopes_decay"] is None
    assert rpt["passed"] is True

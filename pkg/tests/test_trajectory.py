import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emla_lab.trajectory import (
    BsplineCurve, LoadOracle, TrajectoryConstraints, _Problem,
    basis_matrices, bspline_basis, build_quintic_schedule, collocation_cost,
    eval_trajectory, make_clamped_knots, optimize_trajectory,
    quintic_reference, sample_trajectory, trajectory_to_csv,
    workspace_pointcloud,
)


def make_curve(num_ctrl=10, degree=5, n_joints=1, t_final=2.0, seed=0):
    rng = np.random.default_rng(seed)
    knots = make_clamped_knots(num_ctrl, degree)
    ctrl = rng.uniform(-1.0, 1.0, size=(num_ctrl, n_joints))
    return BsplineCurve(degree=degree, knots=knots, control_points=ctrl,
                        t_final=t_final)


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------

class TestBasis:
    def test_partition_of_unity(self):
        knots = make_clamped_knots(10, 5)
        for t in np.linspace(0.0, 1.0, 57):
            b, d1, d2, clamped = bspline_basis(t, knots, 5)
            assert not clamped
            assert abs(b.sum() - 1.0) < 1e-12
            assert abs(d1.sum()) < 1e-9
            assert abs(d2.sum()) < 1e-8

    @given(st.floats(min_value=0.0, max_value=1.0),
           st.integers(min_value=7, max_value=14),
           st.integers(min_value=3, max_value=6))
    @settings(max_examples=60, deadline=None)
    def test_partition_of_unity_hypothesis(self, t, num_ctrl, degree):
        if num_ctrl < degree + 1:
            num_ctrl = degree + 1
        knots = make_clamped_knots(num_ctrl, degree)
        b, _, _, _ = bspline_basis(t, knots, degree)
        assert abs(b.sum() - 1.0) < 1e-12
        assert np.all(b >= -1e-15)

    def test_endpoint_rows(self):
        knots = make_clamped_knots(9, 5)
        b0, _, _, _ = bspline_basis(0.0, knots, 5)
        b1, _, _, _ = bspline_basis(1.0, knots, 5)
        assert abs(b0[0] - 1.0) < 1e-14 and abs(b0[1:].max()) < 1e-14
        assert abs(b1[-1] - 1.0) < 1e-14 and abs(b1[:-1].max()) < 1e-14

    def test_first_derivative_matches_fd(self):
        knots = make_clamped_knots(11, 5)
        h = 1e-6
        for t in (0.13, 0.37, 0.52, 0.81, 0.94):
            _, d1, _, _ = bspline_basis(t, knots, 5)
            bp, _, _, _ = bspline_basis(t + h, knots, 5)
            bm, _, _, _ = bspline_basis(t - h, knots, 5)
            fd = (bp - bm) / (2 * h)
            np.testing.assert_allclose(d1, fd, rtol=1e-5, atol=1e-6)

    def test_second_derivative_matches_fd(self):
        knots = make_clamped_knots(11, 5)
        h = 1e-4
        for t in (0.13, 0.37, 0.52, 0.81, 0.94):
            b, _, d2, _ = bspline_basis(t, knots, 5)
            bp, _, _, _ = bspline_basis(t + h, knots, 5)
            bm, _, _, _ = bspline_basis(t - h, knots, 5)
            fd = (bp - 2 * b + bm) / h**2
            np.testing.assert_allclose(d2, fd, rtol=1e-4, atol=1e-3)

    def test_out_of_range_clamps_with_flag(self):
        knots = make_clamped_knots(8, 5)
        b_lo, d_lo, _, flag_lo = bspline_basis(-0.2, knots, 5)
        b0, d0, _, flag0 = bspline_basis(0.0, knots, 5)
        assert flag_lo and not flag0
        np.testing.assert_array_equal(b_lo, b0)
        np.testing.assert_array_equal(d_lo, d0)
        _, _, _, flag_hi = bspline_basis(1.3, knots, 5)
        assert flag_hi

    def test_degree_and_count_validation(self):
        with pytest.raises(ValueError):
            bspline_basis(0.5, make_clamped_knots(8, 5), 2)
        with pytest.raises(ValueError):
            make_clamped_knots(4, 5)


# ---------------------------------------------------------------------------
# curve evaluation
# ---------------------------------------------------------------------------

class TestCurve:
    def test_endpoint_interpolation(self):
        c = make_curve(seed=3)
        q0, _, _ = eval_trajectory(c, 0.0)
        q1, _, _ = eval_trajectory(c, c.t_final)
        np.testing.assert_allclose(q0, c.control_points[0], atol=1e-13)
        np.testing.assert_allclose(q1, c.control_points[-1], atol=1e-13)

    def test_time_scaling_of_derivatives(self):
        # same control net, doubled horizon: rates halve, accels quarter
        ca = make_curve(t_final=1.0, seed=5)
        cb = make_curve(t_final=2.0, seed=5)
        _, va, aa = eval_trajectory(ca, 0.4)
        _, vb, ab = eval_trajectory(cb, 0.8)
        np.testing.assert_allclose(vb, va / 2.0, rtol=1e-12)
        np.testing.assert_allclose(ab, aa / 4.0, rtol=1e-12)

    def test_out_of_range_time_raises(self):
        c = make_curve()
        with pytest.raises(ValueError):
            eval_trajectory(c, -0.1)
        with pytest.raises(ValueError):
            eval_trajectory(c, c.t_final + 1e-9)

    def test_sample_matches_pointwise(self):
        c = make_curve(n_joints=2, seed=7)
        ts = np.linspace(0.0, c.t_final, 23)
        q, v, a = sample_trajectory(c, ts)
        for k, t in enumerate(ts):
            qe, ve, ae = eval_trajectory(c, t)
            np.testing.assert_allclose(q[k], qe, atol=1e-14)
            np.testing.assert_allclose(v[k], ve, atol=1e-13)
            np.testing.assert_allclose(a[k], ae, atol=1e-12)

    def test_mismatched_control_count_raises(self):
        knots = make_clamped_knots(10, 5)
        with pytest.raises(ValueError):
            BsplineCurve(degree=5, knots=knots,
                         control_points=np.zeros((7, 1)), t_final=1.0)


# ---------------------------------------------------------------------------
# cost
# ---------------------------------------------------------------------------

class TestCollocationCost:
    def test_hand_value_constant_power(self):
        # v.f == 1 at every point, 10 points spaced 0.1 -> J = 0.5
        c = make_curve(t_final=1.0)
        oracle = LoadOracle(kind="custom",
                            fn=lambda t, q, qd, qdd: (np.array([1.0]),
                                                      np.array([1.0])))
        grid = np.linspace(0.0, 0.9, 10)
        j = collocation_cost(c, oracle, grid)
        assert abs(j - 0.5) < 1e-12

    def test_zero_velocity_zero_cost(self):
        knots = make_clamped_knots(8, 5)
        ctrl = np.full((8, 1), 0.3)
        c = BsplineCurve(degree=5, knots=knots, control_points=ctrl,
                         t_final=1.0)
        oracle = LoadOracle(m_eff=10.0, b_eff=1.0, g_eff=500.0)
        assert collocation_cost(c, oracle, np.linspace(0, 1, 11)) < 1e-20

    def test_per_joint_vs_sum_two_joints(self):
        # equal unit powers in two joints: sum mode squares 2 -> 4x points,
        # per-joint mode adds 1+1 -> 2x points
        c = make_curve(n_joints=2)
        oracle = LoadOracle(kind="custom",
                            fn=lambda t, q, qd, qdd: (np.ones(2), np.ones(2)))
        grid = np.linspace(0.0, 0.9, 10)
        j_sum = collocation_cost(c, oracle, grid)
        j_pj = collocation_cost(c, oracle, grid, per_joint=True)
        assert abs(j_sum - 2.0) < 1e-12
        assert abs(j_pj - 1.0) < 1e-12

    def test_oracle_failure_reports_grid_index(self):
        c = make_curve(t_final=1.0)

        def bad(t, q, qd, qdd):
            if t > 0.55:
                raise FloatingPointError("boom")
            return np.array([1.0]), np.array([1.0])

        oracle = LoadOracle(kind="custom", fn=bad)
        grid = np.linspace(0.0, 1.0, 11)
        with pytest.raises(RuntimeError, match="grid index 6"):
            collocation_cost(c, oracle, grid)

    def test_table_oracle_interpolates_csv(self, tmp_path):
        path = tmp_path / "profile.csv"
        path.write_text("t,f_l\n0.0,100.0\n1.0,200.0\n")
        oracle = LoadOracle.from_profile_csv([path])
        _, f = oracle(0.25, 0.0, 0.0, 0.0)
        assert abs(f[0] - 125.0) < 1e-12
        _, f = oracle(5.0, 0.0, 0.0, 0.0)  # flat extrapolation
        assert abs(f[0] - 200.0) < 1e-12

    def test_table_oracle_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("time,force\n0.0,1.0\n")
        with pytest.raises(ValueError, match="expected columns"):
            LoadOracle.from_profile_csv([path])


# ---------------------------------------------------------------------------
# optimizer
# ---------------------------------------------------------------------------

def lift_constraints(num_collocation=41, t_max=37.7):
    return TrajectoryConstraints(
        q_start=[0.244], q_end=[0.270], v_start=[0.0], v_end=[0.0],
        q_lb=[0.244], q_ub=[0.514], v_lb=[-0.136], v_ub=[0.136],
        f_lb=[-8.0e4], f_ub=[8.0e4], t_max=t_max,
        num_collocation=num_collocation)


LIFT_ORACLE = LoadOracle(m_eff=600.0, b_eff=120.0, g_eff=3.5e4)


class TestOptimizer:
    def test_stationary_problem_reaches_zero_cost(self):
        cons = TrajectoryConstraints(
            q_start=[0.3], q_end=[0.3], v_start=[0.0], v_end=[0.0],
            q_lb=[0.0], q_ub=[1.0], v_lb=[-1.0], v_ub=[1.0],
            f_lb=[-1e5], f_ub=[1e5], t_max=5.0, num_collocation=21)
        curve, report = optimize_trajectory(cons, LIFT_ORACLE,
                                            optimize_horizon=False)
        assert report["converged"]
        assert report["final_cost"] < 1e-12

    def test_endpoint_equalities_exact(self):
        cons = lift_constraints()
        cons.v_start = np.array([0.02])
        cons.v_end = np.array([-0.015])
        curve, report = optimize_trajectory(cons, LIFT_ORACLE,
                                            optimize_horizon=False)
        q0, v0, _ = eval_trajectory(curve, 0.0)
        q1, v1, _ = eval_trajectory(curve, curve.t_final)
        np.testing.assert_allclose(q0, [0.244], atol=1e-10)
        np.testing.assert_allclose(q1, [0.270], atol=1e-10)
        np.testing.assert_allclose(v0, [0.02], atol=1e-10)
        np.testing.assert_allclose(v1, [-0.015], atol=1e-10)

    def test_lift_stroke_feasible_and_converged(self):
        cons = lift_constraints()
        curve, report = optimize_trajectory(cons, LIFT_ORACLE,
                                            optimize_horizon=False)
        assert report["converged"]
        assert report["max_violation"] <= 1e-6
        ts = np.linspace(0.0, curve.t_final, 301)
        q, v, _ = sample_trajectory(curve, ts)
        assert np.all(q >= 0.244 - 1e-6) and np.all(q <= 0.514 + 1e-6)
        assert np.all(np.abs(v) <= 0.136 + 1e-6)

    def test_never_worse_than_feasible_seed(self):
        cons = lift_constraints()
        knots = make_clamped_knots(10, 5)
        frac = np.linspace(0.0, 1.0, 10)[:, None]
        ctrl = 0.244 + frac * 0.026
        seed = BsplineCurve(degree=5, knots=knots, control_points=ctrl,
                            t_final=cons.t_max)
        grid = np.linspace(0.0, cons.t_max, cons.num_collocation)
        seed_cost = collocation_cost(seed, LIFT_ORACLE, grid)
        curve, report = optimize_trajectory(cons, LIFT_ORACLE,
                                            seed_curve=seed,
                                            optimize_horizon=False)
        assert report["final_cost"] <= seed_cost + 1e-9

    def test_beats_random_search_baseline(self):
        cons = lift_constraints(num_collocation=31)
        curve, report = optimize_trajectory(cons, LIFT_ORACLE,
                                            optimize_horizon=False)
        prob = _Problem(cons, LIFT_ORACLE, make_clamped_knots(10, 5), 5, 10,
                        cons.t_max)
        rng = np.random.default_rng(2026)
        best_random = math.inf
        for _ in range(300):
            z = 0.244 + rng.uniform(0.0, 0.026, size=6)
            if prob.max_violation(z) <= 1e-6:
                best_random = min(best_random, prob._cost_only(z))
        assert best_random < math.inf
        assert report["final_cost"] <= best_random + 1e-9

    def test_gradient_matches_fd(self):
        cons = lift_constraints(num_collocation=21)
        prob = _Problem(cons, LIFT_ORACLE, make_clamped_knots(10, 5), 5, 10,
                        cons.t_max)
        rng = np.random.default_rng(11)
        z = 0.244 + rng.uniform(0.0, 0.026, size=6)
        _, g = prob.cost_and_grad(z)
        g_fd = prob._fd_grad(z, prob._cost_only, h=1e-7)
        np.testing.assert_allclose(g, g_fd, rtol=2e-4,
                                   atol=1e-6 * (1 + np.abs(g_fd).max()))

    def test_infeasible_boundary_velocity_raises(self):
        cons = TrajectoryConstraints(
            q_start=[0.0], q_end=[0.350], v_start=[0.0], v_end=[0.30],
            q_lb=[0.0], q_ub=[0.350], v_lb=[-0.210], v_ub=[0.210],
            f_lb=[-1e4], f_ub=[1e4], t_max=10.0, num_collocation=21)
        with pytest.raises(ValueError, match="infeasible boundary"):
            optimize_trajectory(cons, LIFT_ORACLE, optimize_horizon=False)

    def test_horizon_search_prefers_slow_motion(self):
        # squared power falls with the horizon here, so the search should
        # land at (or very near) the cap
        cons = lift_constraints(num_collocation=21, t_max=8.0)
        curve, report = optimize_trajectory(cons, LIFT_ORACLE,
                                            num_ctrl=6,
                                            optimize_horizon=True)
        assert report["t_final"] >= 0.95 * cons.t_max
        assert report["converged"]


# ---------------------------------------------------------------------------
# quintic references
# ---------------------------------------------------------------------------

class TestQuintic:
    def test_midpoint_and_peak_velocity(self):
        # rest-to-rest quintic: s(T/2) = d/2, max |v| = 1.875 d / T
        t, pos, vel = quintic_reference([(0.0, 0.0), (1.0, 0.0)], 2.0,
                                        dt=1e-4)
        mid = np.argmin(np.abs(t - 1.0))
        assert abs(pos[mid] - 0.5) < 1e-9
        assert abs(np.max(np.abs(vel)) - 1.875 * 1.0 / 2.0) < 1e-6

    def test_boundary_rest_conditions(self):
        sched = build_quintic_schedule([(0.1, 0.0), (0.5, 0.0)], 3.0)
        p0, v0 = sched.eval(0.0)
        p1, v1 = sched.eval(3.0)
        assert abs(p0 - 0.1) < 1e-14 and abs(v0) < 1e-14
        assert abs(p1 - 0.5) < 1e-14 and abs(v1) < 1e-14

    def test_dwell_holds_position(self):
        sched = build_quintic_schedule(
            [(0.0, 0.0), (1.0, 2.0), (0.0, 0.0)], 1.0)
        assert sched.total == 4.0
        for t in (1.2, 1.9, 2.9):
            p, v = sched.eval(t)
            assert p == 1.0 and v == 0.0

    def test_velocity_continuity_across_joints(self):
        sched = build_quintic_schedule(
            [(0.0, 0.5), (0.02, 1.0), (0.05, 0.0)], [2.0, 3.0])
        ts = np.linspace(0.0, sched.total, 20001)
        vals = np.array([sched.eval(t) for t in ts])
        # numerical derivative of the sampled position stays close to the
        # reported velocity, so no jumps slipped in at segment boundaries
        v_fd = np.gradient(vals[:, 0], ts)
        assert np.max(np.abs(v_fd - vals[:, 1])) < 5e-3

    def test_negative_dwell_rejected(self):
        with pytest.raises(ValueError, match="non-monotone"):
            build_quintic_schedule([(0.0, 0.0), (1.0, -0.5), (2.0, 0.0)], 1.0)

    def test_wrong_duration_count_rejected(self):
        with pytest.raises(ValueError):
            build_quintic_schedule([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)],
                                   [1.0])


# ---------------------------------------------------------------------------
# extras
# ---------------------------------------------------------------------------

class TestExtras:
    def test_workspace_pointcloud_shape(self):
        pts = workspace_pointcloud([0.0, 0.0], [1.0, 2.0], 5,
                                   fk=lambda q: np.array([q[0], q[1], 0.0]))
        assert pts.shape == (25, 3)
        assert pts[:, 0].min() == 0.0 and pts[:, 1].max() == 2.0

    def test_trajectory_csv_roundtrip(self, tmp_path):
        c = make_curve(n_joints=2, seed=9)
        path = tmp_path / "traj.csv"
        trajectory_to_csv(c, path, n_samples=11)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,q_1,q_2,v_1,v_2,a_1,a_2"
        assert len(lines) == 12
        first = [float(x) for x in lines[1].split(",")]
        q, v, a = eval_trajectory(c, 0.0)
        assert first[0] == 0.0
        np.testing.assert_allclose(first[1:3], q, atol=1e-15)

import numpy as np
import pytest

from riskplan.planner import (
    PlannerError,
    PlannerFailure,
    RecedingHorizonPlanner,
    solve,
    total_cost,
)
from riskplan.riskfield import EntityFields, ZERO_FIELD

from support import (
    fields_with_blobs,
    gradient_fd_instances,
    max_relative_gradient_error,
    standard_config,
    straight_refs,
)


def empty_fields(N):
    return EntityFields(horizon=N, infrastructure=[], objects=[], hidden=[])


class TestTotalCost:
    def test_global_minimum_at_rest(self):
        cfg = standard_config(N=6)
        x_s = np.array([1.0, 2.0, 0.3, 0.0, 0.0])
        refs = np.tile(x_s, (6, 1))
        u = np.zeros((6, 2))
        J, grad, breakdown = total_cost(x_s, u, refs, empty_fields(6), cfg)
        assert J == 0.0
        assert np.all(grad == 0.0)
        assert breakdown["tracking"] == 0.0

    def test_hand_expanded_single_step(self):
        cfg = standard_config(N=1)
        x_s = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
        refs = np.array([[0.4, 0.0, 0.0, 1.0, 0.0]])
        for a, w in ((0.7, 0.01), (-1.2, 0.0), (0.0, 0.1)):
            u = np.array([[a, w]])
            J, _, _ = total_cost(x_s, u, refs, empty_fields(1), cfg)
            expected = 0.5 * a**2 + 1000.0 * w**2 + 0.1 * (0.4 * a) ** 2 + 0.1 * (0.4 * w) ** 2
            assert J == pytest.approx(expected, rel=1e-12)

    def test_nonzero_input_costs_quadratically(self):
        cfg = standard_config(N=1)
        x_s = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
        refs = np.array([[0.4, 0.0, 0.0, 1.0, 0.0]])
        J1, _, _ = total_cost(x_s, np.array([[0.5, 0.0]]), refs, empty_fields(1), cfg)
        J2, _, _ = total_cost(x_s, np.array([[1.0, 0.0]]), refs, empty_fields(1), cfg)
        # pure quadratic in a (tracking term also quadratic in a here)
        assert J2 == pytest.approx(4 * J1, rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        for x_s, u, refs, fields, cfg in gradient_fd_instances(10, seed=42):
            assert max_relative_gradient_error(x_s, u, refs, fields, cfg) <= 1e-5

    def test_bad_shapes_rejected(self):
        cfg = standard_config(N=4)
        with pytest.raises(PlannerError):
            total_cost(np.zeros(5), np.zeros((3, 2)), np.zeros((4, 5)), empty_fields(4), cfg)
        with pytest.raises(PlannerError):
            total_cost(np.zeros(5), np.zeros((4, 2)), np.zeros((3, 5)), empty_fields(4), cfg)


class TestSolve:
    def test_reference_consistent_start_keeps_steering_quiet(self):
        cfg = standard_config()
        x_s = np.array([0.0, 0.0, 0.0, 3.0, 0.0])
        refs = straight_refs(x_s, cfg.horizon, 0.4)
        res = solve(x_s, refs, empty_fields(cfg.horizon), cfg)
        assert np.max(np.abs(res.u_seq[:, 1])) <= 1e-3
        assert res.cost <= 1e-6
        assert res.feasible

    def test_object_on_path_is_avoided(self):
        cfg = standard_config()
        x_s = np.array([0.0, 0.0, 0.0, 4.0, 0.0])
        refs = straight_refs(x_s, cfg.horizon, 0.4)
        fields = fields_with_blobs(cfg.horizon, objects_at=[(6.0, 0.0)])
        baseline = np.zeros((cfg.horizon, 2))
        J_base, _, _ = total_cost(x_s, baseline, refs, fields, cfg)
        res = solve(x_s, refs, fields, cfg, warm_start=baseline)
        assert res.cost <= J_base
        # no trajectory point may land on an occupied cell (blob half-width
        # 2 cells + half cell = 0.5 m around the blob center)
        d = np.hypot(res.x_seq[1:, 0] - 6.0, res.x_seq[1:, 1] - 0.0)
        assert d.min() > 0.5

    def test_risk_is_soft_plan_always_finite(self):
        cfg = standard_config()
        x_s = np.array([0.0, 0.0, 0.0, 5.0, 0.0])
        refs = straight_refs(x_s, cfg.horizon, 0.4)
        # object dead ahead at very short distance
        fields = fields_with_blobs(cfg.horizon, objects_at=[(2.0, 0.0)])
        res = solve(x_s, refs, fields, cfg)
        assert np.isfinite(res.cost)
        assert res.feasible

    def test_monotone_improvement_over_warm_start(self):
        rng = np.random.default_rng(7)
        cfg = standard_config()
        for x_s, u, refs, fields, _ in gradient_fd_instances(5, seed=99):
            warm = np.clip(u, *cfg.input_bounds())
            J_warm, _, _ = total_cost(x_s, warm, refs, fields, cfg)
            res = solve(x_s, refs, fields, cfg, warm_start=warm)
            assert res.cost <= J_warm + 1e-9
        del rng

    def test_bounds_satisfied(self):
        cfg = standard_config()
        x_s = np.array([0.0, 0.0, 0.0, 4.5, 0.0])
        refs = straight_refs(x_s, cfg.horizon, 0.4, v_ref=5.0)
        res = solve(x_s, refs, empty_fields(cfg.horizon), cfg)
        lo, hi = cfg.input_bounds()
        assert np.all(res.u_seq >= lo - 1e-12) and np.all(res.u_seq <= hi + 1e-12)
        b = cfg.vehicle.bounds
        assert res.x_seq[1:, 3].max() <= b.v_max + 1e-6
        assert res.x_seq[1:, 3].min() >= b.v_min - 1e-6
        assert np.abs(res.x_seq[1:, 4]).max() <= b.delta_max + 1e-6

    def test_iteration_budget_respected(self):
        cfg = standard_config()
        for x_s, u, refs, fields, _ in gradient_fd_instances(5, seed=11):
            res = solve(x_s, refs, fields, cfg, warm_start=u)
            assert res.iterations <= cfg.solver.max_iter

    def test_deterministic_results(self):
        cfg = standard_config()
        x_s, u, refs, fields, _ = gradient_fd_instances(1, seed=1)[0]
        r1 = solve(x_s, refs, fields, cfg, warm_start=u)
        r2 = solve(x_s, refs, fields, cfg, warm_start=u)
        assert np.array_equal(r1.u_seq, r2.u_seq)
        assert np.array_equal(r1.x_seq, r2.x_seq)
        assert r1.cost == r2.cost
        assert r1.iterations == r2.iterations

    def test_marginally_out_of_bounds_start_is_clamped(self):
        cfg = standard_config()
        x_s = np.array([0.0, 0.0, 0.0, 5.0 + 1e-9, 0.0])
        refs = straight_refs(np.array([0, 0, 0, 5.0, 0]), cfg.horizon, 0.4)
        res = solve(x_s, refs, empty_fields(cfg.horizon), cfg)
        assert res.x_seq[0, 3] <= 5.0


class _NaNField:
    def eval(self, x, y):
        return float("nan"), 0.0, 0.0

    def eval_many(self, x, y):
        x = np.asarray(x, dtype=float)
        return np.full_like(x, np.nan), np.zeros_like(x), np.zeros_like(x)

    def total(self):
        return float("nan")


class TestRecedingHorizon:
    def test_converges_to_reference_speed_in_empty_world(self):
        cfg = standard_config()
        planner = RecedingHorizonPlanner(cfg)
        from riskplan.dynamics import rollout_array, step_array

        x = np.array([0.0, 0.0, 0.0, 0.0, 0.0])
        for _ in range(30):
            refs = straight_refs(x, cfg.horizon, 0.4, v_ref=4.0)
            u0, res = planner.step(x, refs, empty_fields(cfg.horizon))
            assert not res.fallback
            x = step_array(x, u0, cfg.vehicle)
        assert x[3] == pytest.approx(4.0, abs=0.05)
        assert abs(x[1]) < 0.05  # stays on the line
        del rollout_array

    def test_warm_start_reduces_iterations(self):
        cfg = standard_config()
        planner = RecedingHorizonPlanner(cfg)
        from riskplan.dynamics import step_array

        fields = fields_with_blobs(cfg.horizon, objects_at=[(14.0, 0.3)])
        x = np.array([0.0, 0.0, 0.0, 3.0, 0.0])
        warm_iters, cold_iters = [], []
        for k in range(20):
            refs = straight_refs(x, cfg.horizon, 0.4, v_ref=4.0)
            u0, res = planner.step(x, refs, fields)
            if k > 0:  # first step has no warm start yet
                warm_iters.append(res.iterations)
                cold = solve(x, refs, fields, cfg, warm_start=None)
                cold_iters.append(cold.iterations)
            x = step_array(x, u0, cfg.vehicle)
        assert np.median(warm_iters) < np.median(cold_iters)

    def test_solver_failure_triggers_braking_fallback(self):
        cfg = standard_config()
        planner = RecedingHorizonPlanner(cfg)
        bad = EntityFields(
            horizon=cfg.horizon,
            infrastructure=[_NaNField()],
            objects=[],
            hidden=[],
        )
        x = np.array([0.0, 0.0, 0.0, 3.0, 0.0])
        refs = straight_refs(x, cfg.horizon, 0.4)
        u0, res = planner.step(x, refs, bad)
        assert res.fallback
        assert res.status == "fallback_braking"
        assert u0[0] == cfg.vehicle.bounds.a_min
        assert u0[1] == 0.0

    def test_failure_propagates_from_solve(self):
        cfg = standard_config()
        bad = EntityFields(horizon=cfg.horizon, infrastructure=[_NaNField()], objects=[], hidden=[])
        x = np.array([0.0, 0.0, 0.0, 3.0, 0.0])
        refs = straight_refs(x, cfg.horizon, 0.4)
        with pytest.raises(PlannerFailure):
            solve(x, refs, bad, cfg)


def test_zero_field_is_inert():
    cfg = standard_config(N=3)
    x_s = np.array([0.0, 0.0, 0.0, 1.0, 0.0])
    refs = straight_refs(x_s, 3, 0.4)
    fields = EntityFields(horizon=3, infrastructure=[ZERO_FIELD], objects=[], hidden=[])
    J, grad, _ = total_cost(x_s, np.zeros((3, 2)), refs, fields, cfg)
    assert J == pytest.approx(0.0, abs=1e-12)

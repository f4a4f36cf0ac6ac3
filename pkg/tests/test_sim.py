import math

import numpy as np
import pytest

from riskplan.config import parse_dict, build_runner
from riskplan.geometry import rectangle
from riskplan.sim import Agent, Polyline, compute_metrics, footprint_distance, footprints_collide


def brute_polygon_distance(a, b):
    """Oracle: min over all vertex/edge pairs of segment-segment distance."""
    from riskplan.geometry import segment_distance

    best = math.inf
    va, vb = a.vertices, b.vertices
    for i in range(len(va)):
        p0, p1 = va[i], va[(i + 1) % len(va)]
        for j in range(len(vb)):
            q0, q1 = vb[j], vb[(j + 1) % len(vb)]
            best = min(best, segment_distance(p0, p1, q0, q1))
    return best


def smoke_config(**overrides):
    base = {
        "name": "sim_test",
        "window": {"x_min": -45, "x_max": 45, "y_min": -12, "y_max": 12},
        "timing": {"duration": 6.0},
        "ego": {
            "start": {"x": -38.0, "y": -1.75, "theta": 0.0},
            "route": [[-42.0, -1.75], [42.0, -1.75]],
        },
        "map": {
            "infrastructure": [
                {"id": "s", "vertices": [[-42, -3.8], [42, -3.8], [42, -3.5], [-42, -3.5]]},
                {"id": "n", "vertices": [[-42, 3.5], [42, 3.5], [42, 3.8], [-42, 3.8]]},
            ],
            "buildings": [],
        },
        "hidden_classes": [
            {"id": 0, "name": "vehicle", "v_max": 4.44, "element": "semicircle"}
        ],
        "areas": [
            {"id": 0, "class": 0, "segments": [
                {"vertices": [[-42, 0], [42, 0], [42, 3.5], [-42, 3.5]], "heading": math.pi}]},
        ],
        "agents": [],
    }
    base.update(overrides)
    return parse_dict(base)


class TestPolyline:
    def test_arc_length_parameterization(self):
        p = Polyline([[0, 0], [3, 0], [3, 4]])
        assert p.length == pytest.approx(7.0)
        assert p.point_at(3.0) == pytest.approx((3.0, 0.0))
        assert p.point_at(5.0) == pytest.approx((3.0, 2.0))
        assert p.point_at(99.0) == pytest.approx((3.0, 4.0))  # clamped

    def test_tangent(self):
        p = Polyline([[0, 0], [3, 0], [3, 4]])
        assert p.tangent_at(1.0) == pytest.approx(0.0)
        assert p.tangent_at(5.0) == pytest.approx(math.pi / 2)

    def test_projection(self):
        p = Polyline([[0, 0], [10, 0]])
        assert p.project((3.0, 2.0)) == pytest.approx(3.0)
        assert p.project((-5.0, 1.0)) == pytest.approx(0.0)


class TestAgent:
    def test_scripted_path_is_exact(self):
        ag = Agent(
            agent_id="a",
            class_name="vehicle",
            length=4.5,
            width=1.8,
            path=Polyline([[0, 0], [40, 0]]),
            speed=2.5,
            start_delay=1.0,
        )
        for t in np.linspace(0, 10, 23):
            x, y, heading, _ = ag.pose_at(float(t))
            expected = min(max(0.0, t - 1.0) * 2.5, 40.0)
            assert abs(x - expected) <= 1e-9
            assert abs(y) <= 1e-9
            assert heading == pytest.approx(0.0)

    def test_agent_stops_at_path_end(self):
        ag = Agent("a", "vehicle", 4.5, 1.8, Polyline([[0, 0], [4, 0]]), speed=2.0)
        x, y, _, speed = ag.pose_at(100.0)
        assert (x, y) == pytest.approx((4.0, 0.0))
        assert speed == 0.0


class TestClearance:
    def test_distance_matches_brute_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(40):
            a = rectangle(*rng.uniform(-5, 5, 2), 4.0, 2.0, rng.uniform(0, 3.14))
            b = rectangle(*rng.uniform(-5, 5, 2), 2.0, 1.0, rng.uniform(0, 3.14))
            d = footprint_distance(a, b)
            oracle = brute_polygon_distance(a, b)
            if footprints_collide(a, b):
                assert d == 0.0
            else:
                assert d == pytest.approx(oracle, abs=1e-9)

    def test_touching_is_not_collision(self):
        a = rectangle(0, 0, 2, 2)
        b = rectangle(2, 0, 2, 2)  # shares an edge, zero overlap area
        assert not footprints_collide(a, b)
        assert footprint_distance(a, b) == 0.0

    def test_overlap_is_collision(self):
        a = rectangle(0, 0, 2, 2)
        b = rectangle(1.5, 0, 2, 2)
        assert footprints_collide(a, b)


class TestScenarioLoop:
    def test_empty_world_tracks_centerline(self):
        cfg = smoke_config(timing={"duration": 10.0})
        res = build_runner(cfg, occlusion_enabled=True).run()
        vmax = max(float(r.ego[3]) for r in res.records)
        assert vmax >= 4.9  # reaches the speed bound
        cross_track = max(abs(float(r.ego[1]) + 1.75) for r in res.records)
        assert cross_track <= 0.3
        assert not res.summary.collision

    def test_sense_visibility_cases(self):
        cfg = smoke_config(
            agents=[
                {"id": "near", "class": "vehicle", "path": [[10.0, 1.75], [40.0, 1.75]], "speed": 0.0},
                {"id": "behind_wall", "class": "vehicle", "path": [[20.0, -1.75], [40.0, -1.75]], "speed": 0.0},
            ],
            map={
                "buildings": [{"id": "wall", "vertices": [[5, -3], [6, -3], [6, -0.5], [5, -0.5]]}],
                "infrastructure": [],
            },
        )
        runner = build_runner(cfg, occlusion_enabled=True)
        ego = runner.ego_start.copy()
        region, visible, _ = runner.sense(ego, 0.0)
        assert visible["near"]  # inside 100 m, not occluded
        assert not visible["behind_wall"]  # hidden behind the wall

    def test_far_agent_outside_range_not_visible(self):
        cfg = smoke_config(
            window={"x_min": -45, "x_max": 160, "y_min": -12, "y_max": 12},
            sensor={"radius": 30.0},
            agents=[{"id": "far", "class": "vehicle", "path": [[100.0, 1.75], [140.0, 1.75]], "speed": 0.0}],
        )
        runner = build_runner(cfg, occlusion_enabled=True)
        _, visible, _ = runner.sense(runner.ego_start.copy(), 0.0)
        assert not visible["far"]

    def test_constant_velocity_object_prediction(self):
        cfg = smoke_config(
            agents=[{"id": "mover", "class": "vehicle", "path": [[0.0, 1.75], [40.0, 1.75]], "speed": 2.5}]
        )
        runner = build_runner(cfg, occlusion_enabled=True)
        t = 1.0
        _, _, footprints = runner.sense(runner.ego_start.copy(), t)
        ag = runner.agents[0]
        grids = runner.predict_objects([ag], footprints, t)[0]
        # footprint translated by n * t_s * v cells along +x
        c0 = grids[0].coords()
        c4 = grids[4].coords()
        shift_cells = (4 * 0.4 * 2.5) / runner.spec_objects.resolution
        assert sorted(map(tuple, c0 + np.array([int(round(shift_cells)), 0]))) == sorted(
            map(tuple, c4)
        )

    def test_stationary_agent_prediction_is_static(self):
        cfg = smoke_config(
            agents=[{"id": "parked", "class": "vehicle", "path": [[5.0, 1.75], [40.0, 1.75]], "speed": 0.0}]
        )
        runner = build_runner(cfg, occlusion_enabled=True)
        _, _, footprints = runner.sense(runner.ego_start.copy(), 0.0)
        grids = runner.predict_objects([runner.agents[0]], footprints, 0.0)[0]
        assert all(g is grids[0] for g in grids)

    def test_determinism_bitwise(self, tmp_path):
        from riskplan.sim import write_steps_csv

        cfg = smoke_config(
            timing={"duration": 4.0},
            agents=[{"id": "onc", "class": "vehicle", "path": [[20.0, 1.75], [-40.0, 1.75]], "speed": 4.44}],
        )
        paths = []
        for i in range(2):
            res = build_runner(cfg, occlusion_enabled=True).run()
            p = tmp_path / f"steps_{i}.csv"
            write_steps_csv(res, p)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_collision_halts_run(self):
        # an agent parked across the ego lane directly ahead, zero warning
        cfg = smoke_config(
            timing={"duration": 8.0},
            ego={
                "start": {"x": -38.0, "y": -1.75, "theta": 0.0, "v": 5.0},
                "route": [[-42.0, -1.75], [42.0, -1.75]],
            },
            risk={"objects": {"amplitude": 1.0, "sigma": 0.05, "inflation": 0.0,
                               "resolution": 0.2, "support_multiplier": 3.0}},
            agents=[{"id": "block", "class": "vehicle", "path": [[-33.0, -1.75], [40.0, -1.75]], "speed": 0.0}],
        )
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # deliberately under-resolved kernel
            res = build_runner(cfg, occlusion_enabled=False).run()
        assert res.summary.collision
        assert res.records[-1].collision
        assert res.summary.min_clearance == 0.0
        assert len(res.records) < 20  # halted early


class TestMetrics:
    def test_single_step_record_clearance(self):
        cfg = smoke_config(
            timing={"duration": 0.4},
            agents=[{"id": "a", "class": "vehicle", "path": [[0.0, 1.75], [40.0, 1.75]], "speed": 0.0}],
        )
        res = build_runner(cfg, occlusion_enabled=True).run()
        assert len(res.records) == 1
        ego_fp = rectangle(-38.0, -1.75, 4.5, 1.8, 0.0)
        agent_fp = rectangle(0.0, 1.75, 4.5, 1.8, 0.0)
        assert res.summary.min_clearance == pytest.approx(
            brute_polygon_distance(ego_fp, agent_fp), abs=1e-6
        )

    def test_standstill_intervals(self):
        recs = []
        from riskplan.sim import StepRecord

        speeds = [0.0, 0.05, 2.0, 3.0, 0.08, 0.0, 1.0]
        for i, v in enumerate(speeds):
            recs.append(
                StepRecord(
                    step=i,
                    time=0.4 * i,
                    ego=np.array([0, 0, 0, v, 0.0]),
                    applied=np.zeros(2),
                    agents={},
                    min_clearance=math.inf,
                    collision=False,
                    hidden_cells={},
                    soundness_violations=0,
                    solver_cost=0.0,
                    solver_iterations=1,
                    solver_status="stationary",
                    solver_stationarity=0.0,
                    solver_wall_time_s=0.01,
                )
            )
        summary = compute_metrics(recs, duration=2.8)
        assert len(summary.standstill_intervals) == 2
        for got, want in zip(summary.standstill_intervals, [(0.0, 0.8), (1.6, 2.4)]):
            assert got == pytest.approx(want)

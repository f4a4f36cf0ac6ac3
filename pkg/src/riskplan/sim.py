"""Deterministic closed-loop scenario simulation.

Each step: sense the world from the ego pose, advance the hidden-set
tracker, rasterize every entity, build the continuous risk fields,
sample references along the route, solve the receding-horizon program,
apply the first input, then move the scripted agents.  Everything is
seedless and deterministic; two runs of the same config produce
identical records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import shapely
from numpy.typing import NDArray

from .dynamics import VehicleParams, step_array
from .geometry import Polygon2, VisibilityRegion, rectangle, visibility_region
from .grid import GridSpec, OccupancyGrid, grid_spec_for_window, rasterize_mask, write_pgm
from .occlusion import (
    AreaDef,
    HiddenClassParams,
    build_structuring_element,
    init_hidden,
    merge_areas,
    predict_hidden,
    update_hidden,
)
from .planner import PlannerConfig, RecedingHorizonPlanner
from .riskfield import EntityFields, RiskKernelParams, field_from_grid, sample_kernel


class Polyline:
    """Arc-length parameterized piecewise-linear path."""

    def __init__(self, points):
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("polyline needs at least two 2-D points")
        self.pts = pts
        seg = np.diff(pts, axis=0)
        self._seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(self._seg_len == 0):
            raise ValueError("polyline has zero-length segments")
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_len)])
        self.length = float(self._cum[-1])

    def _locate(self, s: float):
        s = min(max(s, 0.0), self.length)
        i = int(np.searchsorted(self._cum, s, side="right") - 1)
        i = min(i, len(self._seg_len) - 1)
        t = (s - self._cum[i]) / self._seg_len[i]
        return i, t

    def point_at(self, s: float):
        i, t = self._locate(s)
        p = self.pts[i] + t * (self.pts[i + 1] - self.pts[i])
        return float(p[0]), float(p[1])

    def tangent_at(self, s: float) -> float:
        i, _ = self._locate(s)
        d = self.pts[i + 1] - self.pts[i]
        return math.atan2(d[1], d[0])

    def project(self, p) -> float:
        """Arc length of the closest path point to p."""
        p = np.asarray(p, dtype=float)
        best_s, best_d = 0.0, math.inf
        for i in range(len(self._seg_len)):
            a = self.pts[i]
            ab = self.pts[i + 1] - a
            t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
            q = a + t * ab
            d = float(np.hypot(*(p - q)))
            if d < best_d:
                best_d = d
                best_s = self._cum[i] + t * self._seg_len[i]
        return best_s


@dataclass
class Agent:
    """Scripted road user following a polyline at constant speed."""

    agent_id: str
    class_name: str  # vehicle | pedestrian | motorcycle | truck
    length: float
    width: float
    path: Polyline
    speed: float
    start_delay: float = 0.0

    def arc_at(self, t: float) -> float:
        return self.speed * max(0.0, t - self.start_delay)

    def pose_at(self, t: float):
        s = self.arc_at(t)
        x, y = self.path.point_at(s)
        heading = self.path.tangent_at(s)
        moving = self.speed > 0.0 and t >= self.start_delay and s < self.path.length
        return x, y, heading, (self.speed if moving else 0.0)

    def footprint_at(self, t: float) -> Polygon2:
        x, y, heading, _ = self.pose_at(t)
        return rectangle(x, y, self.length, self.width, heading)

    def velocity_at(self, t: float):
        x, y, heading, speed = self.pose_at(t)
        return speed * math.cos(heading), speed * math.sin(heading)


@dataclass
class WorldMap:
    buildings: list[Polygon2]
    infrastructure: list[Polygon2]
    infrastructure_ids: list[str]
    areas: list[AreaDef]
    hidden_classes: list[HiddenClassParams]
    class_names: dict[int, str]


# agent classes covered by each hidden class name
_HIDDEN_CLASS_MEMBERS = {
    "vehicle": {"vehicle", "motorcycle", "truck"},
    "pedestrian": {"pedestrian"},
}


@dataclass
class AgentObs:
    x: float
    y: float
    theta: float
    speed: float
    visible: bool
    distance: float  # footprint-to-footprint distance to the ego


@dataclass
class StepRecord:
    step: int
    time: float
    ego: NDArray[np.float64]  # (5,)
    applied: NDArray[np.float64]  # (2,)
    agents: dict[str, AgentObs]
    min_clearance: float
    collision: bool
    hidden_cells: dict[str, int]
    soundness_violations: int
    solver_cost: float
    solver_iterations: int
    solver_status: str
    solver_stationarity: float
    solver_wall_time_s: float
    cost_breakdown: dict[str, float] = field(default_factory=dict)


@dataclass
class RunSummary:
    collision: bool
    collision_time: float | None
    min_clearance: float
    first_detection: dict[str, float]  # agent id -> time of first visibility
    speed_before_detection: dict[str, float]
    detection_distance: dict[str, float]
    standstill_intervals: list[tuple[float, float]]
    soundness_violations: int
    mean_solve_time_s: float
    median_solve_time_s: float
    max_iterations: int
    steps: int
    duration: float

    def to_text(self) -> str:
        lines = [
            f"steps: {self.steps}",
            f"collision: {'yes' if self.collision else 'no'}"
            + (f" at t={self.collision_time:.1f}s" if self.collision else ""),
            f"min clearance [m]: {self.min_clearance:.3f}",
            f"soundness violations: {self.soundness_violations}",
            f"mean solve time [s]: {self.mean_solve_time_s:.3f}",
            f"median solve time [s]: {self.median_solve_time_s:.3f}",
            f"max solver iterations: {self.max_iterations}",
        ]
        for aid, t in sorted(self.first_detection.items()):
            lines.append(
                f"first detection of {aid}: t={t:.1f}s"
                f" v_ego_before={self.speed_before_detection.get(aid, float('nan')):.2f} m/s"
                f" distance={self.detection_distance.get(aid, float('nan')):.2f} m"
            )
        if self.standstill_intervals:
            ivals = ", ".join(f"[{a:.1f}, {b:.1f}]" for a, b in self.standstill_intervals)
            lines.append(f"standstill intervals [s]: {ivals}")
        return "\n".join(lines)


@dataclass
class RunResult:
    records: list[StepRecord]
    summary: RunSummary
    occlusion_enabled: bool
    scenario_name: str


def _shapely_poly(poly: Polygon2) -> shapely.Polygon:
    return shapely.Polygon(poly.vertices)


def footprint_distance(a: Polygon2, b: Polygon2) -> float:
    """Boundary-to-boundary distance; 0.0 when the footprints overlap."""
    return float(shapely.distance(_shapely_poly(a), _shapely_poly(b)))


def footprints_collide(a: Polygon2, b: Polygon2) -> bool:
    """Collision means positive-area overlap, not mere touching."""
    inter = shapely.intersection(_shapely_poly(a), _shapely_poly(b))
    return float(inter.area) > 0.0


class ScenarioRunner:
    """Owns all per-scenario caches and executes the closed loop."""

    def __init__(
        self,
        world: WorldMap,
        agents: list[Agent],
        planner_cfg: PlannerConfig,
        route: Polyline,
        ego_start: NDArray[np.float64],
        ego_footprint: tuple[float, float],
        v_ref: float,
        sensor_radius: float,
        sensor_resolution_deg: float,
        duration: float,
        kernels: dict[str, RiskKernelParams],
        resolutions: dict[str, float],
        window: tuple[float, float, float, float],
        infra_kernels: list[RiskKernelParams] | None = None,
        occlusion_enabled: bool = True,
        scenario_name: str = "scenario",
        dump_grid_dir=None,
        object_inflation: float = 0.9,
    ):
        self.world = world
        self.agents = agents
        self.cfg = planner_cfg
        self.route = route
        self.ego_start = np.asarray(ego_start, dtype=float)
        self.ego_len, self.ego_wid = ego_footprint
        self.v_ref = v_ref
        self.sensor_radius = sensor_radius
        self.sensor_resolution_deg = sensor_resolution_deg
        self.duration = duration
        self.occlusion_enabled = occlusion_enabled
        self.scenario_name = scenario_name
        self.dump_grid_dir = dump_grid_dir

        x0, x1, y0, y1 = window
        self.spec_objects = grid_spec_for_window(x0, x1, y0, y1, resolutions["objects"])
        self.spec_infra = grid_spec_for_window(x0, x1, y0, y1, resolutions["infrastructure"])
        self.spec_hidden = grid_spec_for_window(x0, x1, y0, y1, resolutions["hidden"])
        self.kernels = kernels
        self._object_kernel = sample_kernel(kernels["objects"], resolutions["objects"])
        self._hidden_kernel = sample_kernel(kernels["hidden"], resolutions["hidden"])
        # objects are planned against as points, so their occupancy is
        # inflated by roughly the ego half-width before the risk kernel
        self._inflation_element = None
        if object_inflation > 0.0:
            self._inflation_element = build_structuring_element(
                HiddenClassParams(class_id=-1, v_max=object_inflation, element_shape="disk"),
                t_s=1.0,
                spec=self.spec_objects,
            )

        # infrastructure is static: rasterize and fit once; individual
        # elements (e.g. solid markings) may override the class kernel
        if infra_kernels is None:
            infra_kernels = [kernels["infrastructure"]] * len(world.infrastructure)
        self._infra_fields = [
            field_from_grid(
                OccupancyGrid(self.spec_infra, rasterize_mask(p, self.spec_infra)),
                sample_kernel(kp, resolutions["infrastructure"]),
            )
            for p, kp in zip(world.infrastructure, infra_kernels)
        ]
        self._class_by_id = {c.class_id: c for c in world.hidden_classes}
        self._class_area_masks: dict[int, NDArray[np.bool_]] = {}
        for c in world.hidden_classes:
            acc = np.zeros((self.spec_hidden.nx, self.spec_hidden.ny), dtype=bool)
            for a in world.areas:
                if a.class_id == c.class_id:
                    for seg in a.segments:
                        acc |= rasterize_mask(seg.region, self.spec_hidden)
            self._class_area_masks[c.class_id] = acc
        # static agents keep one footprint grid so their fields are reused
        self._static_grid_cache: dict[str, OccupancyGrid] = {}

    # ------------------------------------------------------------------ sensing

    def _ego_footprint(self, ego) -> Polygon2:
        return rectangle(ego[0], ego[1], self.ego_len, self.ego_wid, ego[2])

    def sense(self, ego, t: float):
        """Visibility region and the set of currently visible agents."""
        occluders = list(self.world.buildings)
        footprints = {}
        for ag in self.agents:
            fp = ag.footprint_at(t)
            footprints[ag.agent_id] = fp
            occluders.append(fp)
        region = visibility_region(
            (float(ego[0]), float(ego[1])),
            self.sensor_radius,
            occluders,
            angular_resolution_deg=self.sensor_resolution_deg,
        )
        visible = {}
        for ag in self.agents:
            fp = footprints[ag.agent_id]
            cx = fp.vertices.mean(axis=0)
            probes = np.vstack([fp.vertices, cx])
            visible[ag.agent_id] = bool(region.contains_points(probes).any())
        return region, visible, footprints

    # ------------------------------------------------------------- object fields

    def _rasterize_object(self, footprint: Polygon2) -> OccupancyGrid:
        mask = rasterize_mask(footprint, self.spec_objects)
        if self._inflation_element is not None:
            out = np.zeros_like(mask)
            from .grid import dilate_into

            dilate_into(mask, self._inflation_element, out)
            mask = out
        return OccupancyGrid(self.spec_objects, mask)

    def _object_grid(self, ag: Agent, footprint: Polygon2, t: float, dt_steps: int):
        """Occupancy of an agent footprint translated dt_steps ahead."""
        if ag.speed == 0.0 or t < ag.start_delay or ag.arc_at(t) >= ag.path.length:
            key = ag.agent_id
            if key not in self._static_grid_cache:
                self._static_grid_cache[key] = self._rasterize_object(footprint)
            return self._static_grid_cache[key]
        vx, vy = ag.velocity_at(t)
        ts = self.cfg.vehicle.t_s
        moved = Polygon2(footprint.vertices + np.array([vx, vy]) * ts * dt_steps, trusted=True)
        return self._rasterize_object(moved)

    def predict_objects(self, visible_agents: list[Agent], footprints, t: float):
        """Constant-velocity footprint extrapolation for n = 0..N."""
        N = self.cfg.horizon
        out = []
        for ag in visible_agents:
            fp = footprints[ag.agent_id]
            grids = [self._object_grid(ag, fp, t, n) for n in range(N + 1)]
            out.append(grids)
        return out

    # ------------------------------------------------------------------ the loop

    def _references(self, ego):
        N = self.cfg.horizon
        ts = self.cfg.vehicle.t_s
        s0 = self.route.project(ego[:2])
        refs = np.zeros((N, 5))
        for n in range(1, N + 1):
            s = s0 + self.v_ref * ts * n
            x, y = self.route.point_at(s)
            refs[n - 1] = [x, y, self.route.tangent_at(s), self.v_ref, 0.0]
        return refs

    def _soundness_violations(self, visible, footprints, merged, ever_detected) -> int:
        """Cells of never-yet-detected class members that escaped the hidden sets.

        Once an agent has been detected it is handed to object tracking;
        the hidden sets only guarantee coverage up to first detection.
        """
        total = 0
        for ag in self.agents:
            if visible[ag.agent_id] or ever_detected.get(ag.agent_id, False):
                continue
            class_ids = [
                cid
                for cid, cname in self.world.class_names.items()
                if ag.class_name in _HIDDEN_CLASS_MEMBERS.get(cname, {cname})
            ]
            if not class_ids:
                continue
            cells = rasterize_mask(footprints[ag.agent_id], self.spec_hidden)
            for cid in class_ids:
                in_area = cells & self._class_area_masks[cid]
                if not in_area.any():
                    continue
                escaped = in_area & ~merged[cid][0].cells
                total += int(escaped.sum())
        return total

    def run(self) -> RunResult:
        ego = self.ego_start.copy()
        planner = RecedingHorizonPlanner(self.cfg)
        N = self.cfg.horizon
        ts = self.cfg.vehicle.t_s
        n_steps = int(round(self.duration / ts))
        records: list[StepRecord] = []
        hidden_state = None
        collision = False
        ever_detected: dict[str, bool] = {ag.agent_id: False for ag in self.agents}

        for k in range(n_steps):
            t = k * ts
            region, visible, footprints = self.sense(ego, t)

            ego_fp = self._ego_footprint(ego)
            distances = {
                aid: footprint_distance(ego_fp, fp) for aid, fp in footprints.items()
            }
            collided_now = any(
                footprints_collide(ego_fp, fp) for fp in footprints.values()
            )

            if hidden_state is None:
                hidden_state = init_hidden(
                    region,
                    self.world.areas,
                    self.spec_hidden,
                    self.world.hidden_classes,
                    ts,
                )
            else:
                hidden_state = update_hidden(hidden_state, region)
            hidden_state = predict_hidden(hidden_state, N)
            merged = merge_areas(hidden_state)
            violations = self._soundness_violations(visible, footprints, merged, ever_detected)
            for aid, vis in visible.items():
                if vis:
                    ever_detected[aid] = True
            hidden_counts = {
                self.world.class_names[cid]: grids[0].count() for cid, grids in merged.items()
            }

            if self.dump_grid_dir is not None:
                for cid, grids in merged.items():
                    name = self.world.class_names[cid]
                    write_pgm(grids[0], f"{self.dump_grid_dir}/hidden_{name}_step{k:04d}.pgm")

            visible_agents = [ag for ag in self.agents if visible[ag.agent_id]]
            object_grids = self.predict_objects(visible_agents, footprints, t)
            object_fields = []
            for grids in object_grids:
                cache: dict[int, object] = {}
                per_step = []
                for g in grids:
                    key = id(g.cells)
                    if key not in cache:
                        cache[key] = field_from_grid(g, self._object_kernel)
                    per_step.append(cache[key])
                object_fields.append(per_step)
            hidden_fields = []
            if self.occlusion_enabled:
                for cid in sorted(merged):
                    per_step = [field_from_grid(g, self._hidden_kernel) for g in merged[cid]]
                    hidden_fields.append(per_step)
            fields = EntityFields(
                horizon=N,
                infrastructure=self._infra_fields,
                objects=object_fields,
                hidden=hidden_fields,
            )

            refs = self._references(ego)
            u0, result = planner.step(ego, refs, fields)

            agent_obs = {}
            for ag in self.agents:
                x, y, heading, speed = ag.pose_at(t)
                agent_obs[ag.agent_id] = AgentObs(
                    x=x,
                    y=y,
                    theta=heading,
                    speed=speed,
                    visible=visible[ag.agent_id],
                    distance=distances[ag.agent_id],
                )
            records.append(
                StepRecord(
                    step=k,
                    time=t,
                    ego=ego.copy(),
                    applied=np.asarray(u0, dtype=float).copy(),
                    agents=agent_obs,
                    min_clearance=min(distances.values()) if distances else math.inf,
                    collision=collided_now,
                    hidden_cells=hidden_counts,
                    soundness_violations=violations,
                    solver_cost=result.cost,
                    solver_iterations=result.iterations,
                    solver_status=result.status,
                    solver_stationarity=result.stationarity,
                    solver_wall_time_s=result.wall_time_s,
                    cost_breakdown=dict(result.breakdown),
                )
            )
            if collided_now:
                collision = True
                break
            ego = step_array(ego, u0, self.cfg.vehicle)

        summary = compute_metrics(records, self.duration)
        return RunResult(
            records=records,
            summary=summary,
            occlusion_enabled=self.occlusion_enabled,
            scenario_name=self.scenario_name,
        )


def compute_metrics(records: list[StepRecord], duration: float) -> RunSummary:
    if not records:
        raise ValueError("no records to summarize")
    collision = any(r.collision for r in records)
    collision_time = next((r.time for r in records if r.collision), None)
    min_clearance = min(r.min_clearance for r in records)
    if collision:
        min_clearance = 0.0
    first_detection: dict[str, float] = {}
    speed_before: dict[str, float] = {}
    det_distance: dict[str, float] = {}
    agent_ids = records[0].agents.keys()
    for aid in agent_ids:
        for i, r in enumerate(records):
            if r.agents[aid].visible:
                first_detection[aid] = r.time
                det_distance[aid] = r.agents[aid].distance
                speed_before[aid] = float(records[max(0, i - 1)].ego[3])
                break
    standstill = []
    start = None
    for r in records:
        if r.ego[3] <= 0.1:
            if start is None:
                start = r.time
        elif start is not None:
            standstill.append((start, r.time))
            start = None
    if start is not None:
        standstill.append((start, records[-1].time))
    solve_times = np.array([r.solver_wall_time_s for r in records])
    return RunSummary(
        collision=collision,
        collision_time=collision_time,
        min_clearance=min_clearance,
        first_detection=first_detection,
        speed_before_detection=speed_before,
        detection_distance=det_distance,
        standstill_intervals=standstill,
        soundness_violations=sum(r.soundness_violations for r in records),
        mean_solve_time_s=float(solve_times.mean()),
        median_solve_time_s=float(np.median(solve_times)),
        max_iterations=max(r.solver_iterations for r in records),
        steps=len(records),
        duration=duration,
    )


# ------------------------------------------------------------------ CSV logging


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def steps_csv_header(agent_ids: list[str], hidden_class_names: list[str]) -> list[str]:
    cols = [
        "step",
        "time",
        "ego_x",
        "ego_y",
        "ego_theta",
        "ego_v",
        "ego_delta",
        "applied_a",
        "applied_omega",
        "min_clearance",
        "collision",
        "soundness_violations",
        "solver_cost",
        "solver_iterations",
        "solver_status",
        "solver_stationarity",
        "cost_tracking",
        "cost_input",
        "cost_infrastructure",
        "cost_objects",
        "cost_hidden",
    ]
    for name in hidden_class_names:
        cols.append(f"hidden_cells_{name}")
    for aid in agent_ids:
        cols += [
            f"agent_{aid}_x",
            f"agent_{aid}_y",
            f"agent_{aid}_theta",
            f"agent_{aid}_v",
            f"agent_{aid}_visible",
            f"agent_{aid}_distance",
        ]
    return cols


def write_steps_csv(result: RunResult, path):
    records = result.records
    agent_ids = sorted(records[0].agents.keys())
    class_names = sorted(records[0].hidden_cells.keys())
    lines = [",".join(steps_csv_header(agent_ids, class_names))]
    for r in records:
        row = [
            r.step,
            r.time,
            r.ego[0],
            r.ego[1],
            r.ego[2],
            r.ego[3],
            r.ego[4],
            r.applied[0],
            r.applied[1],
            r.min_clearance,
            r.collision,
            r.soundness_violations,
            r.solver_cost,
            r.solver_iterations,
            r.solver_status,
            r.solver_stationarity,
            r.cost_breakdown.get("tracking", float("nan")),
            r.cost_breakdown.get("input", float("nan")),
            r.cost_breakdown.get("infrastructure", float("nan")),
            r.cost_breakdown.get("objects", float("nan")),
            r.cost_breakdown.get("hidden", float("nan")),
        ]
        for name in class_names:
            row.append(r.hidden_cells[name])
        for aid in agent_ids:
            obs = r.agents[aid]
            row += [obs.x, obs.y, obs.theta, obs.speed, obs.visible, obs.distance]
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")


def write_solves_csv(result: RunResult, path):
    cols = [
        "step",
        "iterations",
        "cost",
        "tracking",
        "input",
        "infrastructure",
        "objects",
        "hidden",
        "stationarity",
        "status",
        "wall_time_s",
    ]
    lines = [",".join(cols)]
    for r in result.records:
        row = [
            r.step,
            r.solver_iterations,
            r.solver_cost,
            r.cost_breakdown.get("tracking", float("nan")),
            r.cost_breakdown.get("input", float("nan")),
            r.cost_breakdown.get("infrastructure", float("nan")),
            r.cost_breakdown.get("objects", float("nan")),
            r.cost_breakdown.get("hidden", float("nan")),
            r.solver_stationarity,
            r.solver_status,
            r.solver_wall_time_s,
        ]
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", newline="") as f:
        f.write("\n".join(lines) + "\n")

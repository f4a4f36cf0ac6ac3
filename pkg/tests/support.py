"""Shared fixtures for planner-level tests: configs and synthetic fields."""

import numpy as np

from riskplan.dynamics import VehicleBounds, VehicleParams
from riskplan.grid import GridSpec, OccupancyGrid
from riskplan.planner import PlannerConfig, SolverSettings
from riskplan.riskfield import RiskKernelParams, build_entity_fields

TABLE_STAGE = np.array([0.0, 0.0, 0.0, 0.1, 0.1])
TABLE_INPUT = np.array([0.5, 1000.0])
TABLE_TERMINAL = np.array([20.0, 20.0, 1.0, 0.1, 0.1])

OBJECT_KERNEL = RiskKernelParams(a=1300.0, sigma=0.36)
INFRA_KERNEL = RiskKernelParams(a=200.0, sigma=0.25)
HIDDEN_KERNEL = RiskKernelParams(a=110.0, sigma=0.2)


def standard_config(N=10, t_s=0.4, **solver_overrides) -> PlannerConfig:
    return PlannerConfig(
        horizon=N,
        stage_weights=TABLE_STAGE.copy(),
        input_weights=TABLE_INPUT.copy(),
        terminal_weights=TABLE_TERMINAL.copy(),
        vehicle=VehicleParams(wheelbase=2.7, t_s=t_s, bounds=VehicleBounds()),
        solver=SolverSettings(**solver_overrides),
    )


def blob_grid(spec: GridSpec, cx: float, cy: float, half_cells=2) -> OccupancyGrid:
    """Small occupied block centered on the nearest cell to (cx, cy)."""
    cells = np.zeros((spec.nx, spec.ny), dtype=bool)
    i = int(np.floor((cx - spec.origin[0]) / spec.resolution + 0.5))
    j = int(np.floor((cy - spec.origin[1]) / spec.resolution + 0.5))
    i0, i1 = max(0, i - half_cells), min(spec.nx, i + half_cells + 1)
    j0, j1 = max(0, j - half_cells), min(spec.ny, j + half_cells + 1)
    cells[i0:i1, j0:j1] = True
    return OccupancyGrid(spec, cells)


def fields_with_blobs(N, infra_at=(), objects_at=(), hidden_at=(), spec=None):
    """EntityFields with static blob entities at the given world points."""
    spec = spec or GridSpec(resolution=0.2, origin=(-20.0, -20.0), nx=300, ny=200)
    infra = [blob_grid(spec, x, y) for x, y in infra_at]
    objs = [[blob_grid(spec, x, y)] * (N + 1) for x, y in objects_at]
    hid = [[blob_grid(spec, x, y)] * (N + 1) for x, y in hidden_at]
    return build_entity_fields(
        infrastructure=infra,
        objects=objs,
        hidden=hid,
        horizon=N,
        infra_params=INFRA_KERNEL,
        object_params=OBJECT_KERNEL,
        hidden_params=HIDDEN_KERNEL,
    )


def straight_refs(x_s, N, t_s, v_ref=None):
    """References continuing the current course at v_ref (default: current v)."""
    x, y, theta, v, _ = x_s
    v_ref = v if v_ref is None else v_ref
    refs = np.zeros((N, 5))
    for n in range(1, N + 1):
        refs[n - 1] = [
            x + np.cos(theta) * v_ref * t_s * n,
            y + np.sin(theta) * v_ref * t_s * n,
            theta,
            v_ref,
            0.0,
        ]
    return refs


def gradient_fd_instances(n_instances, N=10, seed=1234):
    """Random planning instances with at least three active risk fields.

    Blobs are dropped near the zero-input rollout so the fields actually
    shape the cost along the trajectory.
    """
    from riskplan.dynamics import rollout_array

    rng = np.random.default_rng(seed)
    cfg = standard_config(N=N)
    out = []
    for _ in range(n_instances):
        x_s = np.array(
            [
                rng.uniform(-3, 3),
                rng.uniform(-3, 3),
                rng.uniform(-np.pi, np.pi),
                rng.uniform(0.5, 5.0),
                rng.uniform(-0.3, 0.3),
            ]
        )
        u = np.stack(
            [rng.uniform(-1.5, 1.0, N), rng.uniform(-0.2, 0.2, N)], axis=1
        )
        base = rollout_array(x_s, u, cfg.vehicle)
        picks = rng.choice(np.arange(1, N + 1), size=3, replace=False)
        jitter = rng.uniform(-0.4, 0.4, (3, 2))
        spots = base[picks, :2] + jitter
        spec = GridSpec(
            resolution=0.2,
            origin=(float(base[:, 0].min() - 12), float(base[:, 1].min() - 12)),
            nx=int(np.ptp(base[:, 0]) / 0.2 + 120) + 1,
            ny=int(np.ptp(base[:, 1]) / 0.2 + 120) + 1,
        )
        fields = fields_with_blobs(
            N,
            infra_at=[tuple(spots[0])],
            objects_at=[tuple(spots[1])],
            hidden_at=[tuple(spots[2])],
            spec=spec,
        )
        refs = straight_refs(x_s, N, cfg.vehicle.t_s, v_ref=rng.uniform(1.0, 5.0))
        out.append((x_s, u, refs, fields, cfg))
    return out


def max_relative_gradient_error(x_s, u, refs, fields, cfg, h=1e-6):
    from riskplan.planner import total_cost

    _, grad, _ = total_cost(x_s, u, refs, fields, cfg)
    worst = 0.0
    for n in range(cfg.horizon):
        for k in range(2):
            up = u.copy()
            um = u.copy()
            up[n, k] += h
            um[n, k] -= h
            jp, _, _ = total_cost(x_s, up, refs, fields, cfg)
            jm, _, _ = total_cost(x_s, um, refs, fields, cfg)
            fd = (jp - jm) / (2 * h)
            rel = abs(grad[n, k] - fd) / max(1.0, abs(fd))
            worst = max(worst, rel)
    return worst

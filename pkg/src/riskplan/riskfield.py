"""Risk fields: Gaussian kernels, grid convolution, bicubic surfaces.

An entity's binary occupancy grid is convolved with a sampled Gaussian
risk kernel to produce a discrete risk field (DRF), which is then fitted
with an interpolating bicubic spline (not-a-knot end conditions) to give
a continuous risk field (CRF) with analytic first partial derivatives.
Outside its covered rectangle a CRF is identically zero; the kernel is
truncated at support_multiplier * sigma so fields have compact support.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.interpolate import CubicSpline

from .grid import GridSpec, OccupancyGrid


class RiskFieldError(ValueError):
    """Contract violation in risk-field construction or evaluation."""


@dataclass(frozen=True)
class RiskKernelParams:
    """Amplitude and width of one entity class's risk kernel."""

    a: float
    sigma: float
    support_multiplier: float = 3.0

    def __post_init__(self):
        if self.a <= 0:
            raise RiskFieldError("amplitude must be positive")
        if self.sigma <= 0:
            raise RiskFieldError("sigma must be positive")
        if self.support_multiplier < 1:
            raise RiskFieldError("support_multiplier must be >= 1")


@dataclass(frozen=True)
class RiskKernelMatrix:
    """Square odd-sized sampling of the kernel, centered on (0, 0)."""

    values: NDArray[np.float64]
    coords: NDArray[np.float64]  # shared by both axes (b == p)
    resolution: float
    params: "RiskKernelParams | None" = None

    @property
    def size(self) -> int:
        return self.values.shape[0]

    @property
    def half_width(self) -> int:
        return (self.size - 1) // 2


def risk_kernel_value(params: RiskKernelParams, z1, z2):
    """a * exp(-(z1^2 + z2^2) / (2 sigma^2))."""
    z1 = np.asarray(z1, dtype=float)
    z2 = np.asarray(z2, dtype=float)
    return params.a * np.exp(-(z1**2 + z2**2) / (2.0 * params.sigma**2))


def sample_kernel(params: RiskKernelParams, resolution: float) -> RiskKernelMatrix:
    """Sample the kernel on an odd square lattice spanning +-support_multiplier*sigma."""
    if resolution <= 0:
        raise RiskFieldError("resolution must be positive")
    if params.sigma < 0.5 * resolution:
        warnings.warn(
            f"kernel sigma {params.sigma} under-resolved at cell size {resolution}",
            stacklevel=2,
        )
    half = int(math.ceil(params.support_multiplier * params.sigma / resolution))
    coords = resolution * np.arange(-half, half + 1, dtype=float)
    values = risk_kernel_value(params, coords[:, None], coords[None, :])
    return RiskKernelMatrix(values=values, coords=coords, resolution=resolution, params=params)


@dataclass(frozen=True)
class DiscreteRiskField:
    """Risk sampled on the occupancy lattice extended by the kernel half-width."""

    values: NDArray[np.float64]
    spec: GridSpec  # node (i, j) sits at spec.cell_center(i, j)


def convolve(g: OccupancyGrid, K: RiskKernelMatrix) -> DiscreteRiskField:
    """Full 2-D discrete convolution of the occupancy matrix with the kernel.

    Output shape is (nx + b - 1, ny + b - 1); the node lattice is shifted
    by the kernel half-width so risk stays centered on occupied cells.
    Accumulation runs over kernel entries in index order, so every output
    node is summed in the same deterministic order as a per-node loop.
    """
    if abs(K.resolution - g.spec.resolution) > 1e-12:
        raise RiskFieldError("kernel and grid resolutions differ")
    M = g.cells.astype(float)
    nx, ny = M.shape
    b = K.size
    out = np.zeros((nx + b - 1, ny + b - 1))
    for u in range(b):
        for v in range(b):
            w = K.values[u, v]
            if w != 0.0:
                out[u : u + nx, v : v + ny] += w * M
    hw = K.half_width
    spec = GridSpec(
        resolution=g.spec.resolution,
        origin=(
            g.spec.origin[0] - hw * g.spec.resolution,
            g.spec.origin[1] - hw * g.spec.resolution,
        ),
        nx=nx + b - 1,
        ny=ny + b - 1,
    )
    return DiscreteRiskField(values=out, spec=spec)


# Hermite basis of a bicubic patch on the unit square.
_H = np.array(
    [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
        [-3.0, 3.0, -2.0, -1.0],
        [2.0, -2.0, 1.0, 1.0],
    ]
)


class ContinuousRiskField:
    """Interpolating bicubic spline over a DRF lattice.

    Stores node values and the not-a-knot spline's partial derivatives at
    the nodes; each cell's bicubic patch is reconstructed at evaluation.
    Value and both first partials are continuous on the covered rectangle
    and defined as exactly zero outside it.
    """

    __slots__ = ("x0", "y0", "h", "nx", "ny", "f", "fx", "fy", "fxy")

    def __init__(self, x0, y0, h, f, fx, fy, fxy):
        self.x0 = float(x0)
        self.y0 = float(y0)
        self.h = float(h)
        self.nx, self.ny = f.shape
        self.f = f
        self.fx = fx
        self.fy = fy
        self.fxy = fxy

    @property
    def x_max(self) -> float:
        return self.x0 + self.h * (self.nx - 1)

    @property
    def y_max(self) -> float:
        return self.y0 + self.h * (self.ny - 1)

    def eval(self, x: float, y: float) -> tuple[float, float, float]:
        """(value, d/dx, d/dy) at a single point; zero outside the rectangle."""
        v, gx, gy = self.eval_many(np.asarray([x], float), np.asarray([y], float))
        return float(v[0]), float(gx[0]), float(gy[0])

    def eval_many(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise RiskFieldError("evaluation points must be finite")
        v = np.zeros_like(x)
        gx = np.zeros_like(x)
        gy = np.zeros_like(x)
        inside = (x >= self.x0) & (x <= self.x_max) & (y >= self.y0) & (y <= self.y_max)
        if not inside.any():
            return v, gx, gy
        xi = x[inside]
        yi = y[inside]
        i = np.clip(np.floor((xi - self.x0) / self.h).astype(int), 0, self.nx - 2)
        j = np.clip(np.floor((yi - self.y0) / self.h).astype(int), 0, self.ny - 2)
        t = (xi - self.x0) / self.h - i
        u = (yi - self.y0) / self.h - j
        ip, jp = i + 1, j + 1
        h1, h2 = self.h, self.h * self.h
        q = len(xi)
        F = np.empty((q, 4, 4))
        F[:, 0, 0] = self.f[i, j]
        F[:, 0, 1] = self.f[i, jp]
        F[:, 1, 0] = self.f[ip, j]
        F[:, 1, 1] = self.f[ip, jp]
        F[:, 0, 2] = self.fy[i, j] * h1
        F[:, 0, 3] = self.fy[i, jp] * h1
        F[:, 1, 2] = self.fy[ip, j] * h1
        F[:, 1, 3] = self.fy[ip, jp] * h1
        F[:, 2, 0] = self.fx[i, j] * h1
        F[:, 2, 1] = self.fx[i, jp] * h1
        F[:, 3, 0] = self.fx[ip, j] * h1
        F[:, 3, 1] = self.fx[ip, jp] * h1
        F[:, 2, 2] = self.fxy[i, j] * h2
        F[:, 2, 3] = self.fxy[i, jp] * h2
        F[:, 3, 2] = self.fxy[ip, j] * h2
        F[:, 3, 3] = self.fxy[ip, jp] * h2
        A = np.einsum("pi,qij,rj->qpr", _H, F, _H)
        ones = np.ones_like(t)
        T = np.stack([ones, t, t * t, t * t * t], axis=1)
        U = np.stack([ones, u, u * u, u * u * u], axis=1)
        Td = np.stack([np.zeros_like(t), ones, 2 * t, 3 * t * t], axis=1)
        Ud = np.stack([np.zeros_like(u), ones, 2 * u, 3 * u * u], axis=1)
        v[inside] = np.einsum("qp,qpr,qr->q", T, A, U)
        gx[inside] = np.einsum("qp,qpr,qr->q", Td, A, U) / h1
        gy[inside] = np.einsum("qp,qpr,qr->q", T, A, Ud) / h1
        return v, gx, gy

    def node_values(self) -> NDArray[np.float64]:
        return self.f

    def total(self) -> float:
        """Sum of node values (monotone proxy for the field's mass)."""
        return float(self.f.sum())


class ZeroRiskField:
    """Field of an empty occupancy grid: identically zero everywhere."""

    __slots__ = ()

    def eval(self, x, y):
        return 0.0, 0.0, 0.0

    def eval_many(self, x, y):
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)) or not np.all(np.isfinite(np.asarray(y, dtype=float))):
            raise RiskFieldError("evaluation points must be finite")
        z = np.zeros_like(x)
        return z, z.copy(), z.copy()

    def total(self) -> float:
        return 0.0


ZERO_FIELD = ZeroRiskField()

RiskField = ContinuousRiskField | ZeroRiskField


def fit_spline(d: DiscreteRiskField) -> ContinuousRiskField:
    """Unique not-a-knot interpolating bicubic surface through the DRF nodes.

    Partial derivatives at the nodes are taken from the 1-D not-a-knot
    splines along each axis (and the mixed derivative from the spline of
    the cross-axis derivatives); a bicubic patch through those corner
    data reproduces the tensor-product spline exactly.
    """
    V = np.asarray(d.values, dtype=float)
    if V.ndim != 2 or V.shape[0] < 4 or V.shape[1] < 4:
        raise RiskFieldError("need at least 4x4 nodes to fit a bicubic surface")
    if not np.all(np.isfinite(V)):
        raise RiskFieldError("field values must be finite")
    spec = d.spec
    xs = spec.x_nodes()
    ys = spec.y_nodes()
    fx = CubicSpline(xs, V, axis=0, bc_type="not-a-knot")(xs, 1)
    fy = CubicSpline(ys, V, axis=1, bc_type="not-a-knot")(ys, 1)
    fxy = CubicSpline(xs, fy, axis=0, bc_type="not-a-knot")(xs, 1)
    return ContinuousRiskField(
        x0=spec.origin[0], y0=spec.origin[1], h=spec.resolution, f=V, fx=fx, fy=fy, fxy=fxy
    )


def _crop_to_content(g: OccupancyGrid, margin: int = 2) -> OccupancyGrid | None:
    """Subgrid covering the occupied bounding box plus a zero margin.

    The margin keeps the fitted surface's outer node ring exactly zero,
    so the zero extension outside the covered rectangle stays continuous.
    Returns None for an empty grid.
    """
    cx, cy = np.nonzero(g.cells)
    if cx.size == 0:
        return None
    x0 = max(0, int(cx.min()) - margin)
    x1 = min(g.spec.nx - 1, int(cx.max()) + margin)
    y0 = max(0, int(cy.min()) - margin)
    y1 = min(g.spec.ny - 1, int(cy.max()) + margin)
    sub = g.cells[x0 : x1 + 1, y0 : y1 + 1]
    spec = GridSpec(
        resolution=g.spec.resolution,
        origin=g.spec.cell_center(x0, y0),
        nx=x1 - x0 + 1,
        ny=y1 - y0 + 1,
    )
    return OccupancyGrid(spec, sub.copy())


def field_from_grid(g: OccupancyGrid, K: RiskKernelMatrix) -> RiskField:
    """Convolve and fit in one step, cropping empty borders first."""
    cropped = _crop_to_content(g)
    if cropped is None:
        return ZERO_FIELD
    return fit_spline(convolve(cropped, K))


@dataclass
class EntityFields:
    """All continuous risk fields the planner sums over one horizon.

    Infrastructure fields are time-invariant; object and hidden-class
    fields carry one entry per step n = 0..N.
    """

    horizon: int
    infrastructure: list[RiskField]
    objects: list[list[RiskField]]
    hidden: list[list[RiskField]]

    def groups_at(self, n: int):
        """(infrastructure, objects, hidden) field lists for step n >= 1."""
        if not 0 <= n <= self.horizon:
            raise RiskFieldError(f"step {n} outside horizon 0..{self.horizon}")
        return (
            self.infrastructure,
            [per_step[n] for per_step in self.objects],
            [per_step[n] for per_step in self.hidden],
        )


def build_entity_fields(
    infrastructure: list[OccupancyGrid],
    objects: list[list[OccupancyGrid]],
    hidden: list[list[OccupancyGrid]],
    horizon: int,
    infra_params: RiskKernelParams | list[RiskKernelParams],
    object_params: RiskKernelParams | list[RiskKernelParams],
    hidden_params: RiskKernelParams | list[RiskKernelParams],
) -> EntityFields:
    """One CRF per infrastructure element, per object per step, per hidden class per step.

    Per-entity kernel parameters may be supplied as a list aligned with
    the entity list; a single RiskKernelParams applies to every entity of
    the group.  Static entities whose grids repeat across steps share one
    fitted field.
    """

    def per_entity(params, n_entities, what):
        if isinstance(params, RiskKernelParams):
            return [params] * n_entities
        if len(params) != n_entities:
            raise RiskFieldError(f"{what}: got {len(params)} kernel params for {n_entities} entities")
        return list(params)

    def fields_over_steps(grids: list[OccupancyGrid], K: RiskKernelMatrix, what: str):
        if len(grids) != horizon + 1:
            raise RiskFieldError(f"{what}: expected {horizon + 1} prediction grids, got {len(grids)}")
        cache: dict[int, RiskField] = {}
        out = []
        for g in grids:
            key = id(g.cells)
            if key not in cache:
                cache[key] = field_from_grid(g, K)
            out.append(cache[key])
        return out

    infra_p = per_entity(infra_params, len(infrastructure), "infrastructure")
    object_p = per_entity(object_params, len(objects), "objects")
    hidden_p = per_entity(hidden_params, len(hidden), "hidden")

    infra_fields = []
    for g, p in zip(infrastructure, infra_p):
        infra_fields.append(field_from_grid(g, sample_kernel(p, g.spec.resolution)))
    object_fields = []
    for grids, p in zip(objects, object_p):
        K = sample_kernel(p, grids[0].spec.resolution) if grids else None
        object_fields.append(fields_over_steps(grids, K, "objects"))
    hidden_fields = []
    for grids, p in zip(hidden, hidden_p):
        K = sample_kernel(p, grids[0].spec.resolution) if grids else None
        hidden_fields.append(fields_over_steps(grids, K, "hidden"))
    return EntityFields(
        horizon=horizon,
        infrastructure=infra_fields,
        objects=object_fields,
        hidden=hidden_fields,
    )


def write_drf_csv(d: DiscreteRiskField, path):
    """Debug dump of a DRF matrix, one grid row per CSV line."""
    np.savetxt(path, d.values, delimiter=",", fmt="%.17g")

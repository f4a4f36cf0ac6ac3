"""Tracking of possibly hidden road users on occupancy grids.

For every (area, class) pair a set of possibly-occupied cells is carried
forward in time: each step the previous set is dilated by a structuring
element that over-approximates one step of motion at the class's maximum
speed, clipped to the area, and pruned by the cells observed free.
Classes that respect a driving direction use a half-disk element oriented
per road segment, processed in driving order so occupants can flow into
the next segment; unconstrained classes (pedestrians) use a full disk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import shapely
from numpy.typing import NDArray

from .geometry import Polygon2, VisibilityRegion
from .grid import GridError, GridSpec, OccupancyGrid, StructuringElement, dilate_into, rasterize_mask

DISK = "disk"
SEMICIRCLE = "semicircle"


@dataclass(frozen=True)
class HiddenClassParams:
    """Motion envelope of one hidden-object class."""

    class_id: int
    v_max: float
    element_shape: str = DISK
    name: str = ""

    def __post_init__(self):
        if self.v_max <= 0:
            raise ValueError("v_max must be positive")
        if self.element_shape not in (DISK, SEMICIRCLE):
            raise ValueError(f"unknown element shape {self.element_shape!r}")


@dataclass(frozen=True)
class AreaSegment:
    region: Polygon2
    heading: float | None = None


@dataclass(frozen=True)
class AreaDef:
    """Region a hidden object of one class is confined to.

    `segments` are ordered along the driving direction; classes without a
    driving direction may use a single segment with heading None.
    """

    area_id: int
    class_id: int
    segments: tuple[AreaSegment, ...]

    def __post_init__(self):
        if not self.segments:
            raise ValueError("area needs at least one segment")


def _clip_square_halfplane(pts: NDArray[np.float64], d: NDArray[np.float64]):
    """Sutherland-Hodgman clip of a CCW ring against {z : z.d >= 0}."""
    out = []
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        da, db = float(a @ d), float(b @ d)
        if da >= 0:
            out.append(a)
        if (da >= 0) != (db >= 0):
            t = da / (da - db)
            out.append(a + t * (b - a))
    return out


def _point_seg_dist(p, a, b) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.hypot(*(p - a)))
    t = min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.hypot(*(p - a - t * ab)))


def _origin_dist_convex(pts) -> float:
    if not pts:
        return math.inf
    o = np.zeros(2)
    if len(pts) == 1:
        return float(np.hypot(*pts[0]))
    if len(pts) == 2:
        return _point_seg_dist(o, pts[0], pts[1])
    inside = True
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        if (b[0] - a[0]) * (-a[1]) - (b[1] - a[1]) * (-a[0]) < 0:
            inside = False
            break
    if inside:
        return 0.0
    return min(_point_seg_dist(o, pts[i], pts[(i + 1) % n]) for i in range(n))


def build_structuring_element(
    p: HiddenClassParams, t_s: float, spec: GridSpec, heading: float | None = None
) -> StructuringElement:
    """Cells whose closed square touches one step of reachable motion.

    The reachable set per step is a disk of radius v_max * t_s, or the
    half-disk opening toward `heading` for direction-constrained classes.
    The over-approximation always contains (0, 0), so a stationary object
    stays covered.
    """
    if t_s <= 0:
        raise ValueError("t_s must be positive")
    radius = p.v_max * t_s
    r = spec.resolution
    if radius < 0.5 * r:
        return StructuringElement(frozenset({(0, 0)}))
    half = 0.5 * r
    reach = int(math.ceil((radius + half) / r))
    if p.element_shape == SEMICIRCLE:
        if heading is None:
            raise ValueError("semicircle element needs a heading")
        d = np.array([math.cos(heading), math.sin(heading)])
    offsets = set()
    for u in range(-reach, reach + 1):
        for v in range(-reach, reach + 1):
            lo = np.array([u * r - half, v * r - half])
            hi = np.array([u * r + half, v * r + half])
            if p.element_shape == DISK:
                dx = max(0.0, lo[0], -hi[0])
                dy = max(0.0, lo[1], -hi[1])
                if math.hypot(dx, dy) <= radius:
                    offsets.add((u, v))
            else:
                ring = [
                    np.array([lo[0], lo[1]]),
                    np.array([hi[0], lo[1]]),
                    np.array([hi[0], hi[1]]),
                    np.array([lo[0], hi[1]]),
                ]
                clipped = _clip_square_halfplane(ring, d)
                if clipped and _origin_dist_convex(clipped) <= radius:
                    offsets.add((u, v))
    offsets.add((0, 0))
    return StructuringElement(frozenset(offsets))


def free_cell_mask(
    free_space: VisibilityRegion, spec: GridSpec, candidate_mask: NDArray[np.bool_] | None = None
) -> NDArray[np.bool_]:
    """Cells whose closed square lies fully inside the sensed free space.

    Partially observed cells count as unobserved, so the complement of
    this mask over-approximates the unobserved space.  Restricting the
    query with `candidate_mask` skips cells whose classification is not
    needed.
    """
    mask = np.zeros((spec.nx, spec.ny), dtype=bool)
    if candidate_mask is None:
        candidate_mask = np.ones((spec.nx, spec.ny), dtype=bool)
    cx, cy = np.nonzero(candidate_mask)
    if cx.size == 0:
        return mask
    h = 0.5 * spec.resolution
    x = spec.origin[0] + spec.resolution * cx
    y = spec.origin[1] + spec.resolution * cy
    boxes = shapely.box(x - h, y - h, x + h, y + h)
    geom = shapely.Polygon(free_space.boundary.vertices)
    shapely.prepare(geom)
    covered = shapely.covers(geom, boxes)
    mask[cx[covered], cy[covered]] = True
    return mask


@dataclass(frozen=True)
class _AreaRuntime:
    """Per-area precomputation: segment masks and dilation elements."""

    area: AreaDef
    seg_masks: tuple[NDArray[np.bool_], ...]
    area_mask: NDArray[np.bool_]
    elements: tuple[StructuringElement, ...]
    directional: bool


def _build_runtime(area: AreaDef, params: HiddenClassParams, spec: GridSpec, t_s: float) -> _AreaRuntime:
    seg_masks = tuple(rasterize_mask(s.region, spec) for s in area.segments)
    area_mask = np.zeros((spec.nx, spec.ny), dtype=bool)
    for m in seg_masks:
        area_mask |= m
    directional = params.element_shape == SEMICIRCLE
    if directional:
        elements = tuple(
            build_structuring_element(params, t_s, spec, heading=s.heading) for s in area.segments
        )
    else:
        elements = (build_structuring_element(params, t_s, spec),)
    return _AreaRuntime(area, seg_masks, area_mask, elements, directional)


def _reachable(rt: _AreaRuntime, cells: NDArray[np.bool_]) -> NDArray[np.bool_]:
    """One-step reachable cells inside the area under the area's elements."""
    out = np.zeros_like(cells)
    if not rt.directional:
        src = cells & rt.area_mask
        tmp = np.zeros_like(cells)
        dilate_into(src, rt.elements[0], tmp)
        return tmp & rt.area_mask
    prev_mask = None
    for seg_mask, element in zip(rt.seg_masks, rt.elements):
        src = cells & seg_mask
        if prev_mask is not None:
            src = src | (cells & prev_mask)
        tmp = np.zeros_like(cells)
        dilate_into(src, element, tmp)
        out |= tmp & seg_mask
        prev_mask = seg_mask
    return out


@dataclass(frozen=True)
class HiddenSetState:
    """Tracked hidden sets per (area, class) plus forward predictions."""

    spec: GridSpec
    t_s: float
    classes: tuple[HiddenClassParams, ...]
    runtimes: tuple[_AreaRuntime, ...]
    current: tuple[OccupancyGrid, ...]  # aligned with runtimes
    predictions: tuple[tuple[OccupancyGrid, ...], ...]  # [area][n-1], n = 1..N

    def area_grid(self, area_id: int) -> OccupancyGrid:
        for rt, g in zip(self.runtimes, self.current):
            if rt.area.area_id == area_id:
                return g
        raise KeyError(area_id)

    def class_params(self, class_id: int) -> HiddenClassParams:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise KeyError(class_id)


def init_hidden(
    free_space: VisibilityRegion,
    areas: list[AreaDef],
    spec: GridSpec,
    classes: list[HiddenClassParams],
    t_s: float,
) -> HiddenSetState:
    """Start tracking: every area cell not observed free is possibly occupied."""
    by_id = {c.class_id: c for c in classes}
    runtimes = []
    for area in areas:
        if area.class_id not in by_id:
            raise ValueError(f"area {area.area_id} references unknown class {area.class_id}")
        runtimes.append(_build_runtime(area, by_id[area.class_id], spec, t_s))
    candidates = np.zeros((spec.nx, spec.ny), dtype=bool)
    for rt in runtimes:
        candidates |= rt.area_mask
    free = free_cell_mask(free_space, spec, candidates)
    current = tuple(OccupancyGrid(spec, rt.area_mask & ~free) for rt in runtimes)
    return HiddenSetState(
        spec=spec,
        t_s=t_s,
        classes=tuple(classes),
        runtimes=tuple(runtimes),
        current=current,
        predictions=tuple(() for _ in runtimes),
    )


def update_hidden(state: HiddenSetState, free_space: VisibilityRegion) -> HiddenSetState:
    """Advance one step: dilate, clip to areas, remove observed-free cells."""
    reaches = [_reachable(rt, g.cells) for rt, g in zip(state.runtimes, state.current)]
    candidates = np.zeros((state.spec.nx, state.spec.ny), dtype=bool)
    for r in reaches:
        candidates |= r
    free = free_cell_mask(free_space, state.spec, candidates)
    current = tuple(OccupancyGrid(state.spec, r & ~free) for r in reaches)
    return replace(state, current=current, predictions=tuple(() for _ in state.runtimes))


def predict_hidden(state: HiddenSetState, N: int) -> HiddenSetState:
    """Hidden sets n = 1..N steps ahead with no further observations."""
    if N < 1:
        raise ValueError("need at least one prediction step")
    predictions = []
    for rt, g in zip(state.runtimes, state.current):
        steps = []
        cells = g.cells
        for _ in range(N):
            cells = _reachable(rt, cells)
            steps.append(OccupancyGrid(state.spec, cells))
        predictions.append(tuple(steps))
    return replace(state, predictions=tuple(predictions))


def merge_areas(state: HiddenSetState) -> dict[int, list[OccupancyGrid]]:
    """Union over areas per class, for n = 0..N (N from the predictions)."""
    n_pred = len(state.predictions[0]) if state.predictions else 0
    for p in state.predictions:
        if len(p) != n_pred:
            raise GridError("areas carry inconsistent prediction horizons")
    merged: dict[int, list[OccupancyGrid]] = {}
    for cls in state.classes:
        grids = []
        for n in range(n_pred + 1):
            acc = np.zeros((state.spec.nx, state.spec.ny), dtype=bool)
            for rt, cur, preds in zip(state.runtimes, state.current, state.predictions):
                if rt.area.class_id != cls.class_id:
                    continue
                acc |= cur.cells if n == 0 else preds[n - 1].cells
            grids.append(OccupancyGrid(state.spec, acc))
        merged[cls.class_id] = grids
    return merged

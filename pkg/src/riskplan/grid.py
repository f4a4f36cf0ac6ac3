"""Occupancy grids over a fixed world window.

Cells are squares of side `resolution`; cell (0, 0) is centered at the
spec origin, cell (cx, cy) at origin + resolution * (cx, cy).  World
points map to cells by rounding to the nearest cell center.  Region
rasterization marks every cell whose closed square touches the closed
region, so a region is always covered by its cell set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import shapely
from numpy.typing import NDArray

from .geometry import GeometryError, Polygon2


class GridError(ValueError):
    """Contract violation in a grid operation."""


@dataclass(frozen=True)
class GridSpec:
    """Geometry of a grid window: cell size, cell (0,0) center, cell counts."""

    resolution: float
    origin: tuple[float, float]
    nx: int
    ny: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise GridError("resolution must be positive")
        if self.nx < 1 or self.ny < 1:
            raise GridError("grid needs at least one cell per axis")

    def cell_center(self, cx, cy):
        return (self.origin[0] + self.resolution * cx, self.origin[1] + self.resolution * cy)

    def cell_box(self, cx: int, cy: int) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the closed cell square."""
        h = 0.5 * self.resolution
        x, y = self.cell_center(cx, cy)
        return (x - h, y - h, x + h, y + h)

    def in_window(self, cx: int, cy: int) -> bool:
        return 0 <= cx < self.nx and 0 <= cy < self.ny

    def x_nodes(self) -> NDArray[np.float64]:
        return self.origin[0] + self.resolution * np.arange(self.nx)

    def y_nodes(self) -> NDArray[np.float64]:
        return self.origin[1] + self.resolution * np.arange(self.ny)


def grid_spec_for_window(x_min, x_max, y_min, y_max, resolution) -> GridSpec:
    """Smallest grid with origin at (x_min, y_min) cell center covering the window."""
    nx = int(math.floor((x_max - x_min) / resolution + 0.5)) + 1
    ny = int(math.floor((y_max - y_min) / resolution + 0.5)) + 1
    return GridSpec(resolution=resolution, origin=(x_min, y_min), nx=nx, ny=ny)


def world_to_cell(p, spec: GridSpec) -> tuple[int, int]:
    """Nearest-cell index: floor((p - origin) / resolution + 0.5) per axis.

    Out-of-window indices are returned as-is; clipping is the caller's
    concern.
    """
    px, py = float(p[0]), float(p[1])
    if not (math.isfinite(px) and math.isfinite(py)):
        raise GridError("point must be finite")
    cx = math.floor((px - spec.origin[0]) / spec.resolution + 0.5)
    cy = math.floor((py - spec.origin[1]) / spec.resolution + 0.5)
    return int(cx), int(cy)


def world_to_cell_array(points: NDArray[np.float64], spec: GridSpec) -> NDArray[np.int64]:
    pts = np.asarray(points, dtype=float)
    c = np.floor((pts - np.asarray(spec.origin)) / spec.resolution + 0.5)
    return c.astype(np.int64)


@dataclass(frozen=True)
class CellSet:
    """Set of integer cell coordinates, all inside the owning window."""

    coords: frozenset[tuple[int, int]]
    spec: GridSpec

    def __post_init__(self):
        for cx, cy in self.coords:
            if not self.spec.in_window(cx, cy):
                raise GridError(f"cell ({cx}, {cy}) outside {self.spec.nx}x{self.spec.ny} window")

    def __len__(self):
        return len(self.coords)

    def __contains__(self, cell):
        return tuple(cell) in self.coords


@dataclass(frozen=True)
class StructuringElement:
    """Set of integer offsets applied by dilation, relative to (0, 0)."""

    offsets: frozenset[tuple[int, int]]

    def __post_init__(self):
        if not self.offsets:
            raise GridError("structuring element must be non-empty")

    def __len__(self):
        return len(self.offsets)

    def __contains__(self, offset):
        return tuple(offset) in self.offsets


class OccupancyGrid:
    """Binary raster over a grid window.  Immutable by convention."""

    __slots__ = ("spec", "cells")

    def __init__(self, spec: GridSpec, cells: NDArray[np.bool_]):
        cells = np.asarray(cells)
        if cells.shape != (spec.nx, spec.ny):
            raise GridError(f"cells shape {cells.shape} does not match spec ({spec.nx}, {spec.ny})")
        if cells.dtype != np.bool_:
            vals = np.unique(cells)
            if not np.all(np.isin(vals, (0, 1))):
                raise GridError("cell values must be 0/1")
            cells = cells.astype(bool)
        self.spec = spec
        self.cells = cells
        self.cells.setflags(write=False)

    @classmethod
    def empty(cls, spec: GridSpec) -> "OccupancyGrid":
        return cls(spec, np.zeros((spec.nx, spec.ny), dtype=bool))

    @classmethod
    def full(cls, spec: GridSpec) -> "OccupancyGrid":
        return cls(spec, np.ones((spec.nx, spec.ny), dtype=bool))

    def count(self) -> int:
        return int(self.cells.sum())

    def coords(self) -> NDArray[np.int64]:
        """Occupied cell coordinates as an (n, 2) array in row-scan order."""
        cx, cy = np.nonzero(self.cells)
        return np.stack([cx, cy], axis=1).astype(np.int64)

    def __eq__(self, other):
        return (
            isinstance(other, OccupancyGrid)
            and self.spec == other.spec
            and np.array_equal(self.cells, other.cells)
        )


def _require_same_spec(g1: OccupancyGrid, g2: OccupancyGrid):
    if g1.spec != g2.spec:
        raise GridError("grids have different specs")


def complement(g: OccupancyGrid) -> OccupancyGrid:
    return OccupancyGrid(g.spec, ~g.cells)


def intersect(g1: OccupancyGrid, g2: OccupancyGrid) -> OccupancyGrid:
    _require_same_spec(g1, g2)
    return OccupancyGrid(g1.spec, g1.cells & g2.cells)


def union(g1: OccupancyGrid, g2: OccupancyGrid) -> OccupancyGrid:
    _require_same_spec(g1, g2)
    return OccupancyGrid(g1.spec, g1.cells | g2.cells)


def dilate(g: OccupancyGrid, d: StructuringElement) -> OccupancyGrid:
    """Minkowski sum with the element: out[i, j] = any in[i-u, j-v] for (u, v) in d.

    Cells dilated beyond the window are clipped away.
    """
    if not isinstance(d, StructuringElement):
        raise GridError("expected a StructuringElement")
    out = np.zeros_like(g.cells)
    dilate_into(g.cells, d, out)
    return OccupancyGrid(g.spec, out)


def dilate_into(cells: NDArray[np.bool_], d: StructuringElement, out: NDArray[np.bool_]):
    """Shift-OR accumulation of `cells` under element `d` into `out`."""
    nx, ny = cells.shape
    for u, v in sorted(d.offsets):
        xs0, xs1 = max(u, 0), nx + min(u, 0)
        ys0, ys1 = max(v, 0), ny + min(v, 0)
        if xs0 >= xs1 or ys0 >= ys1:
            continue
        out[xs0:xs1, ys0:ys1] |= cells[xs0 - u : xs1 - u, ys0 - v : ys1 - v]


def _shapely_polygon(region: Polygon2) -> shapely.Polygon:
    return shapely.Polygon(region.vertices, [h for h in region.holes])


def rasterize_mask(region: Polygon2, spec: GridSpec) -> NDArray[np.bool_]:
    """Boolean mask of cells whose closed square intersects the closed region."""
    if not isinstance(region, Polygon2):
        raise GeometryError("region must be a Polygon2")
    xmin, ymin, xmax, ymax = region.bounds()
    h = 0.5 * spec.resolution
    cx0 = max(0, math.floor((xmin - h - spec.origin[0]) / spec.resolution + 0.5))
    cx1 = min(spec.nx - 1, math.floor((xmax + h - spec.origin[0]) / spec.resolution + 0.5))
    cy0 = max(0, math.floor((ymin - h - spec.origin[1]) / spec.resolution + 0.5))
    cy1 = min(spec.ny - 1, math.floor((ymax + h - spec.origin[1]) / spec.resolution + 0.5))
    mask = np.zeros((spec.nx, spec.ny), dtype=bool)
    if cx0 > cx1 or cy0 > cy1:
        return mask
    cxs = np.arange(cx0, cx1 + 1)
    cys = np.arange(cy0, cy1 + 1)
    gx, gy = np.meshgrid(cxs, cys, indexing="ij")
    centers_x = spec.origin[0] + spec.resolution * gx.ravel()
    centers_y = spec.origin[1] + spec.resolution * gy.ravel()
    boxes = shapely.box(centers_x - h, centers_y - h, centers_x + h, centers_y + h)
    geom = _shapely_polygon(region)
    shapely.prepare(geom)
    hit = shapely.intersects(geom, boxes)
    mask[gx.ravel()[hit], gy.ravel()[hit]] = True
    return mask


def cells_of_set(region: Polygon2, spec: GridSpec) -> CellSet:
    """Cell coordinates covering the region (closed-square intersection rule).

    Regions (or parts of regions) outside the window are clipped; a region
    entirely outside yields an empty set.
    """
    mask = rasterize_mask(region, spec)
    cx, cy = np.nonzero(mask)
    return CellSet(frozenset((int(a), int(b)) for a, b in zip(cx, cy)), spec)


def occupancy_matrix(cs: CellSet, spec: GridSpec | None = None) -> OccupancyGrid:
    """Binary matrix with ones exactly at the coordinates of `cs`."""
    spec = spec or cs.spec
    if spec != cs.spec:
        raise GridError("cell set belongs to a different spec")
    cells = np.zeros((spec.nx, spec.ny), dtype=bool)
    for cx, cy in cs.coords:
        cells[cx, cy] = True
    return OccupancyGrid(spec, cells)


def rasterize(region: Polygon2, spec: GridSpec) -> OccupancyGrid:
    """`occupancy_matrix(cells_of_set(region, spec))` without set overhead."""
    return OccupancyGrid(spec, rasterize_mask(region, spec))


def write_pgm(g: OccupancyGrid, path, maxval: int = 1):
    """Plain-text PGM (P2) dump, one grid per file.

    Rows run from the highest y cell index down to 0 so the image is
    north-up; columns are x cell indices ascending.  A comment line
    carries the world georeference (origin of cell (0,0) center and the
    resolution) for downstream plotting.
    """
    spec = g.spec
    lines = [
        "P2",
        f"# origin={spec.origin[0]!r},{spec.origin[1]!r} resolution={spec.resolution!r}",
        f"{spec.nx} {spec.ny}",
        str(maxval),
    ]
    vals = g.cells.astype(int)
    for cy in range(spec.ny - 1, -1, -1):
        lines.append(" ".join(str(v) for v in vals[:, cy]))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")

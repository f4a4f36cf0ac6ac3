"""Planar geometry primitives: polygons, point containment, visibility.

Everything works on plain float coordinates in meters.  Polygons are
closed point sets: a point on the boundary counts as inside, so any
rasterization built on top of these predicates over-approximates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray


class GeometryError(ValueError):
    """Structurally invalid geometric input."""


class DegenerateObserverError(GeometryError):
    """Visibility query from inside an occluder."""


Point2 = tuple[float, float]


def _as_vertex_array(vertices) -> NDArray[np.float64]:
    arr = np.asarray(vertices, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise GeometryError(f"expected (n, 2) vertex array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise GeometryError("vertices must be finite")
    return arr


def signed_area(vertices: NDArray[np.float64]) -> float:
    """Shoelace area; positive for counter-clockwise rings."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_properly_cross(p0, p1, q0, q1) -> bool:
    # proper crossing only: shared endpoints between adjacent edges are fine
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q0, q1, p0)
    d2 = orient(q0, q1, p1)
    d3 = orient(p0, p1, q0)
    d4 = orient(p0, p1, q1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and 0 not in (d1, d2, d3, d4)


@dataclass(frozen=True)
class Polygon2:
    """Simple polygon with optional holes.

    The outer ring must be counter-clockwise with at least 3 vertices and
    no self-intersections; hole rings must lie strictly inside the outer
    ring.  The represented region is the closed outer area minus the open
    interiors of the holes.
    """

    vertices: NDArray[np.float64]
    holes: tuple[NDArray[np.float64], ...] = field(default_factory=tuple)

    def __init__(self, vertices, holes=(), trusted: bool = False):
        # `trusted` skips the quadratic self-intersection scan; reserved for
        # internal constructors whose output is simple by construction
        # (e.g. star-shaped visibility sweeps)
        outer = _as_vertex_array(vertices)
        if len(outer) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        if signed_area(outer) <= 0:
            raise GeometryError("outer ring must be counter-clockwise with positive area")
        if not trusted:
            edges = list(_ring_edges(outer))
            n = len(edges)
            for i in range(n):
                for j in range(i + 2, n):
                    if i == 0 and j == n - 1:
                        continue  # adjacent through the wrap-around
                    if _segments_properly_cross(*edges[i], *edges[j]):
                        raise GeometryError("outer ring is self-intersecting")
        hole_arrays = []
        for ring in holes:
            h = _as_vertex_array(ring)
            if len(h) < 3:
                raise GeometryError("hole needs at least 3 vertices")
            for v in h:
                if not _point_in_ring(v[0], v[1], outer):
                    raise GeometryError("hole vertex outside outer ring")
            hole_arrays.append(h)
        object.__setattr__(self, "vertices", outer)
        object.__setattr__(self, "holes", tuple(hole_arrays))

    def bounds(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the outer ring."""
        v = self.vertices
        return float(v[:, 0].min()), float(v[:, 1].min()), float(v[:, 0].max()), float(v[:, 1].max())

    def edges(self) -> NDArray[np.float64]:
        """All boundary segments (outer + holes) as an (e, 2, 2) array."""
        rings = [self.vertices, *self.holes]
        segs = [np.stack([r, np.roll(r, -1, axis=0)], axis=1) for r in rings]
        return np.concatenate(segs, axis=0)

    def area(self) -> float:
        return signed_area(self.vertices) - sum(abs(signed_area(h)) for h in self.holes)


def rectangle(cx: float, cy: float, length: float, width: float, heading: float = 0.0) -> Polygon2:
    """Axis-length `length` along `heading`, centered at (cx, cy)."""
    hl, hw = 0.5 * length, 0.5 * width
    corners = np.array([[-hl, -hw], [hl, -hw], [hl, hw], [-hl, hw]])
    c, s = math.cos(heading), math.sin(heading)
    rot = np.array([[c, -s], [s, c]])
    return Polygon2(corners @ rot.T + np.array([cx, cy]), trusted=True)


def _ring_edges(ring):
    n = len(ring)
    for i in range(n):
        yield ring[i], ring[(i + 1) % n]


def _point_on_segment(px, py, ax, ay, bx, by) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if cross != 0.0:
        return False
    return min(ax, bx) <= px <= max(ax, bx) and min(ay, by) <= py <= max(ay, by)


def _point_in_ring(px: float, py: float, ring: NDArray[np.float64]) -> bool:
    """Closed containment: boundary points count as inside."""
    inside = False
    n = len(ring)
    for i in range(n):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % n]
        if _point_on_segment(px, py, ax, ay, bx, by):
            return True
        if (ay > py) != (by > py):
            t = (py - ay) / (by - ay)
            xi = ax + t * (bx - ax)
            if px < xi:
                inside = not inside
    return inside


def _point_strictly_in_ring(px: float, py: float, ring: NDArray[np.float64]) -> bool:
    for i in range(len(ring)):
        ax, ay = ring[i]
        bx, by = ring[(i + 1) % len(ring)]
        if _point_on_segment(px, py, ax, ay, bx, by):
            return False
    return _point_in_ring(px, py, ring)


def point_in_polygon(p: Point2, poly: Polygon2) -> bool:
    """Closed-region membership: boundary (outer or hole rings) is inside."""
    px, py = float(p[0]), float(p[1])
    if not (math.isfinite(px) and math.isfinite(py)):
        raise GeometryError("point must be finite")
    if not _point_in_ring(px, py, poly.vertices):
        return False
    for hole in poly.holes:
        if _point_strictly_in_ring(px, py, hole):
            return False
    return True


def points_in_ring(points: NDArray[np.float64], ring: NDArray[np.float64]) -> NDArray[np.bool_]:
    """Vectorized closed containment of (n, 2) points in a single ring.

    Boundary handling is approximate for speed (crossing parity only); use
    `point_in_polygon` where exact boundary semantics matter.
    """
    px = points[:, 0][:, None]
    py = points[:, 1][:, None]
    a = ring
    b = np.roll(ring, -1, axis=0)
    ax, ay = a[:, 0][None, :], a[:, 1][None, :]
    bx, by = b[:, 0][None, :], b[:, 1][None, :]
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (py - ay) / (by - ay)
        xi = ax + t * (bx - ax)
    crossing = straddle & (px < xi)
    return (crossing.sum(axis=1) % 2).astype(bool)


@dataclass(frozen=True)
class VisibilityRegion:
    """Star-shaped region visible from `origin` within `radius`.

    The boundary polygon is a fixed-angular-resolution under-approximation
    of the true visibility region: rays are cast at evenly spaced angles
    and clipped at the first occluder edge they hit.  Under-approximating
    free space keeps downstream hidden-space reasoning conservative.
    """

    origin: Point2
    radius: float
    boundary: Polygon2

    def contains_points(self, points) -> NDArray[np.bool_]:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        ok = points_in_ring(pts, self.boundary.vertices)
        # radial guard: the polygon is already within the disk, but make
        # the disk bound explicit for points near the rim
        d = np.hypot(pts[:, 0] - self.origin[0], pts[:, 1] - self.origin[1])
        return ok & (d <= self.radius + 1e-12)

    def contains(self, p: Point2) -> bool:
        return bool(self.contains_points(np.asarray([p], dtype=float))[0])


def visibility_region(
    origin: Point2,
    radius: float,
    occluders: list[Polygon2],
    angular_resolution_deg: float = 0.5,
) -> VisibilityRegion:
    """Cast rays at a fixed angular resolution and join their endpoints.

    Each ray runs from `origin` to the nearest occluder edge or to
    `radius`.  The returned boundary is the polygon of ray endpoints in
    angle order (counter-clockwise by construction).
    """
    if radius <= 0:
        raise GeometryError("radius must be positive")
    ox, oy = float(origin[0]), float(origin[1])
    for occ in occluders:
        if _point_strictly_in_ring(ox, oy, occ.vertices):
            raise DegenerateObserverError("observer inside an occluder")

    n_rays = max(64, int(round(360.0 / angular_resolution_deg)))
    angles = np.arange(n_rays) * (2.0 * np.pi / n_rays)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)  # (A, 2)

    t_min = np.full(n_rays, radius)
    if occluders:
        segs = np.concatenate([occ.edges() for occ in occluders], axis=0)  # (E, 2, 2)
        a = segs[:, 0, :]
        e = segs[:, 1, :] - segs[:, 0, :]
        rel = a - np.array([ox, oy])  # (E, 2)
        # origin + t*d = a + s*e  solved per (ray, edge) pair
        denom = dirs[:, 0][:, None] * e[:, 1][None, :] - dirs[:, 1][:, None] * e[:, 0][None, :]
        num_t = rel[:, 0][None, :] * e[:, 1][None, :] - rel[:, 1][None, :] * e[:, 0][None, :]
        num_s = rel[:, 0][None, :] * dirs[:, 1][:, None] - rel[:, 1][None, :] * dirs[:, 0][:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = num_t / denom
            s = num_s / denom
        hit = (np.abs(denom) > 1e-12) & (s >= 0.0) & (s <= 1.0) & (t > 1e-9)
        t = np.where(hit, t, np.inf)
        t_min = np.minimum(t_min, t.min(axis=1))

    endpoints = np.array([ox, oy]) + t_min[:, None] * dirs
    # endpoints lie on strictly increasing ray angles, so the ring is simple
    return VisibilityRegion(
        origin=(ox, oy), radius=float(radius), boundary=Polygon2(endpoints, trusted=True)
    )


def segment_distance(p0, p1, q0, q1) -> float:
    """Minimum distance between two segments (0 if they intersect)."""
    p0 = np.asarray(p0, float)
    p1 = np.asarray(p1, float)
    q0 = np.asarray(q0, float)
    q1 = np.asarray(q1, float)
    if _segments_properly_cross(p0, p1, q0, q1):
        return 0.0

    def point_seg(pt, a, b):
        ab = b - a
        denom = float(ab @ ab)
        if denom == 0.0:
            return float(np.hypot(*(pt - a)))
        t = float(np.clip((pt - a) @ ab / denom, 0.0, 1.0))
        proj = a + t * ab
        return float(np.hypot(*(pt - proj)))

    return min(
        point_seg(p0, q0, q1),
        point_seg(p1, q0, q1),
        point_seg(q0, p0, p1),
        point_seg(q1, p0, p1),
    )

"""Vehicle shapes and surface-distance computations.

Shapes are circles, points (circles of radius zero) or oriented rectangles.
Rectangle pairs are handled by enumerating corner-versus-edge distances in
both directions; overlap is detected with the separating-axis test.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from dhocbf.errors import ValidationError

Point = Tuple[float, float]


@dataclass(frozen=True)
class ShapeSpec:
    """Shape of a vehicle, independent of its pose.

    ``width`` is the extent across the heading direction and ``length`` the
    extent along it.
    """

    kind: str = "point"
    radius: float = 0.0
    width: float = 0.0
    length: float = 0.0

    def __post_init__(self):
        if self.kind not in ("point", "circle", "rectangle"):
            raise ValidationError(f"unknown shape kind {self.kind!r}")
        if self.kind == "rectangle":
            if not (self.width > 0 and self.length > 0):
                raise ValidationError("rectangle width and length must be positive")
        elif not self.radius >= 0:
            raise ValidationError("radius must be non-negative")
        if self.kind == "point" and self.radius != 0:
            raise ValidationError("a point has zero radius")

    @classmethod
    def point(cls) -> "ShapeSpec":
        return cls("point")

    @classmethod
    def circle(cls, radius: float) -> "ShapeSpec":
        return cls("circle", radius=float(radius))

    @classmethod
    def rectangle(cls, width: float, length: float) -> "ShapeSpec":
        return cls("rectangle", width=float(width), length=float(length))

    @property
    def is_round(self) -> bool:
        return self.kind != "rectangle"

    @property
    def extent(self) -> float:
        """Largest distance from the center to the boundary."""
        if self.is_round:
            return self.radius
        return 0.5 * math.hypot(self.width, self.length)


@dataclass(frozen=True)
class OrientedBox:
    center: Point
    width: float
    length: float
    heading: float = 0.0

    def corners(self) -> np.ndarray:
        return rect_corners(self)


@dataclass(frozen=True)
class PlacedShape:
    """A shape at a pose in the plane."""

    shape: ShapeSpec
    center: Point
    heading: float = 0.0

    def box(self) -> OrientedBox:
        return OrientedBox(self.center, self.shape.width, self.shape.length, self.heading)


@dataclass(frozen=True)
class ClosestPair:
    point_on_a: Point
    point_on_b: Point
    distance: float
    penetration: float = 0.0

    @property
    def signed_distance(self) -> float:
        return self.distance - self.penetration


def rect_corners(box: OrientedBox) -> np.ndarray:
    """Return the four corners of ``box`` in counter-clockwise order, shape (4, 2)."""
    c, s = math.cos(box.heading), math.sin(box.heading)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    local = ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw))
    cx, cy = box.center
    return np.array([(cx + c * lx - s * ly, cy + s * lx + c * ly) for lx, ly in local])


def point_segment_closest(b1, a1, a2):
    """Closest point to ``b1`` on the segment ``a1``-``a2``.

    Returns:
        (r, p_surf, distance) where ``r`` is the projection ratio of ``b1``
        onto the segment direction (unclamped) and ``p_surf`` the clamped foot.
        A degenerate segment gives ``r = 0`` and the point-to-point distance.
    """
    bx, by = float(b1[0]), float(b1[1])
    ax1, ay1 = float(a1[0]), float(a1[1])
    ex, ey = float(a2[0]) - ax1, float(a2[1]) - ay1
    seg_sq = ex * ex + ey * ey
    if seg_sq == 0.0:
        return 0.0, (ax1, ay1), math.hypot(bx - ax1, by - ay1)
    r = ((bx - ax1) * ex + (by - ay1) * ey) / seg_sq
    if r <= 0.0:
        p = (ax1, ay1)
    elif r >= 1.0:
        p = (float(a2[0]), float(a2[1]))
    else:
        p = (ax1 + r * ex, ay1 + r * ey)
    return r, p, math.hypot(bx - p[0], by - p[1])


def corner_edge_distance(b1, a1, a2) -> float:
    # Interior case uses the exact perpendicular distance, which equals the
    # clamped-projection distance below.
    return point_segment_closest(b1, a1, a2)[2]


def _corner_edge_pairs(corners_a, corners_b):
    """Best (distance, point_on_a, point_on_b) over corners of b against edges of a."""
    best = None
    for cb in corners_b:
        for i in range(4):
            _, p, d = point_segment_closest(cb, corners_a[i], corners_a[(i + 1) % 4])
            if best is None or d < best[0]:
                best = (d, p, (float(cb[0]), float(cb[1])))
    return best


def _sat_depth(corners_a, corners_b) -> float:
    """Minimum overlap depth over the separating axes; negative when separated."""
    depth = math.inf
    for corners in (corners_a, corners_b):
        for i in (0, 1):
            ex, ey = corners[i + 1] - corners[i]
            n = math.hypot(ex, ey)
            axis = np.array([-ey / n, ex / n])
            pa = corners_a @ axis
            pb = corners_b @ axis
            d = min(pa.max() - pb.min(), pb.max() - pa.min())
            depth = min(depth, d)
    return depth


def _point_in_box(p, box: OrientedBox) -> bool:
    c, s = math.cos(box.heading), math.sin(box.heading)
    dx, dy = p[0] - box.center[0], p[1] - box.center[1]
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    return abs(lx) <= 0.5 * box.length and abs(ly) <= 0.5 * box.width


def _round_vs_round(a: PlacedShape, b: PlacedShape) -> ClosestPair:
    ax, ay = a.center
    bx, by = b.center
    dx, dy = bx - ax, by - ay
    dist = math.hypot(dx, dy)
    if dist > 0:
        ux, uy = dx / dist, dy / dist
    else:
        ux, uy = 1.0, 0.0
    ra, rb = a.shape.radius, b.shape.radius
    pa = (ax + ra * ux, ay + ra * uy)
    pb = (bx - rb * ux, by - rb * uy)
    gap = dist - ra - rb
    return ClosestPair(pa, pb, max(gap, 0.0), max(-gap, 0.0))


def _box_vs_round(box_shape: PlacedShape, round_shape: PlacedShape) -> ClosestPair:
    """Closest pair with ``point_on_a`` on the rectangle and ``point_on_b`` on the circle."""
    box = box_shape.box()
    corners = rect_corners(box)
    center = round_shape.center
    r = round_shape.shape.radius
    best = None
    for i in range(4):
        _, p, d = point_segment_closest(center, corners[i], corners[(i + 1) % 4])
        if best is None or d < best[0]:
            best = (d, p)
    edge_dist, p_box = best
    cx, cy = center
    inside = _point_in_box(center, box)
    if inside:
        # Circle center within the rectangle: push out through the nearest edge.
        ux, uy = (p_box[0] - cx, p_box[1] - cy)
        n = math.hypot(ux, uy)
        if n > 0:
            ux, uy = ux / n, uy / n
        p_round = (cx + r * ux, cy + r * uy)
        return ClosestPair(p_box, p_round, 0.0, edge_dist + r)
    ux, uy = (p_box[0] - cx) / edge_dist, (p_box[1] - cy) / edge_dist
    p_round = (cx + r * ux, cy + r * uy)
    gap = edge_dist - r
    return ClosestPair(p_box, p_round, max(gap, 0.0), max(-gap, 0.0))


def _swap(pair: ClosestPair) -> ClosestPair:
    return ClosestPair(pair.point_on_b, pair.point_on_a, pair.distance, pair.penetration)


def shape_min_distance(a: PlacedShape, b: PlacedShape) -> ClosestPair:
    """Closest points between two placed shapes and their surface distance.

    For overlapping shapes ``distance`` is 0 and ``penetration`` holds the
    minimum translation depth.
    """
    if a.shape.is_round and b.shape.is_round:
        return _round_vs_round(a, b)
    if not a.shape.is_round and b.shape.is_round:
        return _box_vs_round(a, b)
    if a.shape.is_round and not b.shape.is_round:
        return _swap(_box_vs_round(b, a))

    ca = rect_corners(a.box())
    cb = rect_corners(b.box())
    d_ab = _corner_edge_pairs(ca, cb)  # corners of b vs edges of a
    d_ba = _corner_edge_pairs(cb, ca)  # corners of a vs edges of b
    if d_ab[0] <= d_ba[0]:
        dist, pa, pb = d_ab
    else:
        dist, pb, pa = d_ba
    depth = _sat_depth(ca, cb)
    if depth > 0:
        return ClosestPair(pa, pb, 0.0, depth)
    return ClosestPair(pa, pb, dist, 0.0)


def dynamic_safe_distance(a: PlacedShape, b: PlacedShape, margin: float = 0.0, pair: ClosestPair = None) -> float:
    """Center-to-center distance at which the two surfaces would touch, plus ``margin``.

    For rectangles the surface gap is projected onto the center line and
    subtracted from the current center distance. Overlapping shapes yield a
    value larger than the center distance so that the barrier is negative.
    """
    cx = b.center[0] - a.center[0]
    cy = b.center[1] - a.center[1]
    center_dist = math.hypot(cx, cy)
    if center_dist == 0.0:
        return a.shape.extent + b.shape.extent + margin
    if a.shape.is_round and b.shape.is_round:
        return a.shape.radius + b.shape.radius + margin
    if pair is None:
        pair = shape_min_distance(a, b)
    if pair.penetration > 0:
        return center_dist + pair.penetration + margin
    gx = pair.point_on_b[0] - pair.point_on_a[0]
    gy = pair.point_on_b[1] - pair.point_on_a[1]
    gap = max((gx * cx + gy * cy) / center_dist, 0.0)
    return center_dist - gap + margin

"""Double-integrator ego model and scripted obstacle motion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

from dhocbf.errors import ValidationError
from dhocbf.geometry import PlacedShape, ShapeSpec, shape_min_distance

DEFAULT_DT = 0.1
DEFAULT_SENSORY_RADIUS = 8.0


def _check_finite(name, *values):
    for v in values:
        if not math.isfinite(v):
            raise ValidationError(f"{name} must be finite, got {values}")


@dataclass(frozen=True)
class EgoState:
    x: float
    y: float
    vx: float
    vy: float

    def __post_init__(self):
        _check_finite("EgoState", self.x, self.y, self.vx, self.vy)

    @property
    def position(self) -> Tuple[float, float]:
        return (self.x, self.y)

    @property
    def velocity(self) -> Tuple[float, float]:
        return (self.vx, self.vy)


@dataclass(frozen=True)
class ControlInput:
    ux: float
    uy: float

    def __post_init__(self):
        _check_finite("ControlInput", self.ux, self.uy)

    def __iter__(self):
        return iter((self.ux, self.uy))


@dataclass(frozen=True)
class ObstacleState:
    position: Tuple[float, float]
    velocity: Tuple[float, float]
    shape: ShapeSpec = field(default_factory=ShapeSpec.point)
    heading: float = 0.0
    id: str = ""

    def placed(self) -> PlacedShape:
        return PlacedShape(self.shape, self.position, self.heading)


@dataclass(frozen=True)
class ObstacleProfile:
    """A surrounding vehicle moving with piecewise-constant velocity.

    ``segments`` is a sequence of ``(start_time, (vx, vy))``; the first
    segment starts at 0. ``heading`` is the heading used until the first
    non-zero velocity segment.
    """

    id: str
    shape: ShapeSpec
    initial_position: Tuple[float, float]
    segments: Tuple[Tuple[float, Tuple[float, float]], ...]
    heading: float = 0.0

    def __post_init__(self):
        segs = tuple((float(t0), (float(v[0]), float(v[1]))) for t0, v in self.segments)
        if not segs:
            raise ValidationError(f"obstacle {self.id!r} needs at least one motion segment")
        if segs[0][0] != 0.0:
            raise ValidationError(f"obstacle {self.id!r}: first segment must start at t=0")
        for (t_prev, _), (t_next, _) in zip(segs, segs[1:]):
            if not t_next > t_prev:
                raise ValidationError(f"obstacle {self.id!r}: segment start times must increase")
        for t0, (vx, vy) in segs:
            _check_finite(f"obstacle {self.id!r} segment", t0, vx, vy)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(
            self, "initial_position", (float(self.initial_position[0]), float(self.initial_position[1]))
        )


def step_ego(s: EgoState, u: ControlInput, dt: float) -> EgoState:
    """Advance the double integrator by ``dt`` under a zero-order-hold control."""
    if not dt > 0 or not math.isfinite(dt):
        raise ValidationError(f"dt must be positive and finite, got {dt}")
    _check_finite("control", u.ux, u.uy)
    half_dt2 = 0.5 * dt * dt
    return EgoState(
        s.x + s.vx * dt + u.ux * half_dt2,
        s.y + s.vy * dt + u.uy * half_dt2,
        s.vx + u.ux * dt,
        s.vy + u.uy * dt,
    )


def obstacle_state_at(p: ObstacleProfile, t: float) -> ObstacleState:
    if t < 0:
        raise ValidationError(f"t must be non-negative, got {t}")
    x, y = p.initial_position
    heading = p.heading
    vel = (0.0, 0.0)
    segs = p.segments
    for i, (t0, v) in enumerate(segs):
        if t0 > t:
            break
        t1 = segs[i + 1][0] if i + 1 < len(segs) else math.inf
        span = min(t, t1) - t0
        x += v[0] * span
        y += v[1] * span
        vel = v
        if v[0] != 0.0 or v[1] != 0.0:
            heading = math.atan2(v[1], v[0])
    return ObstacleState((x, y), vel, p.shape, heading, p.id)


def ego_placed(ego: EgoState, shape: ShapeSpec, heading: float = 0.0) -> PlacedShape:
    return PlacedShape(shape, ego.position, heading)


def obstacles_in_range(
    ego: EgoState,
    obstacles: Sequence[ObstacleState],
    radius: float = DEFAULT_SENSORY_RADIUS,
    ego_shape: ShapeSpec = None,
    ego_heading: float = 0.0,
) -> List[ObstacleState]:
    """Obstacles whose surface distance to the ego is at most ``radius`` (inclusive)."""
    if not radius > 0:
        raise ValidationError(f"sensory radius must be positive, got {radius}")
    me = ego_placed(ego, ego_shape or ShapeSpec.point(), ego_heading)
    return [o for o in obstacles if shape_min_distance(me, o.placed()).distance <= radius]

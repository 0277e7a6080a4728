"""Reference-control sources for the safety filter.

Each source maps the current ego state and time to an unconstrained
acceleration ``u_ref``. Three are provided: PD tracking of a time-stamped
reference trajectory (scripted or replayed from a trace CSV) and an
Intelligent Driver Model follower along a path.
"""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from dhocbf.dynamics import ControlInput, EgoState, ObstacleState
from dhocbf.errors import ValidationError
from dhocbf.geometry import PlacedShape, ShapeSpec, shape_min_distance

DEFAULT_KP = 2.0
DEFAULT_KD = 2.83
LEADER_LATERAL_RANGE = 8.0
LEADER_HEADING_TOL = math.radians(15.0)


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Time-stamped positions and velocities, strictly increasing in time."""

    t: Tuple[float, ...]
    positions: Tuple[Tuple[float, float], ...]
    velocities: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        if not self.t:
            raise ValidationError("reference trajectory is empty")
        if not (len(self.t) == len(self.positions) == len(self.velocities)):
            raise ValidationError("reference trajectory columns differ in length")
        for a, b in zip(self.t, self.t[1:]):
            if not b > a:
                raise ValidationError("reference sample times must strictly increase")
        arr = np.concatenate([np.asarray(self.t), np.ravel(self.positions), np.ravel(self.velocities)])
        if not np.all(np.isfinite(arr)):
            raise ValidationError("reference trajectory contains non-finite values")

    def __len__(self):
        return len(self.t)

    @classmethod
    def from_waypoints(cls, waypoints, speed: float, t0: float = 0.0) -> "ReferenceTrajectory":
        """Constant-speed traversal of a polyline.

        Each sample carries the velocity of the segment leaving it; the last
        sample keeps the final segment's velocity.
        """
        pts = [(float(x), float(y)) for x, y in waypoints]
        if len(pts) < 2:
            raise ValidationError("a scripted reference needs at least two waypoints")
        if not speed > 0:
            raise ValidationError("reference speed must be positive")
        times = [t0]
        vels = []
        for (x0, y0), (x1, y1) in zip(pts, pts[1:]):
            seg = math.hypot(x1 - x0, y1 - y0)
            if seg == 0:
                raise ValidationError("repeated waypoint in reference")
            times.append(times[-1] + seg / speed)
            vels.append(((x1 - x0) / seg * speed, (y1 - y0) / seg * speed))
        vels.append(vels[-1])
        return cls(tuple(times), tuple(pts), tuple(vels))

    @classmethod
    def from_csv(cls, path) -> "ReferenceTrajectory":
        """Load columns ``t, x, y, vx, vy`` (other columns are ignored)."""
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"t", "x", "y", "vx", "vy"} - set(reader.fieldnames or ())
            if missing:
                raise ValidationError(f"{path}: missing columns {sorted(missing)}")
            t, pos, vel = [], [], []
            for lineno, row in enumerate(reader, start=2):
                try:
                    t.append(float(row["t"]))
                    pos.append((float(row["x"]), float(row["y"])))
                    vel.append((float(row["vx"]), float(row["vy"])))
                except ValueError as exc:
                    raise ValidationError(f"{path}:{lineno}: {exc}") from None
        if not t:
            raise ValidationError(f"{path}: no samples")
        return cls(tuple(t), tuple(pos), tuple(vel))

    def sample(self, t: float):
        """Reference ``(position, velocity, feedforward acceleration)`` at time ``t``.

        Times before the first sample hold the first sample; times after the
        last hold the final position with zero velocity.
        """
        ts = self.t
        if len(ts) == 1 or t > ts[-1]:
            return self.positions[-1], (0.0, 0.0), (0.0, 0.0)
        if t <= ts[0]:
            if t < ts[0]:
                return self.positions[0], self.velocities[0], (0.0, 0.0)
            i = 0
        else:
            i = min(bisect.bisect_right(ts, t) - 1, len(ts) - 2)
        t0, t1 = ts[i], ts[i + 1]
        w = (t - t0) / (t1 - t0)
        (x0, y0), (x1, y1) = self.positions[i], self.positions[i + 1]
        (u0, v0), (u1, v1) = self.velocities[i], self.velocities[i + 1]
        pos = (x0 + w * (x1 - x0), y0 + w * (y1 - y0))
        vel = (u0 + w * (u1 - u0), v0 + w * (v1 - v0))
        acc = ((u1 - u0) / (t1 - t0), (v1 - v0) / (t1 - t0))
        return pos, vel, acc

    def positions_at(self, times) -> np.ndarray:
        return np.array([self.sample(t)[0] for t in times])


def pd_tracking_control(ego: EgoState, ref: ReferenceTrajectory, t: float, gains=(DEFAULT_KP, DEFAULT_KD)) -> ControlInput:
    kp, kd = gains
    (px, py), (vx, vy), (ax, ay) = ref.sample(t)
    return ControlInput(
        kp * (px - ego.x) + kd * (vx - ego.vx) + ax,
        kp * (py - ego.y) + kd * (vy - ego.vy) + ay,
    )


def replay_control(ego: EgoState, recorded: ReferenceTrajectory, t: float, gains=(DEFAULT_KP, DEFAULT_KD)) -> ControlInput:
    """Track a recorded trajectory, typically loaded with :meth:`ReferenceTrajectory.from_csv`."""
    return pd_tracking_control(ego, recorded, t, gains)


@dataclass(frozen=True)
class IDMParams:
    v0: float = 9.63
    s0: float = 2.5
    T_hw: float = 1.6
    a_max: float = 2.0
    b_comf: float = 3.0
    delta: float = 4.0
    k_clamp: float = 2.0

    def __post_init__(self):
        for name in ("v0", "s0", "T_hw", "a_max", "b_comf", "delta", "k_clamp"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"IDM parameter {name} must be positive")


def idm_acceleration(v: float, gap: Optional[float] = None, dv: float = 0.0, p: IDMParams = IDMParams()) -> float:
    """IDM acceleration.

    Args:
        v: follower speed.
        gap: bumper-to-bumper distance to the leader, ``None`` on a free road.
        dv: approach rate, follower speed minus leader speed.
        p: model parameters.
    """
    lo = -p.b_comf * p.k_clamp
    free = 1.0 - (v / p.v0) ** p.delta
    if gap is None:
        return min(max(p.a_max * free, lo), p.a_max)
    if gap <= 0:
        return lo
    s_star = p.s0 + v * p.T_hw + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf))
    a = p.a_max * (free - (s_star / gap) ** 2)
    return min(max(a, lo), p.a_max)


@dataclass(frozen=True)
class PathProjection:
    arc: float
    lateral: float  # signed, positive to the left of the path
    tangent: Tuple[float, float]
    point: Tuple[float, float]


def project_on_path(path: Sequence[Tuple[float, float]], p) -> PathProjection:
    """Closest point of the polyline ``path`` to ``p``."""
    best = None
    arc0 = 0.0
    px, py = p
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        ex, ey = x1 - x0, y1 - y0
        seg = math.hypot(ex, ey)
        if seg == 0:
            continue
        r = min(max(((px - x0) * ex + (py - y0) * ey) / (seg * seg), 0.0), 1.0)
        fx, fy = x0 + r * ex, y0 + r * ey
        d = math.hypot(px - fx, py - fy)
        if best is None or d < best[0]:
            tx, ty = ex / seg, ey / seg
            lateral = (px - fx) * -ty + (py - fy) * tx
            best = (d, PathProjection(arc0 + r * seg, lateral, (tx, ty), (fx, fy)))
        arc0 += seg
    if best is None:
        raise ValidationError("path has no non-degenerate segment")
    return best[1]


def _angle_diff(a: float, b: float) -> float:
    return abs((a - b + math.pi) % (2 * math.pi) - math.pi)


def idm_select_leader(ego: EgoState, planned_path: ReferenceTrajectory, others: Sequence[ObstacleState]) -> Optional[ObstacleState]:
    """Nearest co-heading obstacle ahead of the ego along its planned path."""
    if not others:
        return None
    path = planned_path.positions
    if len(path) < 2:
        return None
    me = project_on_path(path, ego.position)
    path_heading = math.atan2(me.tangent[1], me.tangent[0])
    best = None
    for o in others:
        proj = project_on_path(path, o.position)
        if abs(proj.lateral) > LEADER_LATERAL_RANGE:
            continue
        if _angle_diff(o.heading, path_heading) >= LEADER_HEADING_TOL:
            continue
        ahead = proj.arc - me.arc
        if ahead <= 0:
            continue
        if best is None or ahead < best[0]:
            best = (ahead, o)
    return best[1] if best else None


@dataclass(frozen=True)
class TrackingReference:
    """PD tracking of a time-stamped trajectory."""

    trajectory: ReferenceTrajectory
    gains: Tuple[float, float] = (DEFAULT_KP, DEFAULT_KD)

    def control(self, ego: EgoState, t: float, obstacles=()) -> ControlInput:
        return pd_tracking_control(ego, self.trajectory, t, self.gains)

    def positions_at(self, times):
        return self.trajectory.positions_at(times)


@dataclass(frozen=True)
class IdmReference:
    """Longitudinal IDM along a path plus lateral PD toward the path."""

    path: ReferenceTrajectory
    params: IDMParams = field(default_factory=IDMParams)
    gains: Tuple[float, float] = (DEFAULT_KP, DEFAULT_KD)
    ego_shape: ShapeSpec = field(default_factory=ShapeSpec.point)

    def control(self, ego: EgoState, t: float, obstacles: Sequence[ObstacleState] = ()) -> ControlInput:
        kp, kd = self.gains
        proj = project_on_path(self.path.positions, ego.position)
        tx, ty = proj.tangent
        nx, ny = -ty, tx
        v_along = ego.vx * tx + ego.vy * ty
        v_lat = ego.vx * nx + ego.vy * ny
        leader = idm_select_leader(ego, self.path, obstacles)
        if leader is None:
            a_long = idm_acceleration(v_along, None, 0.0, self.params)
        else:
            me = PlacedShape(self.ego_shape, ego.position, math.atan2(ty, tx))
            gap = shape_min_distance(me, leader.placed()).signed_distance
            dv = v_along - (leader.velocity[0] * tx + leader.velocity[1] * ty)
            a_long = idm_acceleration(v_along, gap, dv, self.params)
        a_lat = -kp * proj.lateral - kd * v_lat
        return ControlInput(a_long * tx + a_lat * nx, a_long * ty + a_lat * ny)

    def positions_at(self, times):
        # An IDM rollout has no time-parameterized reference to compare against.
        return None

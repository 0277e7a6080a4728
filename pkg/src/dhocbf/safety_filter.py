"""Minimal-perturbation safety QP over the 2-D acceleration.

The QP ``min ||u - u_ref||^2`` subject to a handful of half-planes and a box
has two decision variables, so its optimum lies in a small finite candidate
set: ``u_ref`` itself, the projection of ``u_ref`` onto one constraint line,
or the intersection of two constraint lines. ``solve_qp2`` enumerates that
set exactly instead of iterating.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from dhocbf.barrier import (
    MODES,
    BarrierParams,
    LinearConstraintRow,
    constraint_row,
    lie_derivatives,
)
from dhocbf.dynamics import ControlInput, EgoState, ObstacleState, ego_placed
from dhocbf.errors import InfeasibleError, ValidationError
from dhocbf.geometry import ShapeSpec, dynamic_safe_distance, shape_min_distance

FEAS_TOL = 1e-9
PARALLEL_TOL = 1e-12
POLICIES = ("slack", "error", "max_brake")

Box = Tuple[Tuple[float, float], Tuple[float, float]]
DEFAULT_BOX: Box = ((-3.0, -3.0), (3.0, 3.0))

__all__ = [
    "DEFAULT_BOX",
    "FilterConfig",
    "LinearConstraintRow",
    "QPResult",
    "box_rows",
    "brute_force_qp",
    "build_rows",
    "filter_control",
    "solve_qp2",
    "solve_relaxed",
]


@dataclass(frozen=True)
class QPResult:
    status: str
    u_star: ControlInput
    active_set: Tuple[str, ...] = ()
    slack: float = 0.0

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


@dataclass(frozen=True)
class FilterConfig:
    params: BarrierParams = field(default_factory=BarrierParams)
    mode: str = "dhocbf"
    box: Box = DEFAULT_BOX
    margin: float = 0.0
    sensory_radius: float = 8.0
    policy: str = "slack"
    rho: float = 1e6

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")
        if self.policy not in POLICIES:
            raise ValidationError(f"unknown infeasibility policy {self.policy!r}")
        (lx, ly), (hx, hy) = self.box
        if not (lx <= hx and ly <= hy):
            raise ValidationError("box lower bound exceeds upper bound")
        if self.margin < 0:
            raise ValidationError("margin must be non-negative")
        if not self.sensory_radius > 0:
            raise ValidationError("sensory radius must be positive")
        if not self.rho > 0:
            raise ValidationError("rho must be positive")


def _validate_box(box):
    (lx, ly), (hx, hy) = box
    vals = (lx, ly, hx, hy)
    if any(math.isnan(v) for v in vals):
        raise ValidationError("box bounds must not be NaN")
    if not (lx <= hx and ly <= hy):
        raise ValidationError("empty box")


def box_rows(box: Box) -> List[LinearConstraintRow]:
    (lx, ly), (hx, hy) = box
    return [
        LinearConstraintRow((1.0, 0.0), hx, "box"),
        LinearConstraintRow((-1.0, 0.0), -lx, "box"),
        LinearConstraintRow((0.0, 1.0), hy, "box"),
        LinearConstraintRow((0.0, -1.0), -ly, "box"),
    ]


def _check_inputs(u_ref, rows):
    ux, uy = u_ref
    if math.isnan(ux) or math.isnan(uy):
        raise ValidationError("u_ref contains NaN")
    for r in rows:
        if math.isnan(r.a[0]) or math.isnan(r.a[1]) or math.isnan(r.b):
            raise ValidationError(f"constraint row {r.source!r} contains NaN")


def _feasible(u, rows, tol=FEAS_TOL) -> bool:
    ux, uy = u
    return all(r.a[0] * ux + r.a[1] * uy - r.b <= tol for r in rows)


def _active(u, rows, tol=1e-7) -> Tuple[str, ...]:
    return tuple(r.source for r in rows if abs(r.residual(u)) <= tol * max(1.0, abs(r.b)))


def _candidates(u_ref, rows):
    rx, ry = u_ref
    yield (rx, ry)
    for r in rows:
        ax, ay = r.a
        nsq = ax * ax + ay * ay
        if nsq == 0.0:
            continue
        excess = (ax * rx + ay * ry - r.b) / nsq
        yield (rx - excess * ax, ry - excess * ay)
    for r1, r2 in itertools.combinations(rows, 2):
        (a11, a12), (a21, a22) = r1.a, r2.a
        det = a11 * a22 - a12 * a21
        if abs(det) < PARALLEL_TOL:
            continue
        yield ((r1.b * a22 - a12 * r2.b) / det, (a11 * r2.b - r1.b * a21) / det)


def solve_qp2(u_ref, rows: Sequence[LinearConstraintRow], box: Box = DEFAULT_BOX) -> QPResult:
    """Exact minimizer of ``||u - u_ref||^2`` over the rows and the box.

    Returns ``status='infeasible'`` (with ``u_star = u_ref``) when no candidate
    satisfies every constraint. Ties are broken toward the lexicographically
    smallest ``(ux, uy)``.
    """
    _check_inputs(u_ref, rows)
    _validate_box(box)
    all_rows = list(rows) + box_rows(box)
    rx, ry = u_ref
    best = None
    for c in _candidates(u_ref, all_rows):
        if not _feasible(c, all_rows):
            continue
        key = ((c[0] - rx) ** 2 + (c[1] - ry) ** 2, c[0], c[1])
        if best is None or key < best:
            best = key
    if best is None:
        return QPResult("infeasible", ControlInput(float(rx), float(ry)))
    u = (best[1], best[2])
    return QPResult("optimal", ControlInput(*u), _active(u, all_rows))


def solve_relaxed(u_ref, rows: Sequence[LinearConstraintRow], box: Box = DEFAULT_BOX, rho: float = 1e6) -> QPResult:
    """Solve the soft-constrained QP with one shared slack.

    minimize ``||u - u_ref||^2 + rho * xi^2`` subject to ``a_i . u <= b_i + xi``,
    ``xi >= 0`` and the hard box. The optimum is found by enumerating active
    sets of up to three constraints in ``(ux, uy, xi)`` and keeping the best
    feasible weighted projection. Each projection is computed in the null
    space of its active rows, so a large ``rho`` does not degrade it.
    """
    _check_inputs(u_ref, rows)
    _validate_box(box)
    cons_a = [(r.a[0], r.a[1], -1.0) for r in rows]
    cons_b = [r.b for r in rows]
    for r in box_rows(box):
        cons_a.append((r.a[0], r.a[1], 0.0))
        cons_b.append(r.b)
    cons_a.append((0.0, 0.0, -1.0))
    cons_b.append(0.0)
    A = np.array(cons_a, dtype=float)
    b = np.array(cons_b, dtype=float)
    w = np.array([1.0, 1.0, rho])
    rx, ry = u_ref
    z_ref = np.array([rx, ry, 0.0])
    tol = FEAS_TOL * np.maximum(1.0, np.abs(b))

    def objective(z):
        return (z[0] - z_ref[0]) ** 2 + (z[1] - z_ref[1]) ** 2 + rho * z[2] ** 2

    best = None
    m = len(b)
    for k in range(0, 4):
        for subset in itertools.combinations(range(m), k):
            if k == 0:
                z0, N = np.zeros(3), np.eye(3)
            else:
                idx = list(subset)
                U, S, Vt = np.linalg.svd(A[idx])
                if S[-1] < 1e-12 * S[0]:
                    continue  # dependent rows; a smaller subset covers this face
                z0 = Vt[:k].T @ ((U.T @ b[idx]) / S)
                N = Vt[k:].T
            z = z0
            if N.shape[1]:
                NW = N.T * w
                z = z0 + N @ np.linalg.solve(NW @ N, NW @ (z_ref - z0))
            if np.all(A @ z - b <= tol):
                key = (objective(z), z[0], z[1])
                if best is None or key < best[0]:
                    best = (key, z)
    if best is None:
        return QPResult("infeasible", ControlInput(float(rx), float(ry)))
    z = best[1]
    u = (float(z[0]), float(z[1]))
    xi = max(float(z[2]), 0.0)
    status = "relaxed" if xi > 0 else "optimal"
    return QPResult(status, ControlInput(*u), _active(u, list(rows) + box_rows(box)), xi)


def brute_force_qp(u_ref, rows: Sequence[LinearConstraintRow], box: Box = DEFAULT_BOX, resolution: float = 1e-3, dense: bool = False) -> QPResult:
    """Best feasible point of a uniform grid over the box.

    Test oracle for :func:`solve_qp2`. The default scans grid columns and, for
    each, picks the grid ``uy`` values nearest the clamped reference inside the
    column's feasible interval, which yields the same point as scoring every
    grid node. ``dense=True`` scores every node explicitly.
    """
    if not resolution > 0:
        raise ValidationError("resolution must be positive")
    (lx, ly), (hx, hy) = box
    nx = int(math.floor((hx - lx) / resolution + 1e-9)) + 1
    ny = int(math.floor((hy - ly) / resolution + 1e-9)) + 1
    xs = lx + resolution * np.arange(nx)
    rx, ry = u_ref
    if dense:
        return _dense_grid(u_ref, rows, xs, ly + resolution * np.arange(ny))

    lo = np.full(nx, ly)
    hi = np.full(nx, hy)
    ok = np.ones(nx, dtype=bool)
    for r in rows:
        ax, ay = r.a
        rhs = r.b - ax * xs
        if ay > 0:
            hi = np.minimum(hi, rhs / ay)
        elif ay < 0:
            lo = np.maximum(lo, rhs / ay)
        else:
            ok &= rhs >= -FEAS_TOL
    # Grid indices of the feasible interval in each column.
    j_lo = np.ceil((lo - ly) / resolution - 1e-9)
    j_hi = np.floor((hi - ly) / resolution + 1e-9)
    j_lo = np.maximum(j_lo, 0)
    j_hi = np.minimum(j_hi, ny - 1)
    ok &= j_lo <= j_hi
    if not ok.any():
        return QPResult("infeasible", ControlInput(float(rx), float(ry)))
    j_ref = np.clip(np.rint((ry - ly) / resolution), j_lo, j_hi)
    ys = ly + resolution * j_ref
    # The rounding-tolerant index bounds may admit a node a hair outside a row.
    for r in rows:
        ok &= r.a[0] * xs + r.a[1] * ys - r.b <= FEAS_TOL
    if not ok.any():
        return QPResult("infeasible", ControlInput(float(rx), float(ry)))
    cost = np.where(ok, (xs - rx) ** 2 + (ys - ry) ** 2, np.inf)
    i = int(np.argmin(cost))
    return QPResult("optimal", ControlInput(float(xs[i]), float(ys[i])))


def _dense_grid(u_ref, rows, xs, ys):
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    ok = np.ones(gx.shape, dtype=bool)
    for r in rows:
        ok &= r.a[0] * gx + r.a[1] * gy - r.b <= FEAS_TOL
    rx, ry = u_ref
    if not ok.any():
        return QPResult("infeasible", ControlInput(float(rx), float(ry)))
    cost = np.where(ok, (gx - rx) ** 2 + (gy - ry) ** 2, np.inf)
    i, j = np.unravel_index(int(np.argmin(cost)), cost.shape)
    return QPResult("optimal", ControlInput(float(gx[i, j]), float(gy[i, j])))


def max_brake(ego: EgoState, box: Box) -> ControlInput:
    """Box corner opposing the current velocity; zero on axes at rest (clamped into the box)."""
    (lx, ly), (hx, hy) = box

    def axis(v, lo, hi):
        if v > 0:
            return lo
        if v < 0:
            return hi
        return min(max(0.0, lo), hi)

    return ControlInput(axis(ego.vx, lx, hx), axis(ego.vy, ly, hy))


@dataclass(frozen=True)
class ObstacleDiagnostics:
    distance: float
    d_safe: float
    h: float
    row: LinearConstraintRow


def diagnose(ego: EgoState, obs: ObstacleState, cfg: FilterConfig, ego_shape: ShapeSpec = None, ego_heading: float = 0.0) -> ObstacleDiagnostics:
    """Surface distance, safe distance, barrier value and constraint row for one obstacle."""
    me = ego_placed(ego, ego_shape or ShapeSpec.point(), ego_heading)
    other = obs.placed()
    pair = shape_min_distance(me, other)
    d_safe = dynamic_safe_distance(me, other, cfg.margin, pair)
    ev = lie_derivatives(ego, obs, d_safe, cfg.params)
    row = constraint_row(ev, cfg.params, cfg.mode, f"{cfg.mode}:{obs.id}")
    return ObstacleDiagnostics(pair.signed_distance, d_safe, ev.h, row)


def build_rows(ego, obstacles, cfg: FilterConfig, ego_shape=None, ego_heading=0.0) -> List[LinearConstraintRow]:
    return [diagnose(ego, o, cfg, ego_shape, ego_heading).row for o in obstacles]


def filter_control(
    u_ref: ControlInput,
    ego: EgoState,
    obstacles: Sequence[ObstacleState],
    cfg: FilterConfig = FilterConfig(),
    ego_shape: ShapeSpec = None,
    ego_heading: float = 0.0,
    rows: Sequence[LinearConstraintRow] = None,
):
    """Minimally modify ``u_ref`` so that every obstacle's barrier row holds.

    ``obstacles`` should already be restricted to the sensory range. Pass
    precomputed ``rows`` to skip rebuilding them.

    Returns:
        (applied control, QPResult)

    Raises:
        InfeasibleError: the QP is infeasible and ``cfg.policy == 'error'``.
    """
    if rows is None:
        rows = build_rows(ego, obstacles, cfg, ego_shape, ego_heading)
    res = solve_qp2(u_ref, rows, cfg.box)
    if res.status == "optimal":
        return res.u_star, res
    if cfg.policy == "error":
        raise InfeasibleError("safety QP infeasible")
    if cfg.policy == "max_brake":
        u = max_brake(ego, cfg.box)
        return u, QPResult("infeasible", u, (), 0.0)
    relaxed = solve_relaxed(u_ref, rows, cfg.box, cfg.rho)
    return relaxed.u_star, relaxed
